//! Detects scene cuts in a synthetic three-scene video and splits it into
//! clips, dropping the scene that is too short to stand alone.

use vidcurate::frame_io::{synth_video, Scene, SynthKind};
use vidcurate::scene::{detect_cuts, split_into_clips};
use vidcurate::PipelineConfig;

fn main() -> vidcurate::Result<()> {
    let dir = std::env::temp_dir().join("vidcurate-scene-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("scenes.rvid");
    let kind = SynthKind::SceneSequence {
        width: 64,
        height: 48,
        scenes: vec![
            Scene { luma: 30, frames: 45 },
            Scene { luma: 220, frames: 8 },
            Scene { luma: 120, frames: 60 },
            Scene { luma: 10, frames: 30 },
        ],
    };
    let asset = synth_video(&kind, "scenes", &path)?;
    let cfg = PipelineConfig::default();
    let cuts = detect_cuts(&asset, &path, cfg.cut_threshold, cfg.min_clip_frames)?;
    println!("cut points: {:?}", cuts.cut_points);
    for clip in split_into_clips(&asset, &cuts, cfg.min_clip_frames)? {
        println!("{:<20} frames [{}, {}) len {}", clip.clip_id, clip.start_frame, clip.end_frame, clip.len());
    }
    Ok(())
}
