//! Motion profiling and re-clipping on corpus fixtures: a clip with one
//! abrupt change, one with two, and a completely still one.

use vidcurate::fixtures::corpus_plans;
use vidcurate::motion::{motion_profile, reclip, ReclipVerdict};
use vidcurate::PipelineConfig;

fn main() -> vidcurate::Result<()> {
    let cfg = PipelineConfig::default();
    for plan in corpus_plans().into_iter().filter(|p| ["a11", "a13", "a14"].contains(&p.asset_id.as_str())) {
        let (header, frames) = plan.video.render()?;
        let asset = header.to_asset(&plan.asset_id, format!("{}.rvid", plan.asset_id).as_ref())?;
        let clip = asset.full_clip()?;
        let profile = motion_profile(&clip.clip_id, &frames, cfg.pix_diff_threshold)?;
        let peaks: Vec<usize> = (0..profile.scores.len()).filter(|&k| profile.scores[k] > cfg.peak_threshold).collect();
        let verdict = match reclip(&clip, &profile, &cfg) {
            ReclipVerdict::Keep => "keep".to_string(),
            ReclipVerdict::Split(c) => format!("replace with [{}, {})", c.start_frame, c.end_frame),
            ReclipVerdict::Drop(r) => format!("drop ({})", r.as_str()),
        };
        println!("{:<8} avg {:.4} peaks at pairs {:?}: {verdict}", clip.clip_id, profile.average, peaks);
    }
    Ok(())
}
