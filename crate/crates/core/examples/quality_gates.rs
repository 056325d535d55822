//! Aesthetic and text-area gates on a few synthetic frames.

use vidcurate::frame_io::Frame;
use vidcurate::gates::{aesthetic_gate, ocr_gate, reference_aesthetic_score, BoundingBox};
use vidcurate::PipelineConfig;

fn checker(lo: u8, hi: u8) -> Frame {
    let px = (0..64 * 64).map(|i| if (i % 64 / 8 + i / 64 / 8) % 2 == 0 { lo } else { hi }).collect();
    Frame::new(64, 64, 1, px).expect("valid frame")
}

fn main() -> vidcurate::Result<()> {
    let cfg = PipelineConfig::default();
    for (name, frame) in [
        ("black", Frame::filled(64, 64, 0)),
        ("grey", Frame::filled(64, 64, 128)),
        ("checker", checker(64, 192)),
        ("hard checker", checker(0, 255)),
    ] {
        let score = reference_aesthetic_score(&[frame.clone(), frame.clone(), frame.clone(), frame])?;
        println!("{name:<13} aesthetic {score:.4} -> {:?}", aesthetic_gate(score, cfg.aesthetic_cutoff));
    }
    for (w, h) in [(2857, 7), (2500, 8), (100, 100)] {
        let b = BoundingBox::new(0, 0, w, h)?;
        println!("text box {w}x{h} = {} px -> {:?}", b.area(), ocr_gate(&[b], cfg.ocr_area_limit));
    }
    Ok(())
}
