//! Near-duplicate removal: three clips whose embeddings form a chain
//! A ~ B ~ C with A and C dissimilar. The longest clip wins each conflict.

use std::collections::HashMap;

use vidcurate::dedup::{cosine_similarity, dedup_group, FeatureVector};
use vidcurate::{Clip, ClipOrigin, Fps, VideoAsset};

fn main() -> vidcurate::Result<()> {
    let asset = VideoAsset::new("demo", "demo.rvid", 64, 64, Fps::new(30, 1)?, 300, 1)?;
    let a = Clip::new(&asset, 0, 90, ClipOrigin::SceneCut)?;
    let b = Clip::new(&asset, 90, 160, ClipOrigin::SceneCut)?;
    let c = Clip::new(&asset, 160, 220, ClipOrigin::SceneCut)?;
    let at = |deg: f64| FeatureVector(vec![deg.to_radians().cos(), deg.to_radians().sin()]);
    let features: HashMap<String, FeatureVector> = [
        (a.clip_id.clone(), at(0.0)),
        (b.clip_id.clone(), at(20.0)),
        (c.clip_id.clone(), at(40.0)),
    ]
    .into();
    for (x, y) in [(&a, &b), (&b, &c), (&a, &c)] {
        let s = cosine_similarity(&features[&x.clip_id], &features[&y.clip_id])?;
        println!("sim({}, {}) = {s:.4}", x.clip_id, y.clip_id);
    }
    let result = dedup_group(&[a, b, c], &features, 0.9)?;
    println!("kept: {:?}", result.kept);
    for r in &result.removed {
        println!("removed {} (duplicate of {}, {:.4})", r.clip_id, r.partner, r.similarity);
    }
    Ok(())
}
