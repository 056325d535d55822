//! Near-duplicate removal by feature-vector cosine similarity.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{to_grayscale, Frame};
use crate::model::Clip;

pub const REFERENCE_DIM: usize = 64;
const GRID: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Produces a clip embedding. Implementations must be deterministic.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, frames: &[Frame]) -> Result<FeatureVector>;
}

/// Local indices of the four uniformly spaced keyframes of an `n`-frame clip:
/// `round(i * (n - 1) / 3)` for `i = 0..=3`.
pub fn keyframe_indices(n: u32) -> [u32; 4] {
    let last = n.saturating_sub(1);
    // i * last / 3 never lands on .5, so round-half-up is exact here
    std::array::from_fn(|i| (2 * i as u32 * last + 3) / 6)
}

/// 8x8 block-mean thumbnail of the luma of four keyframes, averaged and
/// L2-normalised. Blank clips map to `e_1`.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReferenceExtractor;

impl FeatureExtractor for ReferenceExtractor {
    fn name(&self) -> &str {
        "reference-blockmean-8x8"
    }

    fn dim(&self) -> usize {
        REFERENCE_DIM
    }

    fn extract(&self, frames: &[Frame]) -> Result<FeatureVector> {
        reference_extract(frames)
    }
}

pub fn reference_extract(frames: &[Frame]) -> Result<FeatureVector> {
    if frames.is_empty() {
        return Err(Error::Parameter("feature extraction needs at least one frame".into()));
    }
    let mut acc = [0f64; REFERENCE_DIM];
    for idx in keyframe_indices(frames.len() as u32) {
        let grid = block_means(&to_grayscale(&frames[idx as usize]));
        for (a, g) in acc.iter_mut().zip(grid) {
            *a += g / 4.0;
        }
    }
    Ok(normalize(acc.to_vec()))
}

/// Block `b` along an axis of length `len` covers `[b*len/8, (b+1)*len/8)`,
/// widened to one pixel when the axis is shorter than the grid.
fn block_span(b: usize, len: usize) -> (usize, usize) {
    let start = (b * len / GRID).min(len - 1);
    let end = ((b + 1) * len / GRID).max(start + 1).min(len);
    (start, end)
}

fn block_means(gray: &Frame) -> [f64; REFERENCE_DIM] {
    let (w, h) = (gray.width as usize, gray.height as usize);
    let mut out = [0f64; REFERENCE_DIM];
    for by in 0..GRID {
        let (y0, y1) = block_span(by, h);
        for bx in 0..GRID {
            let (x0, x1) = block_span(bx, w);
            let sum: u64 = (y0..y1)
                .map(|y| {
                    gray.pixels[y * w + x0..y * w + x1]
                        .iter()
                        .map(|&p| u64::from(p))
                        .sum::<u64>()
                })
                .sum();
            out[by * GRID + bx] = sum as f64 / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

fn normalize(mut v: Vec<f64>) -> FeatureVector {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    FeatureVector(v)
}

pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub clip_id: String,
    pub partner: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupResult {
    /// In visit order: longest first, ties by ascending clip id.
    pub kept: Vec<String>,
    pub removed: Vec<Removal>,
}

impl DedupResult {
    pub fn removal_of(&self, clip_id: &str) -> Option<&Removal> {
        self.removed.iter().find(|r| r.clip_id == clip_id)
    }
}

/// Greedy longest-first selection: a clip survives iff its similarity to
/// every clip kept so far is below `tau`; otherwise it is removed in favour
/// of the first kept clip it matches.
pub fn dedup_group(
    clips: &[Clip],
    features: &HashMap<String, FeatureVector>,
    tau: f64,
) -> Result<DedupResult> {
    for c in clips {
        if !features.contains_key(&c.clip_id) {
            return Err(Error::MissingFeature(c.clip_id.clone()));
        }
    }
    dedup_with(clips, tau, |a, b| cosine_similarity(&features[a], &features[b]))
}

/// The greedy rule of [`dedup_group`] over an arbitrary pairwise similarity.
pub fn dedup_with<F>(clips: &[Clip], tau: f64, mut similarity: F) -> Result<DedupResult>
where
    F: FnMut(&str, &str) -> Result<f64>,
{
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Parameter(format!("tau {tau} outside [0, 1]")));
    }
    let mut order: Vec<&Clip> = clips.iter().collect();
    order.sort_by(|a, b| match b.len().cmp(&a.len()) {
        Ordering::Equal => a.clip_id.cmp(&b.clip_id),
        o => o,
    });

    let mut result = DedupResult::default();
    for clip in order {
        let mut hit = None;
        for kept in &result.kept {
            let sim = similarity(&clip.clip_id, kept)?;
            if sim >= tau {
                hit = Some((kept.clone(), sim));
                break;
            }
        }
        match hit {
            Some((partner, similarity)) => result.removed.push(Removal {
                clip_id: clip.clip_id.clone(),
                partner,
                similarity,
            }),
            None => result.kept.push(clip.clip_id.clone()),
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClipOrigin;

    fn clip(id: &str, len: u32) -> Clip {
        let mut c = Clip::from_parts(id, 0, len, ClipOrigin::SceneCut);
        c.clip_id = id.to_string();
        c
    }

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    #[test]
    fn keyframes() {
        assert_eq!(keyframe_indices(100), [0, 33, 66, 99]);
        assert_eq!(keyframe_indices(30), [0, 10, 19, 29]);
        assert_eq!(keyframe_indices(1), [0, 0, 0, 0]);
        assert_eq!(keyframe_indices(2), [0, 0, 1, 1]);
        assert_eq!(keyframe_indices(3), [0, 1, 1, 2]);
    }

    #[test]
    fn cosine_examples() {
        let v = fv(&[0.3, -2.0, 5.0]);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[h, h])).unwrap();
        assert!((s - h).abs() < 1e-12);
        assert!(matches!(
            cosine_similarity(&fv(&[1.0]), &fv(&[1.0, 0.0])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn blank_clip_maps_to_first_basis_vector() {
        let v = reference_extract(&[Frame::filled(16, 16, 0)]).unwrap();
        assert_eq!(v.0[0], 1.0);
        assert!(v.0[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn small_frames_still_fill_grid() {
        let v = reference_extract(&[Frame::filled(3, 2, 50)]).unwrap();
        assert_eq!(v.dim(), 64);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_removes_shorter() {
        let a = fv(&[1.0, 0.0]);
        let b = fv(&[0.95, (1.0f64 - 0.95 * 0.95).sqrt()]);
        let clips = [clip("B", 80), clip("A", 100)];
        let feats = HashMap::from([("A".to_string(), a), ("B".to_string(), b)]);
        let r = dedup_group(&clips, &feats, 0.9).unwrap();
        assert_eq!(r.kept, vec!["A"]);
        assert_eq!(r.removed[0].partner, "A");
        assert_eq!(r.removed[0].clip_id, "B");
    }

    #[test]
    fn dissimilar_pair_kept() {
        let clips = [clip("A", 10), clip("B", 20)];
        let feats = HashMap::from([
            ("A".to_string(), fv(&[1.0, 0.0])),
            ("B".to_string(), fv(&[0.5, 0.75f64.sqrt()])),
        ]);
        let r = dedup_group(&clips, &feats, 0.9).unwrap();
        assert_eq!(r.kept, vec!["B", "A"]);
        assert!(r.removed.is_empty());
    }

    #[test]
    fn boundary_similarity_removes() {
        let clips = [clip("A", 10), clip("B", 5)];
        let feats = HashMap::from([("A".to_string(), fv(&[1.0, 0.0])), ("B".to_string(), fv(&[1.0, 0.0]))]);
        let r = dedup_group(&clips, &feats, 1.0).unwrap();
        assert_eq!(r.kept, vec!["A"]);
    }

    #[test]
    fn equal_length_tie_keeps_smaller_id() {
        let clips = [clip("b", 10), clip("a", 10)];
        let feats = HashMap::from([("a".to_string(), fv(&[1.0])), ("b".to_string(), fv(&[1.0]))]);
        let r = dedup_group(&clips, &feats, 0.9).unwrap();
        assert_eq!(r.kept, vec!["a"]);
    }

    #[test]
    fn chain_keeps_both_ends() {
        let clips = [clip("C", 60), clip("A", 100), clip("B", 80)];
        let sim = |x: &str, y: &str| {
            let mut p = [x, y];
            p.sort();
            Ok(match p {
                ["A", "B"] => 0.92,
                ["B", "C"] => 0.91,
                ["A", "C"] => 0.5,
                _ => 1.0,
            })
        };
        let r = dedup_with(&clips, 0.9, sim).unwrap();
        assert_eq!(r.kept, vec!["A", "C"]);
        assert_eq!(r.removal_of("B").unwrap().partner, "A");
    }

    #[test]
    fn missing_feature_is_an_error() {
        let r = dedup_group(&[clip("a", 3)], &HashMap::new(), 0.9);
        assert!(matches!(r, Err(Error::MissingFeature(_))));
    }
}
