//! Frame-differencing motion analysis and motion-based re-clipping.
//!
//! Per consecutive frame pair: threshold the absolute luma difference into a
//! binary mask, clean it with a 3x3 opening followed by a 3x3 closing
//! (edge-replicate borders), and score the pair by the fraction of set bits.
//! All mask arithmetic is integer, so profiles are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{to_grayscale, Frame};
use crate::model::{Clip, ClipOrigin, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    /// Row-major, each entry 0 or 1.
    pub bits: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![0; width as usize * height as usize],
        }
    }

    pub fn ones(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![1; width as usize * height as usize],
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|&b| u64::from(b)).sum()
    }
}

/// Bit is set iff `|a - b| > threshold`.
pub fn motion_mask(a: &Frame, b: &Frame, pix_diff_threshold: u8) -> Result<BinaryMask> {
    if a.width != b.width || a.height != b.height || a.channels != 1 || b.channels != 1 {
        return Err(Error::DimensionMismatch(format!(
            "motion_mask needs equal grayscale frames, got {}x{}x{} and {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let bits = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| u8::from(x.abs_diff(y) > pix_diff_threshold))
        .collect();
    Ok(BinaryMask {
        width: a.width,
        height: a.height,
        bits,
    })
}

#[derive(Clone, Copy)]
enum Op {
    Erode,
    Dilate,
}

/// 3x3 min/max filter as two 3-tap passes. With clamped (replicated)
/// borders the square kernel separates exactly.
fn morph3(m: &BinaryMask, op: Op) -> BinaryMask {
    let (w, h) = (m.width as usize, m.height as usize);
    if w == 0 || h == 0 {
        return m.clone();
    }
    let pick = |a: u8, b: u8, c: u8| match op {
        Op::Erode => a & b & c,
        Op::Dilate => a | b | c,
    };
    let mut horiz = vec![0u8; w * h];
    for y in 0..h {
        let row = &m.bits[y * w..(y + 1) * w];
        let out = &mut horiz[y * w..(y + 1) * w];
        for x in 0..w {
            out[x] = pick(row[x.saturating_sub(1)], row[x], row[(x + 1).min(w - 1)]);
        }
    }
    let mut bits = vec![0u8; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1) * w;
        let mid = y * w;
        let down = (y + 1).min(h - 1) * w;
        for x in 0..w {
            bits[mid + x] = pick(horiz[up + x], horiz[mid + x], horiz[down + x]);
        }
    }
    BinaryMask {
        width: m.width,
        height: m.height,
        bits,
    }
}

pub fn erode(m: &BinaryMask) -> BinaryMask {
    morph3(m, Op::Erode)
}

pub fn dilate(m: &BinaryMask) -> BinaryMask {
    morph3(m, Op::Dilate)
}

/// Opening (erode, dilate) to drop speckles, then closing (dilate, erode)
/// to fill pinholes.
pub fn refine_mask(m: &BinaryMask) -> BinaryMask {
    let opened = dilate(&erode(m));
    erode(&dilate(&opened))
}

pub fn motion_score(m: &BinaryMask) -> f64 {
    let n = m.bits.len();
    if n == 0 {
        return 0.0;
    }
    m.count_ones() as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub clip_id: String,
    /// `scores[k]` belongs to clip-local frame pair `(k, k + 1)`.
    pub scores: Vec<f64>,
    pub average: f64,
}

impl MotionProfile {
    pub fn from_scores(clip_id: impl Into<String>, scores: Vec<f64>) -> Self {
        let average = mean(&scores);
        Self {
            clip_id: clip_id.into(),
            scores,
            average,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn pair_score(a: &Frame, b: &Frame, pix_diff_threshold: u8) -> Result<f64> {
    Ok(motion_score(&refine_mask(&motion_mask(a, b, pix_diff_threshold)?)))
}

/// Scores every consecutive pair of the clip's frames.
pub fn motion_profile(clip_id: &str, frames: &[Frame], pix_diff_threshold: u8) -> Result<MotionProfile> {
    if frames.len() < 2 {
        return Err(Error::ClipTooShort {
            clip_id: clip_id.to_string(),
            len: frames.len() as u32,
        });
    }
    let gray: Vec<Frame> = frames.iter().map(to_grayscale).collect();
    let scores = gray
        .windows(2)
        .map(|p| pair_score(&p[0], &p[1], pix_diff_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionProfile::from_scores(clip_id, scores))
}

/// Strictly below the threshold counts as static.
pub fn is_static(profile: &MotionProfile, static_threshold: f64) -> bool {
    profile.average < static_threshold
}

/// Index of the pair holding the peak score when the peak exceeds
/// `peak_threshold` and rises more than `jump_threshold` above both
/// neighbours. Neighbours outside the profile count as 0. Ties on the peak
/// resolve to the earliest pair.
pub fn detect_scene_change(scores: &[f64], peak_threshold: f64, jump_threshold: f64) -> Option<usize> {
    if scores.len() < 3 {
        return None;
    }
    let mut k = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[k] {
            k = i;
        }
    }
    let peak = scores[k];
    let before = if k == 0 { 0.0 } else { scores[k - 1] };
    let after = scores.get(k + 1).copied().unwrap_or(0.0);
    (peak > peak_threshold && peak - before > jump_threshold && peak - after > jump_threshold).then_some(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Static,
    TooShort,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Static => "static",
            DropReason::TooShort => "too_short",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReclipVerdict {
    Keep,
    Split(Clip),
    Drop(DropReason),
}

/// Drops near-static clips, otherwise repeatedly cuts at detected scene
/// changes and keeps the longer side (the earlier one on a tie) until no
/// change remains. Recursion reuses slices of the original profile.
pub fn reclip(clip: &Clip, profile: &MotionProfile, config: &PipelineConfig) -> ReclipVerdict {
    if is_static(profile, config.static_threshold) {
        return ReclipVerdict::Drop(DropReason::Static);
    }
    let (mut lo, mut hi) = (0u32, clip.len());
    let mut scores = &profile.scores[..];
    let mut changed = false;
    while let Some(k) = detect_scene_change(scores, config.peak_threshold, config.jump_threshold) {
        let cut = k as u32 + 1;
        let len = hi - lo;
        if cut >= len - cut {
            hi = lo + cut;
            scores = &scores[..k];
        } else {
            lo += cut;
            scores = &scores[k + 1..];
        }
        changed = true;
        if hi - lo < config.min_clip_frames {
            return ReclipVerdict::Drop(DropReason::TooShort);
        }
    }
    if !changed {
        return ReclipVerdict::Keep;
    }
    match clip.sub_clip(lo, hi, ClipOrigin::Reclip) {
        Ok(c) => ReclipVerdict::Split(c),
        Err(_) => ReclipVerdict::Drop(DropReason::TooShort),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::{synth_frames, SynthKind};

    fn mask(w: u32, h: u32, ones: &[(u32, u32)]) -> BinaryMask {
        let mut m = BinaryMask::zeros(w, h);
        for &(x, y) in ones {
            m.bits[(y * w + x) as usize] = 1;
        }
        m
    }

    fn rect(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> BinaryMask {
        let pts: Vec<_> = (y0..y0 + rh).flat_map(|y| (x0..x0 + rw).map(move |x| (x, y))).collect();
        mask(w, h, &pts)
    }

    #[test]
    fn mask_examples() {
        let a = Frame::filled(4, 4, 0);
        assert_eq!(motion_mask(&a, &a, 25).unwrap(), BinaryMask::zeros(4, 4));
        let b = Frame::filled(4, 4, 255);
        assert_eq!(motion_mask(&a, &b, 25).unwrap(), BinaryMask::ones(4, 4));
        let c = Frame::filled(4, 4, 25);
        assert_eq!(motion_mask(&a, &c, 25).unwrap().count_ones(), 0);
        let d = Frame::filled(4, 4, 26);
        assert_eq!(motion_mask(&a, &d, 25).unwrap().count_ones(), 16);
        assert!(motion_mask(&a, &Frame::filled(4, 3, 0), 25).is_err());
    }

    #[test]
    fn refine_examples() {
        assert_eq!(refine_mask(&BinaryMask::ones(9, 7)), BinaryMask::ones(9, 7));
        assert_eq!(refine_mask(&BinaryMask::zeros(9, 7)), BinaryMask::zeros(9, 7));
        assert_eq!(refine_mask(&mask(10, 10, &[(4, 5)])), BinaryMask::zeros(10, 10));
        let r = rect(32, 32, 10, 8, 8, 16);
        assert_eq!(refine_mask(&r), r);
    }

    #[test]
    fn closing_fills_pinhole() {
        let mut r = rect(20, 20, 4, 4, 10, 10);
        r.bits[(9 * 20 + 9) as usize] = 0;
        assert_eq!(refine_mask(&r), rect(20, 20, 4, 4, 10, 10));
    }

    #[test]
    fn score_examples() {
        assert_eq!(motion_score(&BinaryMask::zeros(8, 8)), 0.0);
        assert_eq!(motion_score(&BinaryMask::ones(8, 8)), 1.0);
    }

    #[test]
    fn moving_square_scores() {
        let (_, frames) = synth_frames(&SynthKind::moving_square(64, 64, 10, 16, 8)).unwrap();
        let p = motion_profile("sq", &frames, 25).unwrap();
        assert_eq!(p.scores, vec![0.0625; 9]);
        assert_eq!(p.average, 0.0625);
        assert!(!is_static(&p, 0.01));
    }

    #[test]
    fn static_and_flip_profiles() {
        let frames = vec![Frame::filled(8, 8, 100); 30];
        let p = motion_profile("s", &frames, 25).unwrap();
        assert_eq!(p.scores, vec![0.0; 29]);
        assert!(is_static(&p, 0.01));

        let mut frames = vec![Frame::filled(8, 8, 0); 10];
        for f in frames.iter_mut().skip(5) {
            *f = Frame::filled(8, 8, 255);
        }
        let p = motion_profile("f", &frames, 25).unwrap();
        assert_eq!(p.scores.iter().filter(|&&s| s == 1.0).count(), 1);
        assert_eq!(p.scores[4], 1.0);
        assert_eq!(p.average, 1.0 / 9.0);

        assert!(matches!(
            motion_profile("x", &frames[..1], 25),
            Err(Error::ClipTooShort { .. })
        ));
    }

    #[test]
    fn static_boundary_is_strict() {
        let p = MotionProfile::from_scores("c", vec![0.01, 0.01]);
        assert!(!is_static(&p, 0.01));
    }

    #[test]
    fn scene_change_rule() {
        assert_eq!(detect_scene_change(&[0.02; 50], 0.5, 0.3), None);
        let mut s = vec![0.02; 99];
        s[40] = 0.9;
        assert_eq!(detect_scene_change(&s, 0.5, 0.3), Some(40));
        s[41] = 0.9;
        assert_eq!(detect_scene_change(&s, 0.5, 0.3), None);
        assert_eq!(detect_scene_change(&[0.9, 0.02], 0.5, 0.3), None);
        assert_eq!(detect_scene_change(&[0.9, 0.02, 0.02], 0.5, 0.3), Some(0));
        assert_eq!(detect_scene_change(&[0.02, 0.02, 0.9], 0.5, 0.3), Some(2));
    }

    fn spiky(n: usize, spikes: &[usize]) -> MotionProfile {
        let mut s = vec![0.0625; n - 1];
        for &k in spikes {
            s[k] = 1.0;
        }
        MotionProfile::from_scores("c", s)
    }

    fn clip100() -> Clip {
        Clip::from_parts("A", 0, 100, ClipOrigin::SceneCut)
    }

    #[test]
    fn reclip_examples() {
        let cfg = PipelineConfig::default();
        let c = clip100();
        let still = MotionProfile::from_scores("c", vec![0.0; 99]);
        assert_eq!(reclip(&c, &still, &cfg), ReclipVerdict::Drop(DropReason::Static));
        assert_eq!(reclip(&c, &spiky(100, &[]), &cfg), ReclipVerdict::Keep);
        match reclip(&c, &spiky(100, &[40]), &cfg) {
            ReclipVerdict::Split(s) => {
                assert_eq!((s.start_frame, s.end_frame), (41, 100));
                assert_eq!(s.origin, ClipOrigin::Reclip);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn reclip_double_spike_keeps_longer_side_each_time() {
        // [0,41) | [41,100) keeps 59 frames; then [41,71) | [71,100) keeps 30
        let cfg = PipelineConfig::default();
        match reclip(&clip100(), &spiky(100, &[40, 70]), &cfg) {
            ReclipVerdict::Split(s) => assert_eq!((s.start_frame, s.end_frame), (41, 71)),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn reclip_drops_short_remainder() {
        let cfg = PipelineConfig::default();
        let c = Clip::from_parts("A", 0, 25, ClipOrigin::SceneCut);
        assert_eq!(reclip(&c, &spiky(25, &[12]), &cfg), ReclipVerdict::Drop(DropReason::TooShort));
    }

    #[test]
    fn reclip_tie_keeps_earlier_segment() {
        let cfg = PipelineConfig::default();
        let c = Clip::from_parts("A", 10, 50, ClipOrigin::SceneCut);
        match reclip(&c, &spiky(40, &[19]), &cfg) {
            ReclipVerdict::Split(s) => assert_eq!((s.start_frame, s.end_frame), (10, 30)),
            v => panic!("{v:?}"),
        }
    }
}
