//! Content-change scene cutting.
//!
//! A cut lands on frame `k + 1` whenever the mean absolute luma difference
//! between frames `k` and `k + 1` exceeds the cut threshold. A cut that would
//! leave fewer than `min_clip_frames` frames since the previous cut (or since
//! frame 0) is suppressed, and the earlier cut wins.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{to_grayscale, Frame, VideoReader};
use crate::model::{Clip, ClipOrigin, VideoAsset};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutList {
    pub asset_id: String,
    pub cut_points: Vec<u32>,
}

/// Mean of `|a - b| / 255` over all pixels of two grayscale frames.
pub fn content_diff(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_shape(b) || a.channels != 1 {
        return Err(Error::DimensionMismatch(format!(
            "content_diff needs equal grayscale frames, got {}x{}x{} and {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let total: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| u64::from(x.abs_diff(y)))
        .sum();
    Ok(total as f64 / (a.pixel_count() as f64 * 255.0))
}

/// Incremental cut detector; feed frames in order.
#[derive(Debug)]
pub struct CutDetector {
    cut_threshold: f64,
    min_clip_frames: u32,
    prev: Option<Frame>,
    next_index: u32,
    last_cut: u32,
    cuts: Vec<u32>,
}

impl CutDetector {
    pub fn new(cut_threshold: f64, min_clip_frames: u32) -> Result<Self> {
        if !(cut_threshold > 0.0 && cut_threshold <= 1.0) {
            return Err(Error::Parameter(format!("cut threshold {cut_threshold} outside (0, 1]")));
        }
        Ok(Self {
            cut_threshold,
            min_clip_frames,
            prev: None,
            next_index: 0,
            last_cut: 0,
            cuts: Vec::new(),
        })
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        let gray = to_grayscale(frame);
        if let Some(prev) = &self.prev {
            let candidate = self.next_index;
            if content_diff(prev, &gray)? > self.cut_threshold
                && candidate - self.last_cut >= self.min_clip_frames
            {
                self.cuts.push(candidate);
                self.last_cut = candidate;
            }
        }
        self.prev = Some(gray);
        self.next_index += 1;
        Ok(())
    }

    pub fn finish(self, asset_id: &str) -> CutList {
        CutList {
            asset_id: asset_id.to_string(),
            cut_points: self.cuts,
        }
    }
}

pub fn detect_cuts_in_frames<'a>(
    asset_id: &str,
    frames: impl IntoIterator<Item = &'a Frame>,
    cut_threshold: f64,
    min_clip_frames: u32,
) -> Result<CutList> {
    let mut det = CutDetector::new(cut_threshold, min_clip_frames)?;
    for f in frames {
        det.push(f)?;
    }
    Ok(det.finish(asset_id))
}

/// Streams the video from disk; only two frames are held at a time.
pub fn detect_cuts(
    asset: &VideoAsset,
    path: impl AsRef<Path>,
    cut_threshold: f64,
    min_clip_frames: u32,
) -> Result<CutList> {
    let mut reader = VideoReader::open(path)?;
    let mut det = CutDetector::new(cut_threshold, min_clip_frames)?;
    for frame in reader.frames() {
        det.push(&frame?)?;
    }
    Ok(det.finish(&asset.asset_id))
}

/// Every segment `[start, end)` between consecutive cut points, including
/// ones too short to become clips.
pub fn segments(asset: &VideoAsset, cuts: &CutList) -> Result<Vec<(u32, u32)>> {
    let mut bounds = Vec::with_capacity(cuts.cut_points.len() + 2);
    bounds.push(0);
    for &c in &cuts.cut_points {
        if c == 0 || c >= asset.frame_count || c <= *bounds.last().unwrap() {
            return Err(Error::Parameter(format!(
                "cut list {:?} invalid for {} frames",
                cuts.cut_points, asset.frame_count
            )));
        }
        bounds.push(c);
    }
    bounds.push(asset.frame_count);
    Ok(bounds.windows(2).map(|w| (w[0], w[1])).collect())
}

/// Partitions `[0, frame_count)` at the cut points. Segments shorter than
/// `min_clip_frames` are dropped, never merged into a neighbour.
pub fn split_into_clips(asset: &VideoAsset, cuts: &CutList, min_clip_frames: u32) -> Result<Vec<Clip>> {
    segments(asset, cuts)?
        .into_iter()
        .filter(|(s, e)| e - s >= min_clip_frames)
        .map(|(s, e)| Clip::new(asset, s, e, ClipOrigin::SceneCut))
        .collect()
}
