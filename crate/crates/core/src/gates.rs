//! Aesthetic and text-overlay gates.
//!
//! Both gates sit behind adapter traits so a real model or detector can be
//! plugged in. The reference scorer and the sidecar detector make the
//! pipeline runnable offline.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{encode_frame, to_grayscale, Frame};
use crate::model::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::Format(format!("box {w}x{h} must have positive size")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }
}

/// Scores clip keyframes on a 0-10 scale.
pub trait AestheticScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, keyframes: &[Frame]) -> Result<f64>;
}

/// Finds text regions in a single keyframe. `frame_index` is the absolute
/// index within the asset.
pub trait TextDetector: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, asset_id: &str, frame_index: u32, keyframe: &Frame) -> Result<Vec<BoundingBox>>;
}

/// Heuristic scorer built from luma contrast, brightness balance and
/// chroma spread.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReferenceAestheticScorer;

impl AestheticScorer for ReferenceAestheticScorer {
    fn name(&self) -> &str {
        "reference-contrast-brightness-saturation"
    }

    fn score(&self, keyframes: &[Frame]) -> Result<f64> {
        reference_aesthetic_score(keyframes)
    }
}

/// Returns the same score for every clip.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl AestheticScorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _keyframes: &[Frame]) -> Result<f64> {
        Ok(self.0.clamp(0.0, 10.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

pub fn frame_stats(frame: &Frame) -> FrameStats {
    let gray = to_grayscale(frame);
    let n = gray.pixel_count() as u128;
    let (sum, sumsq) = gray.pixels.iter().fold((0u128, 0u128), |(s, q), &p| {
        let p = u128::from(p);
        (s + p, q + p * p)
    });
    let mean = sum as f64 / n as f64;
    // n * sumsq - sum^2 is exact in integers, so the variance never goes negative
    let var = (n * sumsq - sum * sum) as f64 / (n * n) as f64;
    let saturation = if frame.channels == 3 {
        let spread: u64 = frame
            .pixels
            .chunks_exact(3)
            .map(|p| u64::from(p[0].max(p[1]).max(p[2]) - p[0].min(p[1]).min(p[2])))
            .sum();
        spread as f64 / (n as f64 * 255.0)
    } else {
        0.0
    };
    FrameStats {
        brightness: mean / 255.0,
        contrast: var.sqrt() / 255.0,
        saturation,
    }
}

pub fn frame_aesthetic(stats: FrameStats) -> f64 {
    let contrast = 0.5 * (stats.contrast / 0.25).min(1.0);
    let exposure = 0.3 * (1.0 - 2.0 * (stats.brightness - 0.5).abs());
    let colour = 0.2 * (stats.saturation / 0.5).min(1.0);
    10.0 * (contrast + exposure + colour).clamp(0.0, 1.0)
}

/// Mean of the per-keyframe scores, rounded to four decimals.
pub fn reference_aesthetic_score(keyframes: &[Frame]) -> Result<f64> {
    if keyframes.is_empty() {
        return Err(Error::Parameter("aesthetic scoring needs at least one keyframe".into()));
    }
    let total: f64 = keyframes.iter().map(|f| frame_aesthetic(frame_stats(f))).sum();
    let mean = total / keyframes.len() as f64;
    Ok(((mean * 10_000.0).round() / 10_000.0).clamp(0.0, 10.0))
}

/// Fails strictly below the cutoff.
pub fn aesthetic_gate(score: f64, cutoff: f64) -> Verdict {
    if score < cutoff {
        Verdict::Fail
    } else {
        Verdict::Pass
    }
}

/// Passes when every box is strictly smaller than `area_limit`.
pub fn ocr_gate(boxes: &[BoundingBox], area_limit: u64) -> Verdict {
    if boxes.iter().all(|b| b.area() < area_limit) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

pub fn largest_box_area(boxes: &[BoundingBox]) -> u64 {
    boxes.iter().map(BoundingBox::area).max().unwrap_or(0)
}

/// Detector backed by a hand-written annotation file with one
/// `asset_id frame_index x y w h` record per line.
#[derive(Debug, Clone, Default)]
pub struct SidecarTextDetector {
    boxes: HashMap<(String, u32), Vec<BoundingBox>>,
}

impl SidecarTextDetector {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut boxes: HashMap<(String, u32), Vec<BoundingBox>> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |why: &str| Error::Format(format!("sidecar line {}: {why}: '{line}'", lineno + 1));
            if fields.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let nums = fields[1..]
                .iter()
                .map(|f| f.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("non-integer field"))?;
            let b = BoundingBox::new(nums[1], nums[2], nums[3], nums[4]).map_err(|_| bad("empty box"))?;
            boxes.entry((fields[0].to_string(), nums[0])).or_default().push(b);
        }
        Ok(Self { boxes })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, asset_id: &str, frame_index: u32, b: BoundingBox) {
        self.boxes.entry((asset_id.to_string(), frame_index)).or_default().push(b);
    }

    pub fn to_text(&self) -> String {
        let mut keys: Vec<_> = self.boxes.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            for b in &self.boxes[k] {
                out.push_str(&format!("{} {} {} {} {} {}\n", k.0, k.1, b.x, b.y, b.w, b.h));
            }
        }
        out
    }
}

impl TextDetector for SidecarTextDetector {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn detect(&self, asset_id: &str, frame_index: u32, keyframe: &Frame) -> Result<Vec<BoundingBox>> {
        let Some(boxes) = self.boxes.get(&(asset_id.to_string(), frame_index)) else {
            return Ok(Vec::new());
        };
        for b in boxes {
            if !b.fits(keyframe.width, keyframe.height) {
                return Err(Error::Format(format!(
                    "sidecar box {b:?} for {asset_id}@{frame_index} exceeds {}x{} frame",
                    keyframe.width, keyframe.height
                )));
            }
        }
        Ok(boxes.clone())
    }
}

static SCRATCH_SEQ: AtomicU64 = AtomicU64::new(0);

/// Writes the keyframe as a one-frame RVID file that lives until dropped.
struct ScratchFrame(PathBuf);

impl ScratchFrame {
    fn write(frame: &Frame) -> Result<Self> {
        let n = SCRATCH_SEQ.fetch_add(1, Ordering::Relaxed);
        let path = std::env::temp_dir().join(format!("vidcurate-{}-{n}.rvid", std::process::id()));
        std::fs::write(&path, encode_frame(frame)?).map_err(|e| Error::io(&path, e))?;
        Ok(Self(path))
    }
}

impl Drop for ScratchFrame {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn run_template(template: &str, frame: &Path, asset_id: &str, frame_index: u32) -> Result<String> {
    let cmd = template
        .replace("{frame}", &frame.display().to_string())
        .replace("{asset}", asset_id)
        .replace("{index}", &frame_index.to_string());
    let out = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| Error::Command(format!("{cmd}: {e}")))?;
    if !out.status.success() {
        return Err(Error::Command(format!(
            "{cmd}: exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    String::from_utf8(out.stdout).map_err(|_| Error::Command(format!("{cmd}: non-UTF-8 output")))
}

/// Shells out once per keyframe. The template may use `{frame}` (path of a
/// one-frame RVID file), `{asset}` and `{index}`; the command prints one
/// `x y w h` box per line.
#[derive(Debug, Clone)]
pub struct CommandTextDetector {
    pub template: String,
}

impl TextDetector for CommandTextDetector {
    fn name(&self) -> &str {
        "command"
    }

    fn detect(&self, asset_id: &str, frame_index: u32, keyframe: &Frame) -> Result<Vec<BoundingBox>> {
        let scratch = ScratchFrame::write(keyframe)?;
        let stdout = run_template(&self.template, &scratch.0, asset_id, frame_index)?;
        parse_box_lines(&stdout, keyframe)
    }
}

pub fn parse_box_lines(text: &str, frame: &Frame) -> Result<Vec<BoundingBox>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let n: Vec<u32> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("bad box line '{line}'")))?;
            if n.len() != 4 {
                return Err(Error::Format(format!("bad box line '{line}'")));
            }
            let b = BoundingBox::new(n[0], n[1], n[2], n[3])?;
            if !b.fits(frame.width, frame.height) {
                return Err(Error::Format(format!("box {b:?} outside frame")));
            }
            Ok(b)
        })
        .collect()
}

/// Shells out once per keyframe; the command prints a single score.
#[derive(Debug, Clone)]
pub struct CommandAestheticScorer {
    pub template: String,
}

impl AestheticScorer for CommandAestheticScorer {
    fn name(&self) -> &str {
        "command"
    }

    fn score(&self, keyframes: &[Frame]) -> Result<f64> {
        if keyframes.is_empty() {
            return Err(Error::Parameter("aesthetic scoring needs at least one keyframe".into()));
        }
        let mut total = 0.0;
        for (i, f) in keyframes.iter().enumerate() {
            let scratch = ScratchFrame::write(f)?;
            let out = run_template(&self.template, &scratch.0, "", i as u32)?;
            let s: f64 = out
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad score output '{}'", out.trim())))?;
            total += s;
        }
        Ok((total / keyframes.len() as f64).clamp(0.0, 10.0))
    }
}
