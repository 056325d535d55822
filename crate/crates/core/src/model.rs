//! Shared domain types: assets, clips, stage verdicts, pipeline configuration
//! and broker tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One step of the curation pipeline. Each stage owns a broker queue of the
/// same name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Clip,
    Dedup,
    Aesthetic,
    Ocr,
    Motion,
    Caption,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Clip,
        Stage::Dedup,
        Stage::Aesthetic,
        Stage::Ocr,
        Stage::Motion,
        Stage::Caption,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Clip => "clip",
            Stage::Dedup => "dedup",
            Stage::Aesthetic => "aesthetic",
            Stage::Ocr => "ocr",
            Stage::Motion => "motion",
            Stage::Caption => "caption",
        }
    }

    /// Queue name the stage's workers consume from.
    pub fn queue(self) -> &'static str {
        self.as_str()
    }

    /// Stages whose tasks name a whole asset rather than a single clip.
    pub fn is_asset_level(self) -> bool {
        matches!(self, Stage::Clip | Stage::Dedup)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown stage '{s}'")))
    }
}

/// Parses a comma-separated stage list such as `clip,dedup,ocr,caption`.
pub fn parse_stage_list(s: &str) -> Result<Vec<Stage>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(Stage::from_str)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Split,
}

impl Verdict {
    pub fn advances(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Split)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Split => "split",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipOrigin {
    SceneCut,
    Reclip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidAsset(format!("fps {num}/{den} must be positive")));
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

/// A source video registered with the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAsset {
    pub asset_id: String,
    pub source_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub fps: Fps,
    pub frame_count: u32,
    pub channels: u8,
}

impl VideoAsset {
    pub fn new(
        asset_id: impl Into<String>,
        source_path: impl Into<PathBuf>,
        width: u32,
        height: u32,
        fps: Fps,
        frame_count: u32,
        channels: u8,
    ) -> Result<Self> {
        let asset = Self {
            asset_id: asset_id.into(),
            source_path: source_path.into(),
            width,
            height,
            fps,
            frame_count,
            channels,
        };
        asset.validate()?;
        Ok(asset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.asset_id.is_empty() {
            return Err(Error::InvalidAsset("empty asset id".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidAsset(format!(
                "{}: dimensions {}x{} must be positive",
                self.asset_id, self.width, self.height
            )));
        }
        if self.frame_count == 0 {
            return Err(Error::InvalidAsset(format!("{}: no frames", self.asset_id)));
        }
        if !matches!(self.channels, 1 | 3) {
            return Err(Error::InvalidAsset(format!(
                "{}: unsupported channel count {}",
                self.asset_id, self.channels
            )));
        }
        Ok(())
    }

    pub fn full_clip(&self) -> Result<Clip> {
        Clip::new(self, 0, self.frame_count, ClipOrigin::SceneCut)
    }
}

/// A half-open frame range `[start_frame, end_frame)` of an asset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub asset_id: String,
    pub start_frame: u32,
    pub end_frame: u32,
    pub origin: ClipOrigin,
}

impl Clip {
    /// Builds a clip whose id is `asset_id:start-end`, so the same range
    /// always maps to the same id.
    pub fn new(asset: &VideoAsset, start: u32, end: u32, origin: ClipOrigin) -> Result<Self> {
        if start >= end || end > asset.frame_count {
            return Err(Error::InvalidRange {
                asset_id: asset.asset_id.clone(),
                start,
                end,
                frame_count: asset.frame_count,
            });
        }
        Ok(Self::from_parts(&asset.asset_id, start, end, origin))
    }

    pub(crate) fn from_parts(asset_id: &str, start: u32, end: u32, origin: ClipOrigin) -> Self {
        Self {
            clip_id: clip_id(asset_id, start, end),
            asset_id: asset_id.to_string(),
            start_frame: start,
            end_frame: end,
            origin,
        }
    }

    pub fn len(&self) -> u32 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sub-range in clip-local frame indices, yielding a clip in the same
    /// asset coordinates.
    pub fn sub_clip(&self, local_start: u32, local_end: u32, origin: ClipOrigin) -> Result<Self> {
        if local_start >= local_end || local_end > self.len() {
            return Err(Error::InvalidRange {
                asset_id: self.asset_id.clone(),
                start: self.start_frame + local_start,
                end: self.start_frame + local_end,
                frame_count: self.end_frame,
            });
        }
        Ok(Self::from_parts(
            &self.asset_id,
            self.start_frame + local_start,
            self.start_frame + local_end,
            origin,
        ))
    }
}

pub fn clip_id(asset_id: &str, start: u32, end: u32) -> String {
    format!("{asset_id}:{start}-{end}")
}

/// Splits a clip id back into `(asset_id, start, end)`.
pub fn parse_clip_id(id: &str) -> Option<(&str, u32, u32)> {
    let (asset, range) = id.rsplit_once(':')?;
    let (start, end) = range.split_once('-')?;
    Some((asset, start.parse().ok()?, end.parse().ok()?))
}

/// Journal record of one stage's verdict for one clip (or, for the clip
/// stage summary, one asset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub clip_id: String,
    pub stage: Stage,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default)]
    pub detail: BTreeMap<String, String>,
    pub wall_time: f64,
    pub worker_id: String,
    pub timestamp: u64,
}

/// Detail key that marks the asset-level summary written by the clip stage.
pub const DETAIL_CLIPS: &str = "clips";
/// Detail key holding the id of the sub-clip that replaces a split clip.
pub const DETAIL_REPLACEMENT: &str = "replacement";
pub const DETAIL_PARTNER: &str = "partner";
pub const DETAIL_ERROR: &str = "error";
pub const DETAIL_CAPTION: &str = "caption";
pub const DETAIL_REASON: &str = "reason";

impl StageOutcome {
    pub fn new(clip_id: impl Into<String>, stage: Stage, verdict: Verdict) -> Self {
        Self {
            clip_id: clip_id.into(),
            stage,
            verdict,
            score: None,
            detail: BTreeMap::new(),
            wall_time: 0.0,
            worker_id: String::new(),
            timestamp: 0,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_detail(mut self, key: &str, value: impl Into<String>) -> Self {
        self.detail.insert(key.to_string(), value.into());
        self
    }

    /// True for the per-asset record the clip stage writes after emitting
    /// all of an asset's clips.
    pub fn is_asset_summary(&self) -> bool {
        self.stage == Stage::Clip && self.detail.contains_key(DETAIL_CLIPS)
    }

    pub fn summary_clips(&self) -> Vec<String> {
        self.detail
            .get(DETAIL_CLIPS)
            .map(|s| {
                s.split(',')
                    .filter(|c| !c.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }
}

pub const DEFAULT_STAGE_ORDER: [Stage; 6] = Stage::ALL;

fn default_stage_order() -> Vec<Stage> {
    DEFAULT_STAGE_ORDER.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub tau_dup: f64,
    pub aesthetic_cutoff: f64,
    pub ocr_area_limit: u64,
    pub pix_diff_threshold: u8,
    pub static_threshold: f64,
    pub peak_threshold: f64,
    pub jump_threshold: f64,
    pub cut_threshold: f64,
    pub min_clip_frames: u32,
    #[serde(default = "default_stage_order")]
    pub stage_order: Vec<Stage>,
    pub workers: BTreeMap<Stage, usize>,
    pub prefetch: BTreeMap<Stage, usize>,
    pub max_attempts: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_dup: 0.9,
            aesthetic_cutoff: 4.5,
            ocr_area_limit: 20_000,
            pix_diff_threshold: 25,
            static_threshold: 0.01,
            peak_threshold: 0.5,
            jump_threshold: 0.3,
            cut_threshold: 0.12,
            min_clip_frames: 15,
            stage_order: default_stage_order(),
            workers: BTreeMap::new(),
            prefetch: BTreeMap::new(),
            max_attempts: 3,
        }
    }
}

impl PipelineConfig {
    pub fn workers_for(&self, stage: Stage) -> usize {
        self.workers.get(&stage).copied().unwrap_or(1)
    }

    pub fn prefetch_for(&self, stage: Stage) -> usize {
        self.prefetch.get(&stage).copied().unwrap_or(1).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("tau_dup", self.tau_dup)?;
        unit("static_threshold", self.static_threshold)?;
        unit("peak_threshold", self.peak_threshold)?;
        unit("jump_threshold", self.jump_threshold)?;
        if !(self.cut_threshold > 0.0 && self.cut_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "cut_threshold = {} outside (0, 1]",
                self.cut_threshold
            )));
        }
        if !(0.0..=10.0).contains(&self.aesthetic_cutoff) {
            return Err(Error::Config(format!(
                "aesthetic_cutoff = {} outside [0, 10]",
                self.aesthetic_cutoff
            )));
        }
        if self.min_clip_frames == 0 {
            return Err(Error::Config("min_clip_frames must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be positive".into()));
        }
        validate_stage_order(&self.stage_order)
    }
}

/// A usable order starts with `clip`, ends with `caption`, repeats nothing,
/// and places `dedup` (which works on a whole asset) directly after `clip`.
pub fn validate_stage_order(order: &[Stage]) -> Result<()> {
    if order.first() != Some(&Stage::Clip) {
        return Err(Error::Config("stage_order must begin with clip".into()));
    }
    if order.last() != Some(&Stage::Caption) {
        return Err(Error::Config("stage_order must end with caption".into()));
    }
    for (i, s) in order.iter().enumerate() {
        if order[..i].contains(s) {
            return Err(Error::Config(format!("stage {s} listed twice")));
        }
    }
    if let Some(pos) = order.iter().position(|s| *s == Stage::Dedup) {
        if pos != 1 {
            return Err(Error::Config("dedup must directly follow clip".into()));
        }
    }
    Ok(())
}

/// A broker message: one subject (asset id for asset-level stages, clip id
/// otherwise) addressed to one stage queue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub subject: String,
    pub target_stage: Stage,
    pub attempt: u32,
}

impl Task {
    pub fn new(task_id: impl Into<String>, subject: impl Into<String>, target_stage: Stage) -> Self {
        Self {
            task_id: task_id.into(),
            subject: subject.into(),
            target_stage,
            attempt: 1,
        }
    }
}
