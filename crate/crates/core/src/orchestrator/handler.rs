//! Stage computations run by workers.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crate::caption::{CaptionRequest, Captioner, LocalCaptioner};
use crate::dedup::{dedup_group, keyframe_indices, FeatureExtractor, ReferenceExtractor};
use crate::error::{Error, Result};
use crate::frame_io::{Frame, VideoReader};
use crate::gates::{
    aesthetic_gate, largest_box_area, ocr_gate, AestheticScorer, ReferenceAestheticScorer,
    SidecarTextDetector, TextDetector,
};
use crate::model::{
    parse_clip_id, Clip, ClipOrigin, PipelineConfig, Stage, StageOutcome, Verdict, VideoAsset,
    DETAIL_CAPTION, DETAIL_CLIPS, DETAIL_ERROR, DETAIL_PARTNER, DETAIL_REASON, DETAIL_REPLACEMENT,
};
use crate::motion::{motion_profile, reclip, ReclipVerdict};
use crate::orchestrator::journal::Journal;
use crate::scene::{detect_cuts, segments};

/// The computation behind one stage. `subject` is an asset id for
/// asset-level stages and a clip id otherwise.
pub trait StageHandler: Send + Sync {
    /// Records already journaled for a finished task, or `None` when the task
    /// still has work to do.
    fn recorded(&self, stage: Stage, subject: &str, journal: &Journal) -> Option<Vec<StageOutcome>> {
        journal.get(subject, stage).map(|r| vec![r])
    }

    /// Runs the stage; the returned records are appended in order.
    fn handle(&self, stage: Stage, subject: &str, journal: &Journal) -> Result<Vec<StageOutcome>>;

    /// Record written when a task fails permanently or runs out of attempts.
    fn failure(&self, stage: Stage, subject: &str, error: &Error) -> StageOutcome {
        StageOutcome::new(subject, stage, Verdict::Fail).with_detail(DETAIL_ERROR, error.to_string())
    }
}

/// The six curation stages over RVID assets on disk.
pub struct CurationHandler {
    config: PipelineConfig,
    assets: HashMap<String, VideoAsset>,
    extractor: Box<dyn FeatureExtractor>,
    aesthetic: Box<dyn AestheticScorer>,
    text: Box<dyn TextDetector>,
    captioner: Box<dyn Captioner>,
    computations: AtomicUsize,
}

impl CurationHandler {
    pub fn new(config: PipelineConfig, assets: impl IntoIterator<Item = VideoAsset>) -> Self {
        Self {
            config,
            assets: assets.into_iter().map(|a| (a.asset_id.clone(), a)).collect(),
            extractor: Box::new(ReferenceExtractor),
            aesthetic: Box::new(ReferenceAestheticScorer),
            text: Box::new(SidecarTextDetector::empty()),
            captioner: Box::new(LocalCaptioner::default()),
            computations: AtomicUsize::new(0),
        }
    }

    pub fn with_extractor(mut self, e: impl FeatureExtractor + 'static) -> Self {
        self.extractor = Box::new(e);
        self
    }

    pub fn with_aesthetic(mut self, s: impl AestheticScorer + 'static) -> Self {
        self.aesthetic = Box::new(s);
        self
    }

    pub fn with_text_detector(mut self, d: impl TextDetector + 'static) -> Self {
        self.text = Box::new(d);
        self
    }

    pub fn with_captioner(mut self, c: impl Captioner + 'static) -> Self {
        self.captioner = Box::new(c);
        self
    }

    pub fn with_boxed_captioner(mut self, c: Box<dyn Captioner>) -> Self {
        self.captioner = c;
        self
    }

    pub fn with_boxed_aesthetic(mut self, s: Box<dyn AestheticScorer>) -> Self {
        self.aesthetic = s;
        self
    }

    pub fn with_boxed_text_detector(mut self, d: Box<dyn TextDetector>) -> Self {
        self.text = d;
        self
    }

    /// Number of `handle` calls so far, including failed ones.
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::SeqCst)
    }

    fn asset(&self, asset_id: &str) -> Result<&VideoAsset> {
        self.assets
            .get(asset_id)
            .ok_or_else(|| Error::UnknownAsset(asset_id.to_string()))
    }

    fn clip(&self, clip_id: &str) -> Result<(&VideoAsset, Clip)> {
        let (asset_id, start, end) = parse_clip_id(clip_id)
            .ok_or_else(|| Error::Parameter(format!("malformed clip id '{clip_id}'")))?;
        let asset = self.asset(asset_id)?;
        Ok((asset, Clip::new(asset, start, end, ClipOrigin::SceneCut)?))
    }

    fn frames(asset: &VideoAsset, clip: &Clip) -> Result<Vec<Frame>> {
        VideoReader::open(&asset.source_path)?.read_range(clip.start_frame, clip.end_frame)
    }

    fn keyframes(asset: &VideoAsset, clip: &Clip) -> Result<Vec<(u32, Frame)>> {
        let mut reader = VideoReader::open(&asset.source_path)?;
        keyframe_indices(clip.len())
            .into_iter()
            .map(|k| {
                let global = clip.start_frame + k;
                reader.read_frame(global).map(|f| (global, f))
            })
            .collect()
    }

    fn clip_stage(&self, asset_id: &str) -> Result<Vec<StageOutcome>> {
        let asset = self.asset(asset_id)?;
        let cfg = &self.config;
        let cuts = detect_cuts(asset, &asset.source_path, cfg.cut_threshold, cfg.min_clip_frames)?;
        let mut records = Vec::new();
        let mut kept = Vec::new();
        for (start, end) in segments(asset, &cuts)? {
            let clip = Clip::new(asset, start, end, ClipOrigin::SceneCut)?;
            if clip.len() >= cfg.min_clip_frames {
                records.push(StageOutcome::new(&clip.clip_id, Stage::Clip, Verdict::Pass));
                kept.push(clip.clip_id);
            } else {
                records.push(
                    StageOutcome::new(&clip.clip_id, Stage::Clip, Verdict::Fail)
                        .with_detail(DETAIL_REASON, "too_short"),
                );
            }
        }
        let verdict = if kept.is_empty() { Verdict::Fail } else { Verdict::Pass };
        records.push(StageOutcome::new(asset_id, Stage::Clip, verdict).with_detail(DETAIL_CLIPS, kept.join(",")));
        Ok(records)
    }

    fn summary_clips(journal: &Journal, asset_id: &str) -> Result<Vec<String>> {
        journal
            .get(asset_id, Stage::Clip)
            .filter(StageOutcome::is_asset_summary)
            .map(|s| s.summary_clips())
            .ok_or_else(|| Error::Journal(format!("no clip summary for asset {asset_id}")))
    }

    fn dedup_stage(&self, asset_id: &str, journal: &Journal) -> Result<Vec<StageOutcome>> {
        let ids = Self::summary_clips(journal, asset_id)?;
        let mut clips = Vec::with_capacity(ids.len());
        let mut features = HashMap::new();
        for id in &ids {
            let (asset, clip) = self.clip(id)?;
            features.insert(id.clone(), self.extractor.extract(&Self::frames(asset, &clip)?)?);
            clips.push(clip);
        }
        let result = dedup_group(&clips, &features, self.config.tau_dup)?;
        Ok(ids
            .iter()
            .map(|id| match result.removal_of(id) {
                Some(r) => StageOutcome::new(id, Stage::Dedup, Verdict::Fail)
                    .with_score(r.similarity)
                    .with_detail(DETAIL_PARTNER, &r.partner),
                None => StageOutcome::new(id, Stage::Dedup, Verdict::Pass),
            })
            .collect())
    }

    fn clip_level(&self, stage: Stage, clip_id: &str) -> Result<StageOutcome> {
        let (asset, clip) = self.clip(clip_id)?;
        let cfg = &self.config;
        match stage {
            Stage::Aesthetic => {
                let frames: Vec<Frame> = Self::keyframes(asset, &clip)?.into_iter().map(|(_, f)| f).collect();
                let score = self.aesthetic.score(&frames)?;
                Ok(StageOutcome::new(clip_id, stage, aesthetic_gate(score, cfg.aesthetic_cutoff)).with_score(score))
            }
            Stage::Ocr => {
                let mut boxes = Vec::new();
                for (index, frame) in Self::keyframes(asset, &clip)? {
                    boxes.extend(self.text.detect(&asset.asset_id, index, &frame)?);
                }
                Ok(StageOutcome::new(clip_id, stage, ocr_gate(&boxes, cfg.ocr_area_limit))
                    .with_score(largest_box_area(&boxes) as f64))
            }
            Stage::Motion => {
                let profile = motion_profile(clip_id, &Self::frames(asset, &clip)?, cfg.pix_diff_threshold)?;
                let out = match reclip(&clip, &profile, cfg) {
                    ReclipVerdict::Keep => StageOutcome::new(clip_id, stage, Verdict::Pass),
                    ReclipVerdict::Split(sub) => StageOutcome::new(clip_id, stage, Verdict::Split)
                        .with_detail(DETAIL_REPLACEMENT, sub.clip_id),
                    ReclipVerdict::Drop(reason) => {
                        StageOutcome::new(clip_id, stage, Verdict::Fail).with_detail(DETAIL_REASON, reason.as_str())
                    }
                };
                Ok(out.with_score(profile.average))
            }
            Stage::Caption => {
                let frames: Vec<Frame> = Self::keyframes(asset, &clip)?.into_iter().map(|(_, f)| f).collect();
                let caption = self
                    .captioner
                    .caption(&CaptionRequest::new(clip_id, clip.len()), &frames)?;
                Ok(StageOutcome::new(clip_id, stage, Verdict::Pass)
                    .with_score(caption.word_count as f64)
                    .with_detail(DETAIL_CAPTION, caption.text))
            }
            Stage::Clip | Stage::Dedup => unreachable!("asset-level stage"),
        }
    }
}

impl StageHandler for CurationHandler {
    fn recorded(&self, stage: Stage, subject: &str, journal: &Journal) -> Option<Vec<StageOutcome>> {
        if let Some(r) = journal.get(subject, stage) {
            return Some(vec![r]);
        }
        if stage != Stage::Dedup {
            return None;
        }
        let ids = Self::summary_clips(journal, subject).ok()?;
        ids.iter().map(|id| journal.get(id, Stage::Dedup)).collect()
    }

    fn handle(&self, stage: Stage, subject: &str, journal: &Journal) -> Result<Vec<StageOutcome>> {
        self.computations.fetch_add(1, Ordering::SeqCst);
        match stage {
            Stage::Clip => self.clip_stage(subject),
            Stage::Dedup => self.dedup_stage(subject, journal),
            _ => self.clip_level(stage, subject).map(|r| vec![r]),
        }
    }
}

thread_local! {
    static SLEEP_DEBT_NANOS: Cell<i128> = const { Cell::new(0) };
}

/// Sleeps for `d`, carrying any oversleep into the next call on this thread
/// so a worker's total busy time tracks the sum of requested latencies.
pub fn compensated_sleep(d: Duration) {
    SLEEP_DEBT_NANOS.with(|debt| {
        let want = d.as_nanos() as i128 - debt.get();
        let start = Instant::now();
        if want > 0 {
            std::thread::sleep(Duration::from_nanos(want as u64));
        }
        debt.set(debt.get() + start.elapsed().as_nanos() as i128 - d.as_nanos() as i128);
    });
}

/// Fixed-latency pass-through stages for throughput experiments.
#[derive(Debug, Clone)]
pub struct SimulationHandler {
    latencies: BTreeMap<Stage, Duration>,
}

impl SimulationHandler {
    pub fn new(latencies: impl IntoIterator<Item = (Stage, Duration)>) -> Self {
        Self {
            latencies: latencies.into_iter().collect(),
        }
    }
}

impl StageHandler for SimulationHandler {
    fn handle(&self, stage: Stage, subject: &str, _journal: &Journal) -> Result<Vec<StageOutcome>> {
        compensated_sleep(self.latencies.get(&stage).copied().unwrap_or_default());
        Ok(vec![StageOutcome::new(subject, stage, Verdict::Pass)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sleep_tracks_total() {
        let start = Instant::now();
        for _ in 0..200 {
            compensated_sleep(Duration::from_micros(250));
        }
        let total = start.elapsed().as_secs_f64();
        assert!((total - 0.05).abs() < 0.01, "{total}");
    }
}
