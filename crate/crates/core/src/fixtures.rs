//! Deterministic synthetic corpus for end-to-end runs, with the outcome
//! every clip is built to reach.
//!
//! Most assets are a 64x64 checkerboard (8-pixel cells, luma 64/192) with a
//! 16x16 mid-gray square sliding 8 pixels per frame, which gives a steady
//! motion score of 0.0625. Scene changes swap the checker phase; motion
//! spikes are a global +26 luma step, small enough to stay under the cut
//! threshold but large enough to light up the whole motion mask.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::caption::MockConfig;
use crate::error::{Error, Result};
use crate::frame_io::{write_video, Frame, VideoHeader};
use crate::gates::{BoundingBox, SidecarTextDetector};
use crate::model::{clip_id, Stage, StageOutcome, Verdict, VideoAsset, DETAIL_CLIPS};

pub const SIDECAR_FILE: &str = "text_boxes.txt";
pub const EXPECTED_FILE: &str = "expected.jsonl";
pub const NO_CAPTION_MARKER: &str = "nocap";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backdrop {
    Checker { lo: u8, hi: u8 },
    Flat(u8),
    Colour { a: [u8; 3], b: [u8; 3] },
}

pub const CHECKER: Backdrop = Backdrop::Checker { lo: 64, hi: 192 };
pub const INVERTED: Backdrop = Backdrop::Checker { lo: 192, hi: 64 };
/// Distinct from both checker phases by at least 40 luma everywhere.
pub const BRIGHT_INVERTED: Backdrop = Backdrop::Checker { lo: 232, hi: 104 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub backdrop: Backdrop,
    pub frames: u32,
    /// Added to every luma value (saturating), square included.
    pub offset: i16,
}

pub fn seg(backdrop: Backdrop, frames: u32) -> Segment {
    Segment {
        backdrop,
        frames,
        offset: 0,
    }
}

pub fn shifted(backdrop: Backdrop, frames: u32, offset: i16) -> Segment {
    Segment {
        backdrop,
        frames,
        offset,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Square {
    pub size: u32,
    /// Horizontal step per frame, wrapping around the canvas.
    pub dx: u32,
    pub y: u32,
    pub luma: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoPlan {
    pub width: u32,
    pub height: u32,
    pub cell: u32,
    pub segments: Vec<Segment>,
    pub square: Option<Square>,
}

impl VideoPlan {
    pub fn frame_count(&self) -> u32 {
        self.segments.iter().map(|s| s.frames).sum()
    }

    fn channels(&self) -> u8 {
        if self.segments.iter().any(|s| matches!(s.backdrop, Backdrop::Colour { .. })) {
            3
        } else {
            1
        }
    }

    pub fn render(&self) -> Result<(VideoHeader, Vec<Frame>)> {
        let channels = self.channels();
        let header = VideoHeader {
            width: self.width,
            height: self.height,
            channels,
            fps_num: 30,
            fps_den: 1,
            frame_count: self.frame_count(),
        };
        if let Some(sq) = self.square {
            if sq.size > self.width || sq.y + sq.size > self.height {
                return Err(Error::Parameter("square does not fit the canvas".into()));
            }
        }
        let (w, h) = (self.width, self.height);
        let mut frames = Vec::with_capacity(header.frame_count as usize);
        let mut k = 0u32;
        for s in &self.segments {
            for _ in 0..s.frames {
                let mut px = Vec::with_capacity((w * h) as usize * channels as usize);
                let sq_left = self.square.map(|sq| (u64::from(sq.dx) * u64::from(k) % u64::from(w)) as u32);
                for y in 0..h {
                    for x in 0..w {
                        let in_square = match (self.square, sq_left) {
                            (Some(sq), Some(left)) => {
                                y >= sq.y && y < sq.y + sq.size && (x + w - left) % w < sq.size
                            }
                            _ => false,
                        };
                        let phase = (x / self.cell + y / self.cell).is_multiple_of(2);
                        let rgb = if in_square {
                            let l = self.square.expect("in square").luma;
                            [l, l, l]
                        } else {
                            match s.backdrop {
                                Backdrop::Checker { lo, hi } => {
                                    let l = if phase { lo } else { hi };
                                    [l, l, l]
                                }
                                Backdrop::Flat(l) => [l, l, l],
                                Backdrop::Colour { a, b } => {
                                    if phase {
                                        a
                                    } else {
                                        b
                                    }
                                }
                            }
                        };
                        let adj = |v: u8| (i16::from(v) + s.offset).clamp(0, 255) as u8;
                        if channels == 3 {
                            px.extend(rgb.map(adj));
                        } else {
                            px.push(adj(rgb[0]));
                        }
                    }
                }
                frames.push(Frame::new(w, h, channels, px)?);
                k += 1;
            }
        }
        Ok((header, frames))
    }
}

/// Which stage a clip is built to fail, and the replacement range if motion
/// re-clips it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipFate {
    pub start: u32,
    pub end: u32,
    pub fail_at: Option<Stage>,
    pub split_to: Option<(u32, u32)>,
}

impl ClipFate {
    pub fn passes(start: u32, end: u32) -> Self {
        Self {
            start,
            end,
            fail_at: None,
            split_to: None,
        }
    }

    pub fn fails(start: u32, end: u32, stage: Stage) -> Self {
        Self {
            fail_at: Some(stage),
            ..Self::passes(start, end)
        }
    }

    pub fn splits(start: u32, end: u32, to: (u32, u32)) -> Self {
        Self {
            split_to: Some(to),
            ..Self::passes(start, end)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetPlan {
    pub asset_id: String,
    pub video: VideoPlan,
    pub text_boxes: Vec<(u32, BoundingBox)>,
    pub fates: Vec<ClipFate>,
}

fn small(segments: Vec<Segment>) -> VideoPlan {
    VideoPlan {
        width: 64,
        height: 64,
        cell: 8,
        segments,
        square: Some(Square {
            size: 16,
            dx: 8,
            y: 24,
            luma: 128,
        }),
    }
}

fn still(segments: Vec<Segment>, square: Option<Square>) -> VideoPlan {
    VideoPlan {
        square,
        ..small(segments)
    }
}

/// 2857 columns so that a 2857x7 box covers exactly 19999 pixels.
fn wide(frames: u32) -> VideoPlan {
    VideoPlan {
        width: 2857,
        height: 16,
        cell: 8,
        segments: vec![seg(CHECKER, frames)],
        square: Some(Square {
            size: 16,
            dx: 16,
            y: 0,
            luma: 128,
        }),
    }
}

fn plan(id: &str, video: VideoPlan, fates: Vec<ClipFate>) -> AssetPlan {
    AssetPlan {
        asset_id: id.to_string(),
        video,
        text_boxes: Vec::new(),
        fates,
    }
}

fn bbox(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
    BoundingBox::new(x, y, w, h).expect("positive box")
}

/// The twenty corpus assets.
pub fn corpus_plans() -> Vec<AssetPlan> {
    use Stage::*;
    let mut plans = vec![
        plan("a01", small(vec![seg(CHECKER, 30)]), vec![ClipFate::passes(0, 30)]),
        plan("a02", small(vec![seg(CHECKER, 45)]), vec![ClipFate::passes(0, 45)]),
        plan(
            "a03",
            small(vec![seg(CHECKER, 30), seg(INVERTED, 30)]),
            vec![ClipFate::passes(0, 30), ClipFate::passes(30, 60)],
        ),
        plan(
            "a04",
            small(vec![seg(CHECKER, 40), seg(INVERTED, 30), seg(CHECKER, 25)]),
            vec![ClipFate::passes(0, 40), ClipFate::passes(40, 70), ClipFate::fails(70, 95, Dedup)],
        ),
        plan(
            "a05",
            small(vec![seg(CHECKER, 30), seg(INVERTED, 30), seg(CHECKER, 30)]),
            vec![ClipFate::passes(0, 30), ClipFate::passes(30, 60), ClipFate::fails(60, 90, Dedup)],
        ),
        plan("a06", still(vec![seg(Backdrop::Flat(0), 30)], None), vec![ClipFate::fails(0, 30, Aesthetic)]),
        plan(
            "a07",
            VideoPlan {
                square: Some(Square {
                    size: 16,
                    dx: 8,
                    y: 24,
                    luma: 40,
                }),
                ..small(vec![seg(Backdrop::Flat(10), 30)])
            },
            vec![ClipFate::fails(0, 30, Aesthetic)],
        ),
        plan("a08", wide(30), vec![ClipFate::passes(0, 30)]),
        plan("a09", wide(30), vec![ClipFate::fails(0, 30, Ocr)]),
        plan("a10", wide(30), vec![ClipFate::passes(0, 30)]),
        plan("a11", still(vec![seg(CHECKER, 30)], None), vec![ClipFate::fails(0, 30, Motion)]),
        plan(
            "a12",
            still(
                vec![seg(CHECKER, 40)],
                Some(Square {
                    size: 16,
                    dx: 0,
                    y: 24,
                    luma: 128,
                }),
            ),
            vec![ClipFate::fails(0, 40, Motion)],
        ),
        plan(
            "a13",
            small(vec![seg(CHECKER, 41), shifted(CHECKER, 59, 26)]),
            vec![ClipFate::splits(0, 100, (41, 100))],
        ),
        plan(
            "a14",
            small(vec![seg(CHECKER, 41), shifted(CHECKER, 30, 26), seg(CHECKER, 29)]),
            vec![ClipFate::splits(0, 100, (41, 71))],
        ),
        plan(
            "a15",
            small(vec![seg(CHECKER, 13), shifted(CHECKER, 12, 26)]),
            vec![ClipFate::fails(0, 25, Motion)],
        ),
        plan(
            "a16",
            small(vec![seg(CHECKER, 20), seg(INVERTED, 5), seg(BRIGHT_INVERTED, 20)]),
            vec![ClipFate::passes(0, 20), ClipFate::splits(20, 45, (25, 45))],
        ),
        plan(
            "a17",
            small(vec![seg(CHECKER, 40), seg(INVERTED, 10)]),
            vec![ClipFate::passes(0, 40), ClipFate::fails(40, 50, Clip)],
        ),
        plan("a18", small(vec![seg(CHECKER, 10)]), vec![ClipFate::fails(0, 10, Clip)]),
        plan("a19_nocap", small(vec![seg(CHECKER, 30)]), vec![ClipFate::fails(0, 30, Caption)]),
        plan(
            "a20",
            small(vec![seg(
                Backdrop::Colour {
                    a: [230, 200, 60],
                    b: [20, 40, 160],
                },
                30,
            )]),
            vec![ClipFate::passes(0, 30)],
        ),
    ];
    // keyframes of a 30-frame clip are 0, 10, 19, 29
    plans[7].text_boxes.push((10, bbox(0, 0, 2857, 7)));
    plans[8].text_boxes.push((19, bbox(0, 4, 2500, 8)));
    plans[9].text_boxes.push((5, bbox(0, 4, 2500, 8)));
    plans
}

/// Records a run over `plans` must produce, reduced to clip id, stage and
/// verdict (plus the clip list on asset summaries).
pub fn expected_outcomes(plans: &[AssetPlan], stage_order: &[Stage]) -> Vec<StageOutcome> {
    let mut out = Vec::new();
    for p in plans {
        let kept: Vec<String> = p
            .fates
            .iter()
            .filter(|f| f.fail_at != Some(Stage::Clip))
            .map(|f| clip_id(&p.asset_id, f.start, f.end))
            .collect();
        let verdict = if kept.is_empty() { Verdict::Fail } else { Verdict::Pass };
        out.push(StageOutcome::new(&p.asset_id, Stage::Clip, verdict).with_detail(DETAIL_CLIPS, kept.join(",")));
        for f in &p.fates {
            let mut id = clip_id(&p.asset_id, f.start, f.end);
            for &stage in stage_order {
                if f.fail_at == Some(stage) {
                    out.push(StageOutcome::new(&id, stage, Verdict::Fail));
                    break;
                }
                match (stage, f.split_to) {
                    (Stage::Motion, Some((s, e))) => {
                        out.push(StageOutcome::new(&id, stage, Verdict::Split));
                        id = clip_id(&p.asset_id, s, e);
                    }
                    _ => out.push(StageOutcome::new(&id, stage, Verdict::Pass)),
                }
            }
        }
    }
    out
}

pub fn verdict_key(r: &StageOutcome) -> (String, Stage, Verdict) {
    (r.clip_id.clone(), r.stage, r.verdict)
}

pub fn expected_pass_rates(expected: &[StageOutcome]) -> BTreeMap<Stage, Option<f64>> {
    Stage::ALL
        .iter()
        .map(|&s| (s, crate::analytics::pass_rate(expected, s)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub assets: Vec<VideoAsset>,
    pub plans: Vec<AssetPlan>,
    pub sidecar: SidecarTextDetector,
    pub sidecar_path: PathBuf,
    pub expected: Vec<StageOutcome>,
}

impl Corpus {
    pub fn asset_ids(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.asset_id.clone()).collect()
    }

    /// Captioner settings that leave clips of `*nocap*` assets uncaptioned.
    pub fn caption_config(&self) -> MockConfig {
        corpus_caption_config()
    }
}

pub fn corpus_caption_config() -> MockConfig {
    MockConfig {
        empty_for: vec![NO_CAPTION_MARKER.to_string()],
        ..MockConfig::default()
    }
}

/// Writes `<asset_id>.rvid` per asset, the text-box sidecar and the expected
/// outcomes for the default stage order into `dir`.
pub fn build_acceptance_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let plans = corpus_plans();
    let mut assets = Vec::with_capacity(plans.len());
    let mut sidecar = SidecarTextDetector::empty();
    for p in &plans {
        let path = dir.join(format!("{}.rvid", p.asset_id));
        let (header, frames) = p.video.render()?;
        write_video(&path, &header, &frames)?;
        assets.push(header.to_asset(&p.asset_id, &path)?);
        for (frame, b) in &p.text_boxes {
            sidecar.insert(&p.asset_id, *frame, *b);
        }
    }
    let sidecar_path = dir.join(SIDECAR_FILE);
    std::fs::write(&sidecar_path, sidecar.to_text()).map_err(|e| Error::io(&sidecar_path, e))?;
    let expected = expected_outcomes(&plans, &Stage::ALL);
    let expected_path = dir.join(EXPECTED_FILE);
    let mut text = String::new();
    for r in &expected {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::Journal(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(&expected_path, text).map_err(|e| Error::io(&expected_path, e))?;
    Ok(Corpus {
        dir: dir.to_path_buf(),
        assets,
        plans,
        sidecar,
        sidecar_path,
        expected,
    })
}
