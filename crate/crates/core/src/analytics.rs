//! Pass rates, stage timings, pipelining efficiency and caption statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::caption::{word_count, Caption};
use crate::error::{Error, Result};
use crate::model::{Stage, StageOutcome, DETAIL_CAPTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub t_sequential: f64,
    pub t_pipelined: f64,
    pub efficiency: f64,
    pub bottleneck_stage: Stage,
}

/// Sequential time is the sum of per-stage batch times; pipelined time is
/// the slowest stage's. Ties for the bottleneck go to the earlier stage.
pub fn efficiency(timings: &[(Stage, f64)]) -> Result<EfficiencyReport> {
    let Some(&(first, _)) = timings.first() else {
        return Err(Error::Parameter("efficiency needs at least one stage".into()));
    };
    if let Some((s, t)) = timings.iter().find(|(_, t)| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Parameter(format!("stage {s} time {t} must be positive")));
    }
    let t_sequential: f64 = timings.iter().map(|(_, t)| t).sum();
    let (bottleneck_stage, t_pipelined) = timings
        .iter()
        .fold((first, f64::NEG_INFINITY), |best, &(s, t)| if t > best.1 { (s, t) } else { best });
    Ok(EfficiencyReport {
        t_sequential,
        t_pipelined,
        efficiency: t_sequential / t_pipelined,
        bottleneck_stage,
    })
}

fn stage_records(records: &[StageOutcome], stage: Stage) -> impl Iterator<Item = &StageOutcome> {
    records.iter().filter(move |r| r.stage == stage && !r.is_asset_summary())
}

/// Percentage of a stage's clip outcomes that passed or split; `None` when
/// the stage has no outcomes. Asset summaries are not clip outcomes.
pub fn pass_rate(records: &[StageOutcome], stage: Stage) -> Option<f64> {
    let (passed, total) = stage_records(records, stage).fold((0usize, 0usize), |(p, t), r| {
        (p + usize::from(r.verdict.advances()), t + 1)
    });
    (total > 0).then(|| 100.0 * passed as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageThroughput {
    pub stage: Stage,
    pub processed: usize,
    pub passed: usize,
    pub pass_rate: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub stages: Vec<StageThroughput>,
    /// Over stages with outcomes, caption excluded; absent when any of them
    /// has no recorded time.
    pub efficiency: Option<EfficiencyReport>,
}

pub fn throughput_report(records: &[StageOutcome]) -> ThroughputReport {
    let stages: Vec<StageThroughput> = Stage::ALL
        .iter()
        .map(|&stage| {
            let mut row = StageThroughput {
                stage,
                processed: 0,
                passed: 0,
                pass_rate: None,
                wall_time: 0.0,
            };
            for r in stage_records(records, stage) {
                row.processed += 1;
                row.passed += usize::from(r.verdict.advances());
                row.wall_time += r.wall_time;
            }
            row.pass_rate = pass_rate(records, stage);
            row
        })
        .collect();
    let timed: Vec<(Stage, f64)> = stages
        .iter()
        .filter(|s| s.stage != Stage::Caption && s.processed > 0)
        .map(|s| (s.stage, s.wall_time))
        .collect();
    let efficiency = if timed.is_empty() || timed.iter().any(|(_, t)| *t <= 0.0) {
        None
    } else {
        efficiency(&timed).ok()
    };
    ThroughputReport { stages, efficiency }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionStats {
    pub count: usize,
    pub total_words: u64,
    pub mean_words: Option<f64>,
    /// Bucket start (multiple of 10) to caption count.
    pub histogram: BTreeMap<usize, usize>,
    pub fraction_50_120: Option<f64>,
}

pub const BUCKET_WIDTH: usize = 10;

pub fn caption_stats(word_counts: impl IntoIterator<Item = usize>) -> CaptionStats {
    let mut count = 0usize;
    let mut total_words = 0u64;
    let mut in_band = 0usize;
    let mut histogram = BTreeMap::new();
    for w in word_counts {
        count += 1;
        total_words += w as u64;
        in_band += usize::from((50..=120).contains(&w));
        *histogram.entry(w / BUCKET_WIDTH * BUCKET_WIDTH).or_insert(0) += 1;
    }
    CaptionStats {
        count,
        total_words,
        mean_words: (count > 0).then(|| total_words as f64 / count as f64),
        histogram,
        fraction_50_120: (count > 0).then(|| in_band as f64 / count as f64),
    }
}

pub fn caption_stats_for(captions: &[Caption]) -> CaptionStats {
    caption_stats(captions.iter().map(|c| c.word_count))
}

/// Captions stored by the caption stage.
pub fn journal_captions(records: &[StageOutcome]) -> Vec<Caption> {
    records
        .iter()
        .filter(|r| r.stage == Stage::Caption)
        .filter_map(|r| {
            r.detail.get(DETAIL_CAPTION).map(|t| Caption {
                clip_id: r.clip_id.clone(),
                word_count: word_count(t),
                text: t.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub throughput: ThroughputReport,
    pub captions: CaptionStats,
}

pub fn build_report(records: &[StageOutcome]) -> Report {
    Report {
        throughput: throughput_report(records),
        captions: caption_stats_for(&journal_captions(records)),
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.digits$}"))
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>9} {:>7} {:>9} {:>12}", "stage", "processed", "passed", "pass_rate", "wall_time_s");
    for s in &report.throughput.stages {
        let rate = s.pass_rate.map_or_else(|| "N/A".to_string(), |r| format!("{r:.2}%"));
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>7} {:>9} {:>12.4}",
            s.stage.as_str(),
            s.processed,
            s.passed,
            rate,
            s.wall_time
        );
    }
    match &report.throughput.efficiency {
        Some(e) => {
            let _ = writeln!(
                out,
                "efficiency {:.4} (sequential {:.4}s, pipelined {:.4}s, bottleneck {})",
                e.efficiency, e.t_sequential, e.t_pipelined, e.bottleneck_stage
            );
        }
        None => out.push_str("efficiency N/A\n"),
    }
    let c = &report.captions;
    let _ = writeln!(
        out,
        "captions {} mean_words {} fraction_50_120 {}",
        c.count,
        opt(c.mean_words, 2),
        opt(c.fraction_50_120, 4)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Verdict, DETAIL_CLIPS};

    #[test]
    fn efficiency_examples() {
        use Stage::*;
        let r = efficiency(&[(Clip, 1.0), (Dedup, 3.0), (Aesthetic, 0.8), (Ocr, 1.2), (Motion, 12.0)]).unwrap();
        assert!((r.t_sequential - 18.0).abs() < 1e-12);
        assert_eq!(r.t_pipelined, 12.0);
        assert!((r.efficiency - 1.5).abs() < 1e-12);
        assert_eq!(r.bottleneck_stage, Motion);
        assert_eq!(efficiency(&[(Clip, 5.0)]).unwrap().efficiency, 1.0);
        let eq = efficiency(&[(Clip, 1.0), (Dedup, 1.0), (Aesthetic, 1.0), (Ocr, 1.0)]).unwrap();
        assert_eq!(eq.efficiency, 4.0);
        assert_eq!(eq.bottleneck_stage, Clip);
        assert!(efficiency(&[(Clip, 0.0)]).is_err());
        assert!(efficiency(&[]).is_err());
    }

    fn outcomes(stage: Stage, pass: usize, fail: usize) -> Vec<StageOutcome> {
        (0..pass + fail)
            .map(|i| StageOutcome::new(format!("c{i}"), stage, if i < pass { Verdict::Pass } else { Verdict::Fail }))
            .collect()
    }

    #[test]
    fn pass_rate_examples() {
        let r = outcomes(Stage::Dedup, 642, 358);
        assert!((pass_rate(&r, Stage::Dedup).unwrap() - 64.2).abs() < 1e-9);
        assert_eq!(pass_rate(&r, Stage::Ocr), None);
        assert_eq!(pass_rate(&outcomes(Stage::Ocr, 5, 0), Stage::Ocr), Some(100.0));
        let split = vec![StageOutcome::new("x", Stage::Motion, Verdict::Split)];
        assert_eq!(pass_rate(&split, Stage::Motion), Some(100.0));
    }

    #[test]
    fn summaries_do_not_count() {
        let mut r = outcomes(Stage::Clip, 1, 1);
        r.push(StageOutcome::new("asset", Stage::Clip, Verdict::Pass).with_detail(DETAIL_CLIPS, "c0"));
        assert_eq!(pass_rate(&r, Stage::Clip), Some(50.0));
    }

    #[test]
    fn caption_examples() {
        let s = caption_stats(["a b c", "d e"].map(word_count));
        assert_eq!(s.mean_words, Some(2.5));
        assert_eq!(s.fraction_50_120, Some(0.0));
        assert_eq!(s.histogram, BTreeMap::from([(0, 2)]));
        let e = caption_stats([]);
        assert_eq!((e.count, e.mean_words), (0, None));
        let b = caption_stats([49, 50, 120, 121]);
        assert_eq!(b.fraction_50_120, Some(0.5));
        assert_eq!(b.histogram, BTreeMap::from([(40, 1), (50, 1), (120, 2)]));
    }

    #[test]
    fn empty_journal_report() {
        let r = throughput_report(&[]);
        assert!(r.stages.iter().all(|s| s.processed == 0 && s.pass_rate.is_none()));
        assert!(r.efficiency.is_none());
    }

    #[test]
    fn report_aggregates_wall_time() {
        let mut recs = Vec::new();
        for (stage, t) in [(Stage::Clip, 1.0), (Stage::Dedup, 3.0), (Stage::Caption, 50.0)] {
            let mut r = StageOutcome::new("c", stage, Verdict::Pass);
            r.wall_time = t;
            recs.push(r);
        }
        let r = throughput_report(&recs);
        let e = r.efficiency.unwrap();
        assert_eq!((e.t_sequential, e.bottleneck_stage), (4.0, Stage::Dedup));
        assert!(render_text(&build_report(&recs)).contains("efficiency 1.3333"));
    }
}
