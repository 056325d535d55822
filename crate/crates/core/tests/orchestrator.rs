use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use vidcurate::caption::{HttpCaptioner, LocalCaptioner, MockCaptionServer};
use vidcurate::error::Error;
use vidcurate::fixtures::{build_acceptance_corpus, verdict_key, Corpus};
use vidcurate::model::{DETAIL_CLIPS, DETAIL_ERROR};
use vidcurate::orchestrator::{run_pipeline, Checkpoint, CrashPoint, CurationHandler, Journal, Pipeline, StageHandler};
use vidcurate::{PipelineConfig, Stage, StageOutcome, Verdict};

type Key = (String, Stage, Verdict);

fn keys(records: &[StageOutcome]) -> BTreeSet<Key> {
    records.iter().map(verdict_key).collect()
}

fn handler(corpus: &Corpus, config: &PipelineConfig) -> CurationHandler {
    CurationHandler::new(config.clone(), corpus.assets.clone())
        .with_text_detector(corpus.sidecar.clone())
        .with_captioner(LocalCaptioner { config: corpus.caption_config() })
}

fn corpus(dir: &Path) -> Corpus {
    build_acceptance_corpus(dir.join("corpus")).unwrap()
}

#[test]
fn threaded_run_matches_deterministic_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let mut config = PipelineConfig::default();
    config.workers.insert(Stage::Motion, 3);
    config.workers.insert(Stage::Aesthetic, 2);
    let threaded = run_pipeline(&config, Arc::new(handler(&c, &config)), Journal::in_memory(false), &c.asset_ids()).unwrap();
    let inline = run_pipeline(&config, Arc::new(handler(&c, &config)), Journal::in_memory(true), &c.asset_ids()).unwrap();
    assert_eq!(keys(&threaded.records()), keys(&inline.records()));
    assert_eq!(keys(&threaded.records()), keys(&c.expected));
    let ts: Vec<u64> = threaded.records().iter().map(|r| r.timestamp).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn deterministic_journal_bytes_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let config = PipelineConfig::default();
    let mut bytes = Vec::new();
    for name in ["one.jsonl", "two.jsonl"] {
        let path = dir.path().join(name);
        run_pipeline(&config, Arc::new(handler(&c, &config)), Journal::open(&path, true).unwrap(), &c.asset_ids()).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn stage_can_scale_from_zero_to_four() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let mut config = PipelineConfig::default();
    config.workers.insert(Stage::Motion, 0);
    let pipeline = Pipeline::new(config.clone(), Arc::new(handler(&c, &config)), Journal::in_memory(false)).unwrap();
    pipeline.start().unwrap();
    pipeline.enqueue(&c.asset_ids()).unwrap();
    let motion_tasks = c.expected.iter().filter(|r| r.stage == Stage::Motion).count();
    let deadline = Instant::now() + Duration::from_secs(60);
    while pipeline.broker().stats(Stage::Motion.queue()).ready < motion_tasks {
        assert!(Instant::now() < deadline, "motion queue never filled");
        std::thread::sleep(Duration::from_millis(5));
    }
    assert!(!pipeline.journal().records().iter().any(|r| r.stage == Stage::Motion));
    assert_eq!(pipeline.worker_count(Stage::Motion), 0);
    assert_eq!(pipeline.scale_stage(Stage::Motion, 4).unwrap(), 4);
    assert!(pipeline.wait_idle(Some(Duration::from_secs(120))).unwrap());
    assert_eq!(keys(&pipeline.journal().records()), keys(&c.expected));
    assert_eq!(pipeline.scale_stage(Stage::Motion, 1).unwrap(), 1);
    pipeline.shutdown();
    assert_eq!(pipeline.worker_count(Stage::Motion), 0);
}

#[test]
fn rerun_replays_without_recomputing() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let config = PipelineConfig::default();
    let path = dir.path().join("j.jsonl");
    run_pipeline(&config, Arc::new(handler(&c, &config)), Journal::open(&path, false).unwrap(), &c.asset_ids()).unwrap();
    let before = std::fs::read(&path).unwrap();
    let again = Arc::new(handler(&c, &config));
    let j = run_pipeline(&config, again.clone(), Journal::open(&path, false).unwrap(), &c.asset_ids()).unwrap();
    assert_eq!(again.computations(), 0);
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(keys(&j.records()), keys(&c.expected));
}

#[test]
fn each_checkpoint_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let config = PipelineConfig::default();
    for (i, checkpoint) in Checkpoint::ALL.into_iter().enumerate() {
        let path = dir.path().join(format!("crash{i}.jsonl"));
        let pipeline = Pipeline::new(config.clone(), Arc::new(handler(&c, &config)), Journal::open(&path, false).unwrap())
            .unwrap()
            .with_crashes(vec![CrashPoint { delivery: 30 + 7 * i as u64, checkpoint }]);
        pipeline.enqueue(&c.asset_ids()).unwrap();
        pipeline.start().unwrap();
        assert!(pipeline.wait_idle(Some(Duration::from_secs(120))).unwrap());
        pipeline.shutdown();
        assert_eq!(pipeline.faults().kills(), 1, "{checkpoint:?}");
        let on_disk = vidcurate::orchestrator::read_journal(&path).unwrap();
        assert_eq!(keys(&on_disk), keys(&c.expected), "{checkpoint:?}");
        assert_eq!(on_disk.len(), keys(&on_disk).len());
    }
}

/// Two-stage pipeline whose caption step always fails with a transient error.
struct Flaky {
    attempts: AtomicUsize,
}

impl StageHandler for Flaky {
    fn handle(&self, stage: Stage, subject: &str, _journal: &Journal) -> vidcurate::Result<Vec<StageOutcome>> {
        match stage {
            Stage::Clip => Ok(vec![
                StageOutcome::new(format!("{subject}:0-30"), Stage::Clip, Verdict::Pass),
                StageOutcome::new(subject, Stage::Clip, Verdict::Pass).with_detail(DETAIL_CLIPS, format!("{subject}:0-30")),
            ]),
            _ => {
                self.attempts.fetch_add(1, Ordering::SeqCst);
                Err(Error::CaptionTransport("503".into()))
            }
        }
    }
}

#[test]
fn poison_task_fails_after_max_attempts() {
    for deterministic in [true, false] {
        let config = PipelineConfig {
            stage_order: vec![Stage::Clip, Stage::Caption],
            max_attempts: 4,
            ..PipelineConfig::default()
        };
        let h = Arc::new(Flaky { attempts: AtomicUsize::new(0) });
        let j = run_pipeline(&config, h.clone(), Journal::in_memory(deterministic), &["p".to_string()]).unwrap();
        assert_eq!(h.attempts.load(Ordering::SeqCst), 4);
        let rec = j.get("p:0-30", Stage::Caption).unwrap();
        assert_eq!(rec.verdict, Verdict::Fail);
        assert!(rec.detail[DETAIL_ERROR].contains("503"));
    }
}

#[test]
fn zero_workers_is_rejected_for_threaded_runs() {
    let mut config = PipelineConfig::default();
    config.workers.insert(Stage::Ocr, 0);
    let h = Arc::new(Flaky { attempts: AtomicUsize::new(0) });
    assert!(run_pipeline(&config, h, Journal::in_memory(false), &[]).is_err());
}

#[test]
fn http_captioner_drives_caption_stage() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let server = MockCaptionServer::start(c.caption_config()).unwrap();
    let mut config = PipelineConfig::default();
    config.workers.insert(Stage::Caption, 2);
    let h = CurationHandler::new(config.clone(), c.assets.clone())
        .with_text_detector(c.sidecar.clone())
        .with_captioner(HttpCaptioner::new(&server.endpoint(), Duration::from_secs(10)));
    let j = run_pipeline(&config, Arc::new(h), Journal::in_memory(false), &c.asset_ids()).unwrap();
    assert_eq!(keys(&j.records()), keys(&c.expected));
    let captioned = c.expected.iter().filter(|r| r.stage == Stage::Caption).count();
    assert_eq!(server.requests_served(), captioned);
}

#[test]
fn duplicate_enqueue_is_absorbed_by_the_journal() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let config = PipelineConfig::default();
    let mut ids = c.asset_ids();
    ids.extend(c.asset_ids().into_iter().take(5));
    let h = Arc::new(handler(&c, &config));
    let j = run_pipeline(&config, h, Journal::in_memory(true), &ids).unwrap();
    assert_eq!(j.len(), c.expected.len());
    assert_eq!(keys(&j.records()), keys(&c.expected));
    let empty = run_pipeline(&config, Arc::new(handler(&c, &config)), Journal::in_memory(true), &[]).unwrap();
    assert!(empty.is_empty());
}
