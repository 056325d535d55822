//! Kills every worker three times during a run and lets the pipeline
//! recover from its journal, then compares against a clean run.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use vidcurate::caption::LocalCaptioner;
use vidcurate::fixtures::{build_acceptance_corpus, verdict_key};
use vidcurate::orchestrator::{read_journal, Checkpoint, CrashPoint, CurationHandler, Journal, Pipeline};
use vidcurate::PipelineConfig;

fn main() -> vidcurate::Result<()> {
    let dir = std::env::temp_dir().join("vidcurate-crash-example");
    let _ = std::fs::remove_dir_all(&dir);
    let corpus = build_acceptance_corpus(dir.join("corpus"))?;
    let config = PipelineConfig::default();
    let handler = CurationHandler::new(config.clone(), corpus.assets.clone())
        .with_text_detector(corpus.sidecar.clone())
        .with_captioner(LocalCaptioner { config: corpus.caption_config() });
    let path = dir.join("journal.jsonl");
    let crashes = vec![
        CrashPoint { delivery: 12, checkpoint: Checkpoint::MidAppend },
        CrashPoint { delivery: 40, checkpoint: Checkpoint::AfterAppend },
        CrashPoint { delivery: 75, checkpoint: Checkpoint::AfterPublish },
    ];
    let pipeline = Pipeline::new(config, Arc::new(handler), Journal::open(&path, false)?)?.with_crashes(crashes);
    pipeline.enqueue(&corpus.asset_ids())?;
    pipeline.start()?;
    pipeline.wait_idle(Some(Duration::from_secs(300)))?;
    pipeline.shutdown();

    let got: BTreeSet<_> = read_journal(&path)?.iter().map(verdict_key).collect();
    let want: BTreeSet<_> = corpus.expected.iter().map(verdict_key).collect();
    println!("kills: {}, deliveries: {}", pipeline.faults().kills(), pipeline.faults().deliveries());
    println!("journal records: {}, matches clean outcome: {}", got.len(), got == want);
    Ok(())
}
