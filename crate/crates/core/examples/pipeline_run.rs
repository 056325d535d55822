//! Runs the full six-stage pipeline over the synthetic corpus and prints the
//! per-stage report.

use std::sync::Arc;

use vidcurate::analytics::{build_report, render_text};
use vidcurate::caption::LocalCaptioner;
use vidcurate::fixtures::build_acceptance_corpus;
use vidcurate::orchestrator::{run_pipeline, CurationHandler, Journal};
use vidcurate::{PipelineConfig, Stage};

fn main() -> vidcurate::Result<()> {
    let dir = std::env::temp_dir().join("vidcurate-pipeline-example");
    let corpus = build_acceptance_corpus(&dir)?;
    let mut config = PipelineConfig::default();
    config.workers.insert(Stage::Motion, 2);
    let handler = CurationHandler::new(config.clone(), corpus.assets.clone())
        .with_text_detector(corpus.sidecar.clone())
        .with_captioner(LocalCaptioner { config: corpus.caption_config() });
    let journal = run_pipeline(&config, Arc::new(handler), Journal::in_memory(false), &corpus.asset_ids())?;
    print!("{}", render_text(&build_report(&journal.records())));
    Ok(())
}
