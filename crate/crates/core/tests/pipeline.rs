use std::collections::BTreeSet;
use std::sync::Arc;

use vidcurate::caption::LocalCaptioner;
use vidcurate::fixtures::{build_acceptance_corpus, verdict_key};
use vidcurate::orchestrator::{run_pipeline, CurationHandler, Journal};
use vidcurate::PipelineConfig;

#[test]
fn corpus_deterministic_matches_expected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = build_acceptance_corpus(dir.path()).unwrap();
    let config = PipelineConfig::default();
    let handler = CurationHandler::new(config.clone(), corpus.assets.clone())
        .with_text_detector(corpus.sidecar.clone())
        .with_captioner(LocalCaptioner { config: corpus.caption_config() });
    let journal = run_pipeline(&config, Arc::new(handler), Journal::in_memory(true), &corpus.asset_ids()).unwrap();
    let got: BTreeSet<_> = journal.records().iter().map(verdict_key).collect();
    let want: BTreeSet<_> = corpus.expected.iter().map(verdict_key).collect();
    for x in want.difference(&got) { eprintln!("missing {x:?}"); }
    for x in got.difference(&want) { eprintln!("extra {x:?}"); }
    assert_eq!(got, want);
}
