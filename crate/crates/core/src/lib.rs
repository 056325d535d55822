//! Video curation pipeline: scene clipping, near-duplicate removal, quality
//! gates, motion-based re-clipping and captioning, run as a multi-stage
//! queue pipeline with a durable outcome journal.

pub mod analytics;
pub mod caption;
pub mod cli;
pub mod config;
pub mod dedup;
pub mod error;
pub mod fixtures;
pub mod frame_io;
pub mod gates;
pub mod model;
pub mod motion;
pub mod orchestrator;
pub mod scene;

pub use error::{Error, Result};
pub use model::{Clip, ClipOrigin, Fps, PipelineConfig, Stage, StageOutcome, Verdict, VideoAsset};
