//! TOML configuration: pipeline parameters plus external adapter settings.
//!
//! ```toml
//! [pipeline]
//! tau_dup = 0.9
//! stage_order = ["clip", "dedup", "aesthetic", "ocr", "motion", "caption"]
//!
//! [pipeline.workers]
//! motion = 4
//!
//! [adapters]
//! caption_endpoint = "http://127.0.0.1:8080"
//! ocr_sidecar = "text_boxes.txt"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::caption::{Captioner, HttpCaptioner, LocalCaptioner, MockConfig};
use crate::error::{Error, Result};
use crate::gates::{AestheticScorer, CommandAestheticScorer, CommandTextDetector, ReferenceAestheticScorer, SidecarTextDetector, TextDetector};
use crate::model::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterConfig {
    /// Base URL of the caption service; the in-process captioner is used
    /// when unset.
    pub caption_endpoint: Option<String>,
    pub caption_timeout_ms: u64,
    /// Words per caption from the in-process captioner.
    pub caption_words: usize,
    /// The in-process captioner returns empty text for clip ids containing
    /// any of these substrings.
    pub caption_skip: Vec<String>,
    pub ocr_sidecar: Option<PathBuf>,
    /// Shell template run per keyframe; see `CommandTextDetector`.
    pub ocr_command: Option<String>,
    pub aesthetic_command: Option<String>,
    /// Shell template turning `{input}` into an RVID file at `{output}`.
    pub decode_command: Option<String>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            caption_endpoint: None,
            caption_timeout_ms: 30_000,
            caption_words: MockConfig::default().words,
            caption_skip: Vec::new(),
            ocr_sidecar: None,
            ocr_command: None,
            aesthetic_command: None,
            decode_command: None,
        }
    }
}

impl AdapterConfig {
    pub fn captioner(&self) -> Box<dyn Captioner> {
        match &self.caption_endpoint {
            Some(url) => Box::new(HttpCaptioner::new(url, Duration::from_millis(self.caption_timeout_ms))),
            None => Box::new(LocalCaptioner {
                config: MockConfig {
                    words: self.caption_words,
                    empty_for: self.caption_skip.clone(),
                    ..MockConfig::default()
                },
            }),
        }
    }

    pub fn text_detector(&self) -> Result<Box<dyn TextDetector>> {
        match (&self.ocr_sidecar, &self.ocr_command) {
            (Some(_), Some(_)) => Err(Error::Config("set only one of ocr_sidecar and ocr_command".into())),
            (Some(p), None) => Ok(Box::new(SidecarTextDetector::load(p)?)),
            (None, Some(t)) => Ok(Box::new(CommandTextDetector { template: t.clone() })),
            (None, None) => Ok(Box::new(SidecarTextDetector::empty())),
        }
    }

    pub fn aesthetic_scorer(&self) -> Box<dyn AestheticScorer> {
        match &self.aesthetic_command {
            Some(t) => Box::new(CommandAestheticScorer { template: t.clone() }),
            None => Box::new(ReferenceAestheticScorer),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub pipeline: PipelineConfig,
    pub adapters: AdapterConfig,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    /// Relative adapter paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(p), Some(base)) = (&cfg.adapters.ocr_sidecar, path.parent()) {
            if p.is_relative() {
                cfg.adapters.ocr_sidecar = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
