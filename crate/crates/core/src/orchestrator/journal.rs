//! Append-only outcome journal, one JSON record per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::model::{Stage, StageOutcome};

/// Worker id written by a deterministic journal.
pub const FROZEN_WORKER_ID: &str = "worker";

#[derive(Debug)]
struct Inner {
    file: Option<File>,
    records: Vec<StageOutcome>,
    index: HashMap<(String, Stage), usize>,
    last_timestamp: u64,
    halted: bool,
}

/// At most one outcome per `(clip_id, stage)`: appending a key that already
/// exists returns the stored record and writes nothing.
///
/// A deterministic journal stamps timestamps with the record sequence number
/// and freezes `worker_id` and `wall_time`, so identical runs produce
/// identical bytes.
#[derive(Debug)]
pub struct Journal {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
    deterministic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Appended {
    New(StageOutcome),
    Existing(StageOutcome),
}

impl Appended {
    pub fn record(&self) -> &StageOutcome {
        match self {
            Appended::New(r) | Appended::Existing(r) => r,
        }
    }

    pub fn is_new(&self) -> bool {
        matches!(self, Appended::New(_))
    }
}

fn now_micros() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

/// Parses journal text. A final line without a trailing newline is a torn
/// write and is ignored; the returned offset is where valid content ends.
pub fn parse_journal(text: &str) -> Result<(Vec<StageOutcome>, usize)> {
    let mut records = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    let mut rest = text;
    while let Some(nl) = rest.find('\n') {
        line_no += 1;
        let line = &rest[..nl];
        if !line.trim().is_empty() {
            let rec = serde_json::from_str(line)
                .map_err(|e| Error::Journal(format!("line {line_no}: {e}")))?;
            records.push(rec);
        }
        offset += nl + 1;
        rest = &rest[nl + 1..];
    }
    Ok((records, offset))
}

/// Reads a journal file without opening it for writing.
pub fn read_journal(path: impl AsRef<Path>) -> Result<Vec<StageOutcome>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_journal(&text)?.0)
}

impl Journal {
    pub fn in_memory(deterministic: bool) -> Self {
        Self {
            inner: Mutex::new(Inner {
                file: None,
                records: Vec::new(),
                index: HashMap::new(),
                last_timestamp: 0,
                halted: false,
            }),
            path: None,
            deterministic,
        }
    }

    /// Opens or creates a journal file, loading existing records and
    /// truncating a torn trailing line.
    pub fn open(path: impl AsRef<Path>, deterministic: bool) -> Result<Self> {
        let path = path.as_ref();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
        let (records, valid) = parse_journal(&text)?;
        if valid < text.len() {
            tracing::warn!(path = %path.display(), bytes = text.len() - valid, "dropping torn journal tail");
            file.set_len(valid as u64).map_err(|e| Error::io(path, e))?;
            file.seek(SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
        }
        let journal = Self::in_memory(deterministic);
        {
            let mut inner = journal.lock()?;
            inner.file = Some(file);
            for rec in records {
                inner.last_timestamp = inner.last_timestamp.max(rec.timestamp);
                let key = (rec.clip_id.clone(), rec.stage);
                if inner.index.contains_key(&key) {
                    return Err(Error::Journal(format!(
                        "duplicate record for ({}, {})",
                        rec.clip_id, rec.stage
                    )));
                }
                let at = inner.records.len();
                inner.index.insert(key, at);
                inner.records.push(rec);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            ..journal
        })
    }

    fn lock(&self) -> Result<MutexGuard<'_, Inner>> {
        self.inner.lock().map_err(|_| Error::Journal("journal state poisoned".into()))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn append(&self, mut outcome: StageOutcome) -> Result<Appended> {
        let mut inner = self.lock()?;
        if inner.halted {
            return Err(Error::Journal("journal halted".into()));
        }
        let key = (outcome.clip_id.clone(), outcome.stage);
        if let Some(&i) = inner.index.get(&key) {
            return Ok(Appended::Existing(inner.records[i].clone()));
        }
        if self.deterministic {
            outcome.timestamp = inner.records.len() as u64 + 1;
            outcome.worker_id = FROZEN_WORKER_ID.to_string();
            outcome.wall_time = 0.0;
        } else {
            outcome.timestamp = now_micros().max(inner.last_timestamp + 1);
        }
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&outcome)
                .map_err(|e| Error::Journal(format!("encode: {e}")))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .map_err(|e| Error::Journal(format!("write: {e}")))?;
        }
        inner.last_timestamp = outcome.timestamp;
        let at = inner.records.len();
        inner.index.insert(key, at);
        inner.records.push(outcome.clone());
        Ok(Appended::New(outcome))
    }

    /// Writes the first half of a record line and halts, as a process dying
    /// mid-write would.
    pub(crate) fn append_torn(&self, outcome: &StageOutcome) -> Result<()> {
        let mut inner = self.lock()?;
        if inner.halted {
            return Ok(());
        }
        if let Some(file) = inner.file.as_mut() {
            let line = serde_json::to_string(outcome).map_err(|e| Error::Journal(format!("encode: {e}")))?;
            let _ = file.write_all(&line.as_bytes()[..line.len() / 2]);
        }
        inner.halted = true;
        Ok(())
    }

    /// Refuses all further appends.
    pub fn halt(&self) {
        if let Ok(mut inner) = self.inner.lock() {
            inner.halted = true;
        }
    }

    pub fn get(&self, clip_id: &str, stage: Stage) -> Option<StageOutcome> {
        let inner = self.lock().ok()?;
        let i = *inner.index.get(&(clip_id.to_string(), stage))?;
        Some(inner.records[i].clone())
    }

    pub fn contains(&self, clip_id: &str, stage: Stage) -> bool {
        self.lock()
            .map(|i| i.index.contains_key(&(clip_id.to_string(), stage)))
            .unwrap_or(false)
    }

    pub fn records(&self) -> Vec<StageOutcome> {
        self.lock().map(|i| i.records.clone()).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.lock().map(|i| i.records.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
