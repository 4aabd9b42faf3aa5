//! Append-only record of every oracle call for replay and audit.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// One oracle call: what was asked, what came back, how it was read.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    /// Seconds since the Unix epoch at append time.
    pub timestamp: f64,
    /// Call-site label, e.g. `direct`, `point-estimate`, `monte-carlo`,
    /// `step-generation`, `reversibility`, `embed`.
    pub method: String,
    pub prompt: String,
    pub raw_reply: String,
    pub parsed_result: serde_json::Value,
    pub provider_id: String,
}

struct Inner {
    records: Vec<TranscriptRecord>,
    writer: Option<BufWriter<File>>,
}

/// Shared, serialized transcript writer. Cloning shares the same log.
#[derive(Clone)]
pub struct Transcript {
    inner: Arc<Mutex<Inner>>,
}

impl Transcript {
    /// Keeps records in memory only.
    pub fn in_memory() -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                records: Vec::new(),
                writer: None,
            })),
        }
    }

    /// Appends each record as one JSON line to `path` as it arrives.
    pub fn appending_to(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: Arc::new(Mutex::new(Inner {
                records: Vec::new(),
                writer: Some(BufWriter::new(file)),
            })),
        })
    }

    pub fn append(
        &self,
        method: &str,
        prompt: &str,
        raw_reply: &str,
        parsed_result: serde_json::Value,
        provider_id: &str,
    ) {
        let record = TranscriptRecord {
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            method: method.to_string(),
            prompt: prompt.to_string(),
            raw_reply: raw_reply.to_string(),
            parsed_result,
            provider_id: provider_id.to_string(),
        };
        let mut inner = self.inner.lock().unwrap();
        if let Some(w) = inner.writer.as_mut() {
            if let Ok(line) = serde_json::to_string(&record) {
                let _ = writeln!(w, "{line}");
                let _ = w.flush();
            }
        }
        inner.records.push(record);
    }

    /// Snapshot of all records appended so far.
    pub fn records(&self) -> Vec<TranscriptRecord> {
        self.inner.lock().unwrap().records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
