use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

use super::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Served,
    NoReplicasAvailable,
    ReadError,
    Applied,
    WriteRejected,
    WriteError,
    Queued,
    Completed,
    Failed,
}

/// One routed request. `target` is an instance id for reads and `"master"` for writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub ts: Timestamp,
    pub kind: RequestKind,
    pub mode: Mode,
    pub target: String,
    pub outcome: Outcome,
}

impl AuditRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("audit records always serialize")
    }
}

/// Append-only audit trail, kept in memory and optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct AuditLog {
    records: Mutex<Vec<AuditRecord>>,
    file: Option<Mutex<File>>,
    disabled: bool,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_file(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            records: Mutex::default(),
            file: Some(Mutex::new(file)),
            disabled: false,
        })
    }

    /// A log that drops every record, for long simulations.
    pub fn disabled() -> Self {
        AuditLog {
            disabled: true,
            ..Self::default()
        }
    }

    pub fn append(&self, record: AuditRecord) {
        if self.disabled {
            return;
        }
        if let Some(file) = &self.file {
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            // The in-memory copy stays authoritative if the mirror fails.
            let _ = writeln!(f, "{}", record.to_json());
        }
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(record);
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn to_jsonl(&self) -> String {
        self.records().iter().map(|r| r.to_json() + "\n").collect()
    }
}
