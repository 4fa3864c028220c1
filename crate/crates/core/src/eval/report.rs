//! JSON run reports.
//!
//! Every report is one JSON object with the fields of [`Report`]:
//! `format` (currently `1`), `kind` (the producing command), `config_hash`
//! (16 hex digits, or null when no training config applies), `metrics`
//! (command-specific object), `trace` (optional per-round or per-episode
//! data) and `notes` (free-text remarks).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const REPORT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: u32,
    pub kind: String,
    pub config_hash: Option<String>,
    pub metrics: Value,
    pub trace: Option<Value>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(kind: &str, config_hash: Option<String>, metrics: Value) -> Self {
        Self {
            format: REPORT_FORMAT,
            kind: kind.to_string(),
            config_hash,
            metrics,
            trace: None,
            notes: Vec::new(),
        }
    }

    pub fn with_trace(mut self, trace: Value) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are plain JSON")
    }
}

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    std::fs::write(path, report.to_json() + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trips_through_json() {
        let r = Report::new("eval-disc", Some("abc".into()), json!({"auc": 0.8})).with_note("n");
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.format, 1);
    }
}
