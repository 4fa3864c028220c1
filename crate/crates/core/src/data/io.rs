//! Text formats for interaction logs and item embeddings, and log ingestion.
//!
//! Log file: one `session_id<TAB>item_id<TAB>feedback_class_index` record per
//! line, grouped by session and chronological within a session.
//!
//! Embedding file: a `|E|=<int>` header, then one `item_id v1 … v|E|` line per
//! item, space separated.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::{FeedbackClass, ItemCatalog, ItemId};
use super::mdp::Session;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// One raw log record before item resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub session: String,
    pub item: String,
    pub feedback: usize,
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_embeddings(text: &str) -> Result<ItemCatalog> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing `|E|=<int>` header".into(),
    })?;
    let dim: usize = header
        .trim()
        .strip_prefix("|E|=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or(Error::Parse {
            line: 1,
            msg: format!("bad header `{header}`, expected `|E|=<int>`"),
        })?;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-empty line");
        let row: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {dim} values, found {}", row.len()),
            });
        }
        if let Some(v) = row.iter().find(|v| v.is_nan() || v.abs() >= 1.0) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("embedding value {v} outside (-1, 1)"),
            });
        }
        ids.push(id.to_string());
        values.extend(row);
    }
    let n = ids.len();
    let emb = Tensor::from_shape_vec((n, dim), values).expect("rows checked");
    ItemCatalog::new(ids, emb)
}

pub fn format_embeddings(catalog: &ItemCatalog) -> String {
    let mut out = format!("|E|={}\n", catalog.dim());
    for item in catalog.items() {
        out.push_str(catalog.id(item));
        for v in catalog.embedding(item) {
            // `Display` for f64 is the shortest representation that round-trips.
            write!(out, " {v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn parse_logs(text: &str) -> Result<Vec<LogRecord>> {
    let mut records = Vec::new();
    let mut finished: BTreeSet<String> = BTreeSet::new();
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let feedback = fields[2].trim().parse::<usize>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("feedback `{}` is not a class index", fields[2]),
        })?;
        let session = fields[0].to_string();
        if current.as_deref() != Some(session.as_str()) {
            if finished.contains(&session) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("records of session `{session}` are not contiguous"),
                });
            }
            if let Some(prev) = current.replace(session.clone()) {
                finished.insert(prev);
            }
        }
        records.push(LogRecord {
            session,
            item: fields[1].to_string(),
            feedback,
        });
    }
    Ok(records)
}

pub fn format_logs(catalog: &ItemCatalog, sessions: &[Session]) -> String {
    let mut out = String::new();
    for s in sessions {
        for (item, f) in &s.events {
            writeln!(out, "{}\t{}\t{}", s.id, catalog.id(*item), f.index()).expect("string write");
        }
    }
    out
}

/// Sessions plus the catalog they index into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub catalog: ItemCatalog,
    pub sessions: Vec<Session>,
}

impl Corpus {
    /// Occurrence count of every catalog item across all sessions.
    pub fn item_counts(&self) -> Vec<usize> {
        count_items(self.catalog.len(), &self.sessions)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::contract(e.to_string()))?;
        write_text(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let corpus: Corpus = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        for s in &corpus.sessions {
            for (item, _) in &s.events {
                corpus.catalog.check(*item)?;
            }
        }
        Ok(corpus)
    }
}

fn count_items(items: usize, sessions: &[Session]) -> Vec<usize> {
    let mut counts = vec![0; items];
    for s in sessions {
        for (item, _) in &s.events {
            counts[item.index()] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub removed_items: usize,
    pub removed_events: usize,
    pub dropped_sessions: usize,
    pub warnings: Vec<String>,
}

/// Resolves records against the catalog, grouping them into sessions.
pub fn resolve_records(records: &[LogRecord], catalog: &ItemCatalog, k: usize) -> Result<Vec<Session>> {
    let unknown: BTreeSet<&str> = records
        .iter()
        .filter(|r| catalog.resolve(&r.item).is_err())
        .map(|r| r.item.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Ingestion(unknown.into_iter().map(str::to_string).collect()));
    }
    let mut sessions: Vec<Session> = Vec::new();
    for r in records {
        let event = (catalog.resolve(&r.item)?, FeedbackClass::new(r.feedback, k)?);
        match sessions.last_mut() {
            Some(s) if s.id == r.session => s.events.push(event),
            _ => sessions.push(Session {
                id: r.session.clone(),
                events: vec![event],
            }),
        }
    }
    Ok(sessions)
}

/// Removes items seen fewer than `min_count` times (together with their
/// events) and sessions left with fewer than `n + 1` events, repeating until
/// nothing changes so that re-filtering the output is a no-op.
pub fn filter_corpus(corpus: Corpus, min_count: usize, n: usize) -> Result<(Corpus, IngestReport)> {
    if min_count == 0 {
        return Err(Error::config("min_count must be at least 1"));
    }
    let mut report = IngestReport::default();
    let Corpus {
        mut catalog,
        mut sessions,
    } = corpus;
    loop {
        let counts = count_items(catalog.len(), &sessions);
        let keep: Vec<bool> = counts.iter().map(|&c| c >= min_count).collect();
        let removed = keep.iter().filter(|k| !**k).count();
        let before = sessions.len();
        let (next_catalog, remap) = catalog.retain(&keep);
        let mut next_sessions = Vec::with_capacity(sessions.len());
        for s in sessions {
            let total = s.events.len();
            let events: Vec<_> = s
                .events
                .into_iter()
                .filter_map(|(item, f)| remap[item.index()].map(|id| (id, f)))
                .collect();
            report.removed_events += total - events.len();
            if events.len() > n {
                next_sessions.push(Session { id: s.id, events });
            }
        }
        report.removed_items += removed;
        report.dropped_sessions += before - next_sessions.len();
        catalog = next_catalog;
        sessions = next_sessions;
        if removed == 0 && before == sessions.len() {
            break;
        }
    }
    if sessions.is_empty() {
        let msg = format!("no session has at least {} events after filtering", n + 1);
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    if report.dropped_sessions > 0 {
        log::info!("dropped {} short sessions", report.dropped_sessions);
    }
    Ok((Corpus { catalog, sessions }, report))
}

/// Parses a log and an embedding file and filters rare items.
pub fn ingest_logs(
    log_path: &Path,
    embedding_path: &Path,
    min_count: usize,
    n: usize,
    k: usize,
) -> Result<(Corpus, IngestReport)> {
    let catalog = parse_embeddings(&read_text(embedding_path)?)?;
    let records = parse_logs(&read_text(log_path)?)?;
    ingest_records(&records, catalog, min_count, n, k)
}

pub fn ingest_records(
    records: &[LogRecord],
    catalog: ItemCatalog,
    min_count: usize,
    n: usize,
    k: usize,
) -> Result<(Corpus, IngestReport)> {
    let sessions = resolve_records(records, &catalog, k)?;
    filter_corpus(Corpus { catalog, sessions }, min_count, n)
}

/// Map from id string to item for quick lookups in tests and tools.
pub fn id_map(catalog: &ItemCatalog) -> HashMap<String, ItemId> {
    catalog.items().map(|i| (catalog.id(i).to_string(), i)).collect()
}
