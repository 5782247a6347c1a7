//! Execution-failure records and their grouping into clusters.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::page::css::Css;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageState {
    pub url: String,
    /// Elements present on the page when the step failed.
    pub element_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub step_index: u32,
    pub selector_attempted: String,
    pub error_message: String,
    pub page_state: PageState,
    pub job_id: String,
    pub recorded_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredFailure {
    pub id: u64,
    #[serde(flatten)]
    pub record: FailureRecord,
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("failure record has an empty {0}")]
    InvalidRecord(&'static str),
    #[error("failure store {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("failure store {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("failure store is empty")]
    EmptyStore,
}

#[derive(Debug, Default)]
struct Inner {
    records: Vec<StoredFailure>,
    file: Option<File>,
}

/// Append-only failure log; in memory, or backed by an NDJSON file.
#[derive(Debug, Default)]
pub struct FailureStore {
    path: Option<PathBuf>,
    inner: RwLock<Inner>,
}

impl FailureRecord {
    fn check(&self) -> Result<(), StorageError> {
        let empty = |s: &str| s.trim().is_empty();
        if self.step_index == 0 {
            return Err(StorageError::InvalidRecord("step_index"));
        }
        if empty(&self.selector_attempted) {
            return Err(StorageError::InvalidRecord("selector_attempted"));
        }
        if empty(&self.error_message) {
            return Err(StorageError::InvalidRecord("error_message"));
        }
        if empty(&self.page_state.url) {
            return Err(StorageError::InvalidRecord("page_state.url"));
        }
        if empty(&self.job_id) {
            return Err(StorageError::InvalidRecord("job_id"));
        }
        Ok(())
    }
}

impl FailureStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store file and loads its records. A torn final
    /// line left by an interrupted write is dropped.
    pub fn open(path: &Path) -> Result<Self, StorageError> {
        let io = |source| StorageError::Io { path: path.to_path_buf(), source };
        let mut records = Vec::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io)?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_str::<StoredFailure>(line) {
                    Ok(r) => {
                        records.push(r);
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(_) if i + 1 == last => break,
                    Err(e) => {
                        return Err(StorageError::Corrupt {
                            path: path.to_path_buf(),
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if file.metadata().map_err(io)?.len() > valid_len {
            file.set_len(valid_len).map_err(io)?;
        }
        Ok(FailureStore { path: Some(path.to_path_buf()), inner: RwLock::new(Inner { records, file: Some(file) }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Appends a record and returns its id (1, 2, 3, ...).
    pub fn record_failure(&self, rec: FailureRecord) -> Result<u64, StorageError> {
        rec.check()?;
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        let id = inner.records.last().map_or(1, |r| r.id + 1);
        let stored = StoredFailure { id, record: rec };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&stored).expect("record serializes");
            line.push('\n');
            let path = self.path.clone().unwrap_or_default();
            file.write_all(line.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|source| StorageError::Io { path, source })?;
        }
        inner.records.push(stored);
        Ok(id)
    }

    /// Snapshot of every record, in id order.
    pub fn records(&self) -> Vec<StoredFailure> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).records.clone()
    }

    pub fn get(&self, id: u64) -> Option<StoredFailure> {
        let inner = self.inner.read().unwrap_or_else(|e| e.into_inner());
        inner.records.iter().find(|r| r.id == id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterSignature {
    pub error_class: String,
    pub selector_shape: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCluster {
    pub signature: ClusterSignature,
    pub members: Vec<u64>,
    pub count: usize,
}

const ERROR_CLASSES: &[(&[&str], &str)] = &[
    (&["assert"], "assertion_failed"),
    (&["ambiguous"], "ambiguous_selector"),
    (&["not found", "no such element"], "element_not_found"),
    (&["timeout", "timed out"], "timeout"),
    (&["not interactable", "not visible"], "not_interactable"),
    (&["readonly", "invalid element state"], "readonly"),
    (&["stale"], "stale_element"),
    (&["not a page", "404", "403"], "not_a_page"),
    (&["form rejected", "required field"], "form_validation"),
    (&["credentials"], "bad_credentials"),
    (&["guardrail"], "guardrail_blocked"),
];

/// Coarse error class from a free-text failure message.
pub fn error_class(message: &str) -> String {
    let m = message.to_lowercase();
    ERROR_CLASSES
        .iter()
        .find(|(needles, _)| needles.iter().any(|n| m.contains(n)))
        .map_or("other", |(_, class)| class)
        .to_string()
}

/// The attempted selector with ids, attribute values and text hints
/// wildcarded; URL targets get numeric path segments wildcarded.
pub fn selector_shape(attempted: &str) -> String {
    let (base, text) = match attempted.find(" (text ") {
        Some(pos) => (&attempted[..pos], " (text *)"),
        None => (attempted, ""),
    };
    let base = base.trim();
    if base.starts_with('/') || base.contains("://") {
        let path = base.split_once("://").map_or(base, |(_, rest)| rest.find('/').map_or("/", |i| &rest[i..]));
        let segs: Vec<&str> =
            path.split('/').map(|s| if s.chars().any(|c| c.is_ascii_digit()) { "*" } else { s }).collect();
        return format!("url:{}", segs.join("/"));
    }
    match Css::parse(base) {
        Ok(css) => format!("{}{text}", css.shape()),
        Err(_) => format!("{base}{text}"),
    }
}

/// Groups records by (error class, selector shape), largest group first.
pub fn cluster_records(records: &[StoredFailure]) -> Result<Vec<FailureCluster>, ClusterError> {
    if records.is_empty() {
        return Err(ClusterError::EmptyStore);
    }
    let mut groups: BTreeMap<ClusterSignature, Vec<u64>> = BTreeMap::new();
    for r in records {
        let sig = ClusterSignature {
            error_class: error_class(&r.record.error_message),
            selector_shape: selector_shape(&r.record.selector_attempted),
        };
        groups.entry(sig).or_default().push(r.id);
    }
    let mut clusters: Vec<FailureCluster> = groups
        .into_iter()
        .map(|(signature, mut members)| {
            members.sort_unstable();
            FailureCluster { signature, count: members.len(), members }
        })
        .collect();
    clusters.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.signature.cmp(&b.signature)));
    Ok(clusters)
}

pub fn cluster_failures(store: &FailureStore) -> Result<Vec<FailureCluster>, ClusterError> {
    cluster_records(&store.records())
}
