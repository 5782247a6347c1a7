//! Single-file store: an append-only NDJSON journal replayed on open.
//! Every operation holds an exclusive lock on the file, first catches up
//! with lines other processes appended, then appends its own.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Expected, JobStore, StoreError};
use crate::model::JobRecord;

/// First line of every journal.
pub const JOURNAL_FORMAT: &str = "testforge-jobs/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Entry {
    Header { format: String },
    Seq { value: u64 },
    Put { record: JobRecord },
}

struct Inner {
    file: File,
    /// Bytes of the journal already applied.
    offset: u64,
    lines: usize,
    seq: u64,
    jobs: BTreeMap<String, JobRecord>,
}

pub struct FileStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for FileStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileStore").field("path", &self.path).finish()
    }
}

impl FileStore {
    /// Opens or creates the journal at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<FileStore, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        let file = OpenOptions::new().read(true).append(true).create(true).open(&path).map_err(io)?;
        let store = FileStore {
            path: path.clone(),
            inner: Mutex::new(Inner { file, offset: 0, lines: 0, seq: 0, jobs: BTreeMap::new() }),
        };
        store.with_lock(|inner| {
            if inner.lines == 0 && inner.offset == 0 {
                append(&path, inner, &Entry::Header { format: JOURNAL_FORMAT.into() })?;
            }
            Ok(())
        })?;
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn with_lock<T>(&self, f: impl FnOnce(&mut Inner) -> Result<T, StoreError>) -> Result<T, StoreError> {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let io = |source| StoreError::Io { path: self.path.clone(), source };
        inner.file.lock().map_err(io)?;
        let result = catch_up(&self.path, &mut inner).and_then(|_| f(&mut inner));
        let unlocked = inner.file.unlock().map_err(io);
        let value = result?;
        unlocked?;
        Ok(value)
    }
}

fn catch_up(path: &Path, inner: &mut Inner) -> Result<(), StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let len = inner.file.metadata().map_err(io)?.len();
    if len <= inner.offset {
        return Ok(());
    }
    inner.file.seek(SeekFrom::Start(inner.offset)).map_err(io)?;
    let mut buf = Vec::with_capacity((len - inner.offset) as usize);
    (&inner.file).take(len - inner.offset).read_to_end(&mut buf).map_err(io)?;
    let complete = buf.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    for raw in buf[..complete].split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        inner.lines += 1;
        let entry: Entry = serde_json::from_slice(raw).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: inner.lines,
            reason: e.to_string(),
        })?;
        match entry {
            Entry::Header { format } if format == JOURNAL_FORMAT && inner.lines == 1 => {}
            Entry::Header { format } => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: inner.lines,
                    reason: format!("unexpected header {format:?}"),
                })
            }
            Entry::Seq { value } => inner.seq = inner.seq.max(value),
            Entry::Put { record } => {
                inner.jobs.insert(record.job_id.clone(), record);
            }
        }
    }
    inner.offset += complete as u64;
    if complete < buf.len() {
        // A torn tail from a crashed writer; we hold the lock, so drop it.
        inner.file.set_len(inner.offset).map_err(io)?;
    }
    Ok(())
}

fn append(path: &Path, inner: &mut Inner, entry: &Entry) -> Result<(), StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let mut line = serde_json::to_vec(entry).expect("journal entry serializes");
    line.push(b'\n');
    inner.file.write_all(&line).map_err(io)?;
    inner.file.sync_data().map_err(io)?;
    inner.offset += line.len() as u64;
    inner.lines += 1;
    Ok(())
}

impl JobStore for FileStore {
    fn next_id(&self) -> Result<u64, StoreError> {
        self.with_lock(|inner| {
            let value = inner.seq + 1;
            append(&self.path, inner, &Entry::Seq { value })?;
            inner.seq = value;
            Ok(value)
        })
    }

    fn insert(&self, record: JobRecord) -> Result<(), StoreError> {
        self.with_lock(|inner| {
            if inner.jobs.contains_key(&record.job_id) {
                return Err(StoreError::Duplicate(record.job_id));
            }
            append(&self.path, inner, &Entry::Put { record: record.clone() })?;
            inner.jobs.insert(record.job_id.clone(), record);
            Ok(())
        })
    }

    fn get(&self, job_id: &str) -> Result<Option<JobRecord>, StoreError> {
        self.with_lock(|inner| Ok(inner.jobs.get(job_id).cloned()))
    }

    fn list(&self) -> Result<Vec<JobRecord>, StoreError> {
        self.with_lock(|inner| Ok(inner.jobs.values().cloned().collect()))
    }

    fn compare_and_set(&self, expected: &Expected, new: JobRecord) -> Result<bool, StoreError> {
        self.with_lock(|inner| match inner.jobs.get(&new.job_id) {
            Some(cur) if expected.matches(cur) => {
                append(&self.path, inner, &Entry::Put { record: new.clone() })?;
                inner.jobs.insert(new.job_id.clone(), new);
                Ok(true)
            }
            _ => Ok(false),
        })
    }
}
