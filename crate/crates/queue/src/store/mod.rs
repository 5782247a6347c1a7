//! Storage behind the queue. The one primitive the queue needs is
//! compare-and-set on a record's (status, worker_id, epoch).

mod file;
mod memory;

use std::path::PathBuf;

use thiserror::Error;

use crate::model::{JobRecord, JobStatus};

pub use file::{FileStore, JOURNAL_FORMAT};
pub use memory::MemoryStore;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("job {0} already exists")]
    Duplicate(String),
}

/// The state a compare-and-set expects to find.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expected {
    pub status: JobStatus,
    pub worker_id: Option<String>,
    pub epoch: u32,
}

impl Expected {
    pub fn of(r: &JobRecord) -> Self {
        Expected { status: r.status, worker_id: r.worker_id.clone(), epoch: r.epoch }
    }

    pub fn matches(&self, r: &JobRecord) -> bool {
        r.status == self.status && r.worker_id == self.worker_id && r.epoch == self.epoch
    }
}

pub trait JobStore: Send + Sync {
    /// A fresh sequence number, never handed out twice.
    fn next_id(&self) -> Result<u64, StoreError>;
    fn insert(&self, record: JobRecord) -> Result<(), StoreError>;
    fn get(&self, job_id: &str) -> Result<Option<JobRecord>, StoreError>;
    /// All jobs, ordered by id.
    fn list(&self) -> Result<Vec<JobRecord>, StoreError>;
    /// Writes `new` iff the stored record still matches `expected`.
    /// Returns false when it does not, or when the job is unknown.
    fn compare_and_set(&self, expected: &Expected, new: JobRecord) -> Result<bool, StoreError>;
}

impl<S: JobStore + ?Sized> JobStore for std::sync::Arc<S> {
    fn next_id(&self) -> Result<u64, StoreError> {
        (**self).next_id()
    }
    fn insert(&self, record: JobRecord) -> Result<(), StoreError> {
        (**self).insert(record)
    }
    fn get(&self, job_id: &str) -> Result<Option<JobRecord>, StoreError> {
        (**self).get(job_id)
    }
    fn list(&self) -> Result<Vec<JobRecord>, StoreError> {
        (**self).list()
    }
    fn compare_and_set(&self, expected: &Expected, new: JobRecord) -> Result<bool, StoreError> {
        (**self).compare_and_set(expected, new)
    }
}
