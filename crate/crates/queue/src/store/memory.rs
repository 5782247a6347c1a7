use std::collections::BTreeMap;
use std::sync::Mutex;

use super::{Expected, JobStore, StoreError};
use crate::model::JobRecord;

#[derive(Debug, Default)]
pub struct MemoryStore {
    inner: Mutex<(u64, BTreeMap<String, JobRecord>)>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, (u64, BTreeMap<String, JobRecord>)> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl JobStore for MemoryStore {
    fn next_id(&self) -> Result<u64, StoreError> {
        let mut g = self.lock();
        g.0 += 1;
        Ok(g.0)
    }

    fn insert(&self, record: JobRecord) -> Result<(), StoreError> {
        let mut g = self.lock();
        if g.1.contains_key(&record.job_id) {
            return Err(StoreError::Duplicate(record.job_id));
        }
        g.1.insert(record.job_id.clone(), record);
        Ok(())
    }

    fn get(&self, job_id: &str) -> Result<Option<JobRecord>, StoreError> {
        Ok(self.lock().1.get(job_id).cloned())
    }

    fn list(&self) -> Result<Vec<JobRecord>, StoreError> {
        Ok(self.lock().1.values().cloned().collect())
    }

    fn compare_and_set(&self, expected: &Expected, new: JobRecord) -> Result<bool, StoreError> {
        let mut g = self.lock();
        match g.1.get_mut(&new.job_id) {
            Some(cur) if expected.matches(cur) => {
                *cur = new;
                Ok(true)
            }
            _ => Ok(false),
        }
    }
}
