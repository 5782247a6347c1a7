#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use testforge_core::{Clock, SimClock};
use testforge_queue::{
    is_edge, EnqueueRequest, Expected, JobKind, JobRecord, JobStore, MemoryStore, Queue, QueueConfig, StoreError,
};

/// Store wrapper that fails the test on any write outside the declared edges.
#[derive(Default)]
pub struct EdgeCheckingStore {
    pub inner: MemoryStore,
    pub writes: Mutex<Vec<(String, testforge_queue::JobStatus, testforge_queue::JobStatus)>>,
}

impl JobStore for EdgeCheckingStore {
    fn next_id(&self) -> Result<u64, StoreError> {
        self.inner.next_id()
    }
    fn insert(&self, record: JobRecord) -> Result<(), StoreError> {
        assert_eq!(record.status, testforge_queue::JobStatus::Pending, "jobs are born pending");
        record.check().unwrap();
        self.inner.insert(record)
    }
    fn get(&self, job_id: &str) -> Result<Option<JobRecord>, StoreError> {
        self.inner.get(job_id)
    }
    fn list(&self) -> Result<Vec<JobRecord>, StoreError> {
        self.inner.list()
    }
    fn compare_and_set(&self, expected: &Expected, new: JobRecord) -> Result<bool, StoreError> {
        let from = expected.status;
        let to = new.status;
        assert!(from == to || is_edge(from, to), "write {from} -> {to} on {}", new.job_id);
        new.check().unwrap();
        let ok = self.inner.compare_and_set(expected, new.clone())?;
        if ok && from != to {
            self.writes.lock().unwrap().push((new.job_id, from, to));
        }
        Ok(ok)
    }
}

pub fn request(n: usize) -> EnqueueRequest {
    EnqueueRequest {
        session_id: format!("s{n}"),
        target_url: format!("https://example.test/page/{n}"),
        instructions: format!("Click the button number {n}"),
        kind: JobKind::Functional,
    }
}

pub fn sim_queue(store: Arc<dyn JobStore>) -> (Queue, SimClock) {
    let clock = SimClock::starting_at(1_000_000);
    let q = Queue::new(store, Arc::new(clock.clone()) as Arc<dyn Clock>, QueueConfig::default()).unwrap();
    (q, clock)
}
