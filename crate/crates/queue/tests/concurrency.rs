mod common;

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Barrier, Mutex};

use common::request;
use testforge_core::{Clock, SystemClock};
use testforge_queue::{
    run_worker_loop, ExecOutcome, FileStore, JobRecord, JobStatus, JobStore, MemoryStore, Queue, QueueConfig,
    WorkerOptions,
};

fn fast_cfg() -> QueueConfig {
    QueueConfig { poll_interval_ms: 1, heartbeat_interval_ms: 30_000, stuck_timeout_ms: 90_000 }
}

fn wall_queue(store: Arc<dyn JobStore>) -> Queue {
    Queue::new(store, Arc::new(SystemClock::new()) as Arc<dyn Clock>, fast_cfg()).unwrap()
}

fn race_for_one_job(make: impl Fn() -> Arc<dyn JobStore>) {
    let store = make();
    wall_queue(store.clone()).enqueue(request(0)).unwrap();
    let barrier = Barrier::new(10);
    let wins: Vec<bool> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10)
            .map(|w| {
                let q = wall_queue(store.clone());
                let barrier = &barrier;
                s.spawn(move || {
                    barrier.wait();
                    q.claim_next(&format!("w{w}")).unwrap().is_some()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(wins.iter().filter(|w| **w).count(), 1);
    assert_eq!(wins.iter().filter(|w| !**w).count(), 9);
}

#[test]
fn ten_workers_race_for_one_job_memory() {
    for _ in 0..20 {
        race_for_one_job(|| Arc::new(MemoryStore::new()));
    }
}

#[test]
fn ten_workers_race_for_one_job_file() {
    let dir = tempfile::tempdir().unwrap();
    for round in 0..5 {
        let path = dir.path().join(format!("jobs-{round}.ndjson"));
        // Each claimer opens its own handle, as separate processes would.
        let store = Arc::new(FileStore::open(&path).unwrap());
        race_for_one_job(|| store.clone());
        let mut owners = 0;
        for j in FileStore::open(&path).unwrap().list().unwrap() {
            owners += usize::from(j.status == JobStatus::Claimed);
        }
        assert_eq!(owners, 1);
    }
}

/// Runs `workers` loops to completion over `jobs` jobs and returns
/// (job_id -> number of executions, epochs seen per job).
fn drain(stores: Vec<Arc<dyn JobStore>>, jobs: usize) -> BTreeMap<String, Vec<u32>> {
    let q0 = wall_queue(stores[0].clone());
    let ids: Vec<String> = (0..jobs).map(|i| q0.enqueue(request(i)).unwrap()).collect();
    let starts: Mutex<BTreeMap<String, Vec<u32>>> = Mutex::new(BTreeMap::new());
    let exec = |job: &JobRecord, ctl: &testforge_queue::JobControl<'_>| {
        starts.lock().unwrap().entry(job.job_id.clone()).or_default().push(ctl.lease().epoch);
        if job.job_id.ends_with('7') {
            ExecOutcome::Failed { result_ref: None }
        } else {
            ExecOutcome::Succeeded { result_ref: Some(format!("results/{}", job.job_id)) }
        }
    };
    let reports = std::thread::scope(|s| {
        let handles: Vec<_> = stores
            .iter()
            .enumerate()
            .map(|(w, store)| {
                let q = wall_queue(store.clone());
                let exec = &exec;
                s.spawn(move || {
                    let mut opts = WorkerOptions::new(format!("worker-{w}"));
                    opts.stop_when_idle = true;
                    run_worker_loop(&q, exec, &opts, &AtomicBool::new(false))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
    });
    for r in &reports {
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        assert!(r.abandoned.is_empty());
    }
    let done: usize = reports.iter().map(|r| r.succeeded.len() + r.failed.len()).sum();
    assert_eq!(done, jobs);
    let all = q0.list().unwrap();
    assert_eq!(all.len(), jobs);
    for j in &all {
        assert!(j.status.is_terminal(), "{} is {}", j.job_id, j.status);
        assert_eq!(j.status == JobStatus::Failed, j.job_id.ends_with('7'));
    }
    let starts = starts.into_inner().unwrap();
    assert_eq!(starts.keys().cloned().collect::<Vec<_>>(), ids);
    starts
}

#[test]
fn ten_workers_two_hundred_jobs_exactly_once_memory() {
    let store: Arc<dyn JobStore> = Arc::new(MemoryStore::new());
    let starts = drain(vec![store; 10], 200);
    for (id, epochs) in starts {
        assert_eq!(epochs, vec![1], "{id}");
    }
}

#[test]
fn ten_workers_two_hundred_jobs_exactly_once_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("jobs.ndjson");
    let stores: Vec<Arc<dyn JobStore>> =
        (0..10).map(|_| Arc::new(FileStore::open(&path).unwrap()) as Arc<dyn JobStore>).collect();
    let starts = drain(stores, 200);
    for (id, epochs) in starts {
        assert_eq!(epochs, vec![1], "{id}");
    }
    // A fresh handle replays the same terminal state.
    let replayed = FileStore::open(&path).unwrap().list().unwrap();
    assert_eq!(replayed.len(), 200);
    assert!(replayed.iter().all(|j| j.status.is_terminal()));
}
