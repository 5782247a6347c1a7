//! Worker loop: recover stuck jobs, claim, run, heartbeat, complete.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::model::{JobRecord, Lease, Outcome, QueueError};
use crate::queue::Queue;

/// What an executor reports for one job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecOutcome {
    Succeeded {
        result_ref: Option<String>,
    },
    Failed {
        result_ref: Option<String>,
    },
    /// The worker process died mid-job; nothing is written back.
    Crashed,
}

/// Handle an executor uses to keep its lease alive.
pub struct JobControl<'a> {
    queue: &'a Queue,
    lease: &'a Lease,
    last_beat: Mutex<u64>,
    lost: AtomicBool,
}

impl<'a> JobControl<'a> {
    fn new(queue: &'a Queue, lease: &'a Lease) -> Self {
        JobControl { queue, lease, last_beat: Mutex::new(queue.clock().now_ms()), lost: AtomicBool::new(false) }
    }

    pub fn lease(&self) -> &Lease {
        self.lease
    }

    /// Heartbeats when one is due. An error means ownership is gone and
    /// the executor should stop.
    pub fn tick(&self) -> Result<(), QueueError> {
        if self.lost.load(Ordering::SeqCst) {
            return Err(self.not_owner());
        }
        let now = self.queue.clock().now_ms();
        let mut last = self.last_beat.lock().unwrap_or_else(|e| e.into_inner());
        if now.saturating_sub(*last) < self.queue.config().heartbeat_interval_ms {
            return Ok(());
        }
        match self.queue.heartbeat(self.lease) {
            Ok(_) => {
                *last = now;
                Ok(())
            }
            Err(e) => {
                self.lost.store(true, Ordering::SeqCst);
                Err(e)
            }
        }
    }

    pub fn is_lost(&self) -> bool {
        self.lost.load(Ordering::SeqCst)
    }

    fn not_owner(&self) -> QueueError {
        QueueError::NotOwner {
            job_id: self.lease.job_id.clone(),
            worker_id: self.lease.worker_id.clone(),
            epoch: self.lease.epoch,
        }
    }
}

pub trait Executor: Sync {
    fn execute(&self, job: &JobRecord, ctl: &JobControl<'_>) -> ExecOutcome;
}

impl<F> Executor for F
where
    F: Fn(&JobRecord, &JobControl<'_>) -> ExecOutcome + Sync,
{
    fn execute(&self, job: &JobRecord, ctl: &JobControl<'_>) -> ExecOutcome {
        self(job, ctl)
    }
}

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    pub worker_id: String,
    /// Return as soon as no pending job is found.
    pub stop_when_idle: bool,
    pub max_jobs: Option<usize>,
    /// Heartbeat from a helper thread while the executor runs. Needs a
    /// wall clock; virtual clocks should rely on `JobControl::tick`.
    pub background_heartbeat: bool,
}

impl WorkerOptions {
    pub fn new(worker_id: impl Into<String>) -> Self {
        WorkerOptions {
            worker_id: worker_id.into(),
            stop_when_idle: false,
            max_jobs: None,
            background_heartbeat: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerReport {
    pub succeeded: Vec<String>,
    pub failed: Vec<String>,
    /// Jobs whose lease was lost before completion.
    pub abandoned: Vec<String>,
    pub recovered: Vec<String>,
    pub crashed: bool,
    /// Storage errors hit along the way; the loop kept going.
    pub errors: Vec<String>,
}

impl WorkerReport {
    pub fn executed(&self) -> usize {
        self.succeeded.len() + self.failed.len() + self.abandoned.len()
    }
}

pub fn run_worker_loop(
    queue: &Queue,
    executor: &dyn Executor,
    opts: &WorkerOptions,
    shutdown: &AtomicBool,
) -> WorkerReport {
    let mut report = WorkerReport::default();
    while !shutdown.load(Ordering::SeqCst) && !report.crashed {
        if opts.max_jobs.is_some_and(|m| report.executed() >= m) {
            break;
        }
        match iteration(queue, executor, opts, &mut report) {
            Ok(true) => {}
            Ok(false) if opts.stop_when_idle => break,
            Ok(false) => queue.clock().sleep_ms(queue.config().poll_interval_ms),
            Err(e) => {
                report.errors.push(e.to_string());
                queue.clock().sleep_ms(queue.config().poll_interval_ms);
            }
        }
    }
    report
}

/// One claim-execute-complete round. Ok(false) when nothing was pending.
fn iteration(
    queue: &Queue,
    executor: &dyn Executor,
    opts: &WorkerOptions,
    report: &mut WorkerReport,
) -> Result<bool, QueueError> {
    report.recovered.extend(queue.recover_stuck()?);
    let Some((_, lease)) = queue.claim_next(&opts.worker_id)? else {
        return Ok(false);
    };
    let job = match queue.mark_running(&lease) {
        Ok(job) => job,
        Err(QueueError::NotOwner { .. }) => {
            report.abandoned.push(lease.job_id.clone());
            return Ok(true);
        }
        Err(e) => return Err(e),
    };
    let ctl = JobControl::new(queue, &lease);
    let (outcome, result_ref) = match run_guarded(executor, &job, &ctl, opts.background_heartbeat) {
        ExecOutcome::Crashed => {
            report.crashed = true;
            return Ok(true);
        }
        ExecOutcome::Succeeded { result_ref } => (Outcome::Succeeded, result_ref),
        ExecOutcome::Failed { result_ref } => (Outcome::Failed, result_ref),
    };
    if ctl.is_lost() {
        report.abandoned.push(lease.job_id.clone());
        return Ok(true);
    }
    match queue.complete(&lease, outcome, result_ref) {
        Ok(_) if outcome == Outcome::Succeeded => report.succeeded.push(lease.job_id.clone()),
        Ok(_) => report.failed.push(lease.job_id.clone()),
        Err(QueueError::NotOwner { .. } | QueueError::TerminalJob { .. }) => {
            report.abandoned.push(lease.job_id.clone())
        }
        Err(e) => return Err(e),
    }
    Ok(true)
}

fn run_guarded(executor: &dyn Executor, job: &JobRecord, ctl: &JobControl<'_>, background: bool) -> ExecOutcome {
    let call = || catch_unwind(AssertUnwindSafe(|| executor.execute(job, ctl))).unwrap_or(ExecOutcome::Crashed);
    if !background {
        return call();
    }
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        s.spawn(|| {
            while !done.load(Ordering::SeqCst) && !ctl.is_lost() {
                let _ = ctl.tick();
                std::thread::sleep(Duration::from_millis(20));
            }
        });
        let out = call();
        done.store(true, Ordering::SeqCst);
        out
    })
}
