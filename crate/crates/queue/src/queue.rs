//! Queue operations. Each state change is a compare-and-set against the
//! record read just before, retried when another writer got there first.

use std::sync::Arc;

use testforge_core::Clock;

use crate::model::{is_edge, JobKind, JobRecord, JobStatus, Lease, Outcome, QueueConfig, QueueError};
use crate::store::{Expected, JobStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnqueueRequest {
    pub session_id: String,
    pub target_url: String,
    pub instructions: String,
    pub kind: JobKind,
}

#[derive(Clone)]
pub struct Queue {
    store: Arc<dyn JobStore>,
    clock: Arc<dyn Clock>,
    cfg: QueueConfig,
}

impl std::fmt::Debug for Queue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Queue").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

fn advance(from: &JobRecord, to: JobStatus) -> Result<JobRecord, QueueError> {
    if !is_edge(from.status, to) {
        return Err(QueueError::InvalidTransition { job_id: from.job_id.clone(), from: from.status, to });
    }
    let mut next = from.clone();
    next.status = to;
    Ok(next)
}

impl Queue {
    pub fn new(store: Arc<dyn JobStore>, clock: Arc<dyn Clock>, cfg: QueueConfig) -> Result<Queue, QueueError> {
        cfg.validate()?;
        Ok(Queue { store, clock, cfg })
    }

    pub fn config(&self) -> &QueueConfig {
        &self.cfg
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn store(&self) -> &Arc<dyn JobStore> {
        &self.store
    }

    pub fn enqueue(&self, req: EnqueueRequest) -> Result<String, QueueError> {
        if req.session_id.trim().is_empty() {
            return Err(QueueError::InvalidRequest("session_id is empty".into()));
        }
        match url::Url::parse(req.target_url.trim()) {
            Ok(u) if !u.cannot_be_a_base() => {}
            _ => return Err(QueueError::InvalidRequest(format!("target_url {:?} is not absolute", req.target_url))),
        }
        if req.instructions.trim().is_empty() {
            return Err(QueueError::InvalidRequest("instructions are empty".into()));
        }
        let seq = self.store.next_id()?;
        let record = JobRecord {
            job_id: format!("job-{seq:08}"),
            session_id: req.session_id,
            target_url: req.target_url,
            instructions: req.instructions,
            kind: req.kind,
            status: JobStatus::Pending,
            worker_id: None,
            epoch: 0,
            created_at: self.clock.now_ms(),
            claimed_at: None,
            last_heartbeat_at: None,
            result_ref: None,
        };
        let id = record.job_id.clone();
        self.store.insert(record)?;
        Ok(id)
    }

    pub fn get(&self, job_id: &str) -> Result<JobRecord, QueueError> {
        self.store.get(job_id)?.ok_or_else(|| QueueError::NotFound(job_id.to_string()))
    }

    pub fn list(&self) -> Result<Vec<JobRecord>, QueueError> {
        Ok(self.store.list()?)
    }

    /// Claims the oldest pending job for `worker_id`, if any.
    pub fn claim_next(&self, worker_id: &str) -> Result<Option<(JobRecord, Lease)>, QueueError> {
        if worker_id.trim().is_empty() {
            return Err(QueueError::InvalidRequest("worker_id is empty".into()));
        }
        loop {
            let mut pending: Vec<JobRecord> =
                self.store.list()?.into_iter().filter(|j| j.status == JobStatus::Pending).collect();
            if pending.is_empty() {
                return Ok(None);
            }
            pending.sort_by(|a, b| a.fifo_key().cmp(&b.fifo_key()));
            let mut lost_any = false;
            for job in pending {
                let now = self.clock.now_ms();
                let mut next = advance(&job, JobStatus::Claimed)?;
                next.worker_id = Some(worker_id.to_string());
                next.epoch = job.epoch + 1;
                next.claimed_at = Some(now);
                next.last_heartbeat_at = Some(now);
                if self.store.compare_and_set(&Expected::of(&job), next.clone())? {
                    let lease =
                        Lease { job_id: next.job_id.clone(), worker_id: worker_id.to_string(), epoch: next.epoch };
                    return Ok(Some((next, lease)));
                }
                lost_any = true;
            }
            if !lost_any {
                return Ok(None);
            }
        }
    }

    /// Reads the job and checks `lease` still owns it.
    fn owned(&self, lease: &Lease) -> Result<JobRecord, QueueError> {
        let job = self.get(&lease.job_id)?;
        if job.status.is_terminal() {
            return Err(QueueError::TerminalJob { job_id: job.job_id, status: job.status });
        }
        if !job.status.is_owned() || job.worker_id.as_deref() != Some(&lease.worker_id) || job.epoch != lease.epoch {
            return Err(QueueError::NotOwner {
                job_id: lease.job_id.clone(),
                worker_id: lease.worker_id.clone(),
                epoch: lease.epoch,
            });
        }
        Ok(job)
    }

    pub fn mark_running(&self, lease: &Lease) -> Result<JobRecord, QueueError> {
        loop {
            let job = self.owned(lease)?;
            let mut next = advance(&job, JobStatus::Running)?;
            next.last_heartbeat_at = Some(self.clock.now_ms().max(job.last_heartbeat_at.unwrap_or(0)));
            if self.store.compare_and_set(&Expected::of(&job), next.clone())? {
                return Ok(next);
            }
        }
    }

    pub fn heartbeat(&self, lease: &Lease) -> Result<JobRecord, QueueError> {
        loop {
            let job = self.owned(lease)?;
            let mut next = job.clone();
            next.last_heartbeat_at = Some(self.clock.now_ms().max(job.last_heartbeat_at.unwrap_or(0)));
            if self.store.compare_and_set(&Expected::of(&job), next.clone())? {
                return Ok(next);
            }
        }
    }

    pub fn complete(
        &self,
        lease: &Lease,
        outcome: Outcome,
        result_ref: Option<String>,
    ) -> Result<JobRecord, QueueError> {
        loop {
            let job = self.owned(lease)?;
            let to = match outcome {
                Outcome::Succeeded => JobStatus::Succeeded,
                Outcome::Failed => JobStatus::Failed,
            };
            let mut next = advance(&job, to)?;
            next.worker_id = None;
            next.result_ref = result_ref.clone();
            if self.store.compare_and_set(&Expected::of(&job), next.clone())? {
                return Ok(next);
            }
        }
    }

    /// Returns jobs whose owner went silent to pending. Yields the ids re-queued.
    pub fn recover_stuck(&self) -> Result<Vec<String>, QueueError> {
        let mut requeued = Vec::new();
        for job in self.store.list()? {
            let now = self.clock.now_ms();
            let orphan = match job.status {
                JobStatus::Claimed | JobStatus::Running => {
                    let last = job.last_heartbeat_at.or(job.claimed_at).unwrap_or(job.created_at);
                    if now.saturating_sub(last) <= self.cfg.stuck_timeout_ms {
                        continue;
                    }
                    let mut next = advance(&job, JobStatus::Orphaned)?;
                    next.worker_id = None;
                    if !self.store.compare_and_set(&Expected::of(&job), next.clone())? {
                        continue;
                    }
                    next
                }
                JobStatus::Orphaned => job,
                _ => continue,
            };
            let mut next = advance(&orphan, JobStatus::Pending)?;
            next.claimed_at = None;
            next.last_heartbeat_at = None;
            if self.store.compare_and_set(&Expected::of(&orphan), next)? {
                requeued.push(orphan.job_id);
            }
        }
        Ok(requeued)
    }
}
