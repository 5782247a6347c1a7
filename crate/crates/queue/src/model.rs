//! Job records, their status machine, and queue configuration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Claimed,
    Running,
    Succeeded,
    Failed,
    Orphaned,
}

impl JobStatus {
    pub const ALL: [JobStatus; 6] = [
        JobStatus::Pending,
        JobStatus::Claimed,
        JobStatus::Running,
        JobStatus::Succeeded,
        JobStatus::Failed,
        JobStatus::Orphaned,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed)
    }

    /// Statuses in which a worker owns the job.
    pub fn is_owned(self) -> bool {
        matches!(self, JobStatus::Claimed | JobStatus::Running)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Pending => "pending",
            JobStatus::Claimed => "claimed",
            JobStatus::Running => "running",
            JobStatus::Succeeded => "succeeded",
            JobStatus::Failed => "failed",
            JobStatus::Orphaned => "orphaned",
        }
    }
}

impl fmt::Display for JobStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every transition a job may take.
pub const EDGES: [(JobStatus, JobStatus); 7] = [
    (JobStatus::Pending, JobStatus::Claimed),
    (JobStatus::Claimed, JobStatus::Running),
    (JobStatus::Running, JobStatus::Succeeded),
    (JobStatus::Running, JobStatus::Failed),
    (JobStatus::Claimed, JobStatus::Orphaned),
    (JobStatus::Running, JobStatus::Orphaned),
    (JobStatus::Orphaned, JobStatus::Pending),
];

pub fn is_edge(from: JobStatus, to: JobStatus) -> bool {
    EDGES.contains(&(from, to))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Functional,
    Security,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub session_id: String,
    pub target_url: String,
    pub instructions: String,
    pub kind: JobKind,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_id: Option<String>,
    /// Incremented on every claim; fences stale owners.
    #[serde(default)]
    pub epoch: u32,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_heartbeat_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_ref: Option<String>,
}

impl JobRecord {
    /// Checks the per-record invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.status.is_owned() != self.worker_id.is_some() {
            return Err(format!("{}: worker_id set iff claimed or running (status {})", self.job_id, self.status));
        }
        if let (Some(c), Some(h)) = (self.claimed_at, self.last_heartbeat_at) {
            if h < c {
                return Err(format!("{}: heartbeat {h} before claim {c}", self.job_id));
            }
        }
        Ok(())
    }

    /// FIFO key: creation time, then id.
    pub fn fifo_key(&self) -> (u64, &str) {
        (self.created_at, self.job_id.as_str())
    }
}

/// Proof of ownership handed out by a claim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lease {
    pub job_id: String,
    pub worker_id: String,
    pub epoch: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueConfig {
    pub poll_interval_ms: u64,
    pub heartbeat_interval_ms: u64,
    pub stuck_timeout_ms: u64,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig { poll_interval_ms: 5_000, heartbeat_interval_ms: 30_000, stuck_timeout_ms: 90_000 }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<(), QueueError> {
        if self.poll_interval_ms == 0 || self.heartbeat_interval_ms == 0 || self.stuck_timeout_ms == 0 {
            return Err(QueueError::InvalidConfig("intervals must be positive".into()));
        }
        if self.stuck_timeout_ms < 2 * self.heartbeat_interval_ms {
            return Err(QueueError::InvalidConfig(format!(
                "stuck_timeout_ms {} is below twice heartbeat_interval_ms {}",
                self.stuck_timeout_ms, self.heartbeat_interval_ms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Succeeded,
    Failed,
}

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid queue config: {0}")]
    InvalidConfig(String),
    #[error("no job {0}")]
    NotFound(String),
    #[error("job {job_id} is not owned by {worker_id} (epoch {epoch})")]
    NotOwner { job_id: String, worker_id: String, epoch: u32 },
    #[error("job {job_id} is already {status}")]
    TerminalJob { job_id: String, status: JobStatus },
    #[error("job {job_id}: {from} -> {to} is not allowed")]
    InvalidTransition { job_id: String, from: JobStatus, to: JobStatus },
    #[error(transparent)]
    Storage(#[from] StoreError),
}
