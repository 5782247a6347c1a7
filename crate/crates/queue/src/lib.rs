//! Persistent job queue for long-running browser test sessions.
//!
//! Jobs move `pending -> claimed -> running -> succeeded | failed`; owners
//! that stop heartbeating are moved to `orphaned` and back to `pending`.
//! Every change is a compare-and-set, so a job is claimed by at most one
//! worker at a time and completed at most once.

pub mod arch;
pub mod model;
pub mod queue;
pub mod store;
pub mod worker;

pub use model::{is_edge, JobKind, JobRecord, JobStatus, Lease, Outcome, QueueConfig, QueueError, EDGES};
pub use queue::{EnqueueRequest, Queue};
pub use store::{Expected, FileStore, JobStore, MemoryStore, StoreError, JOURNAL_FORMAT};
pub use worker::{run_worker_loop, ExecOutcome, Executor, JobControl, WorkerOptions, WorkerReport};
