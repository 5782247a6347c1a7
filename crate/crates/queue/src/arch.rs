//! Compares where browser-test jobs can run: a single bounded invocation,
//! a chain of bounded invocations resuming from step checkpoints, or a
//! long-lived worker that owns the job until it ends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// One invocation per job, killed at `limit_ms`.
    PureServerless { limit_ms: u64 },
    /// Invocations capped at `limit_ms`; each resume pays `resume_overhead_ms`
    /// to rebuild the browser session and at most `max_invocations` run.
    SelfResumingEdge { limit_ms: u64, resume_overhead_ms: u64, max_invocations: u32 },
    /// Long-lived workers with no per-invocation cap.
    ContainerWorkers,
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::PureServerless { .. } => "pure_serverless",
            Architecture::SelfResumingEdge { .. } => "self_resuming_edge",
            Architecture::ContainerWorkers => "container_workers",
        }
    }
}

/// A job as a list of step durations. A step cannot be split across invocations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimJob {
    pub steps_ms: Vec<u64>,
}

impl SimJob {
    pub fn total_ms(&self) -> u64 {
        self.steps_ms.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum JobFate {
    Completed { invocations: u32 },
    KilledAtLimit { completed_steps: usize },
    OutOfInvocations { completed_steps: usize },
}

impl JobFate {
    pub fn completed(self) -> bool {
        matches!(self, JobFate::Completed { .. })
    }
}

pub fn run_job(arch: &Architecture, job: &SimJob) -> JobFate {
    match *arch {
        Architecture::ContainerWorkers => JobFate::Completed { invocations: 1 },
        Architecture::PureServerless { limit_ms } => {
            let mut used = 0u64;
            for (i, &d) in job.steps_ms.iter().enumerate() {
                used += d;
                if used > limit_ms {
                    return JobFate::KilledAtLimit { completed_steps: i };
                }
            }
            JobFate::Completed { invocations: 1 }
        }
        Architecture::SelfResumingEdge { limit_ms, resume_overhead_ms, max_invocations } => {
            let mut invocations = 1u32;
            let mut used = 0u64;
            for (i, &d) in job.steps_ms.iter().enumerate() {
                if used + d <= limit_ms {
                    used += d;
                    continue;
                }
                if used == 0 || (used == resume_overhead_ms && invocations > 1) {
                    // The step alone does not fit a fresh invocation.
                    return JobFate::KilledAtLimit { completed_steps: i };
                }
                if invocations >= max_invocations {
                    return JobFate::OutOfInvocations { completed_steps: i };
                }
                invocations += 1;
                used = resume_overhead_ms;
                if used + d > limit_ms {
                    return JobFate::KilledAtLimit { completed_steps: i };
                }
                used += d;
            }
            JobFate::Completed { invocations }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchReport {
    pub architecture: String,
    pub jobs: usize,
    pub completed: usize,
    pub completion_rate: f64,
}

pub fn simulate(arch: &Architecture, jobs: &[SimJob]) -> ArchReport {
    let completed = jobs.iter().filter(|j| run_job(arch, j).completed()).count();
    ArchReport {
        architecture: arch.name().to_string(),
        jobs: jobs.len(),
        completed,
        completion_rate: if jobs.is_empty() { 0.0 } else { completed as f64 / jobs.len() as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub jobs: usize,
    pub min_total_ms: u64,
    pub max_total_ms: u64,
    pub min_step_ms: u64,
    pub max_step_ms: u64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            jobs: 200,
            min_total_ms: 60_000,
            max_total_ms: 30 * 60_000,
            min_step_ms: 500,
            max_step_ms: 20_000,
            seed: 7,
        }
    }
}

/// Jobs with uniformly drawn total length, cut into uniformly drawn steps.
pub fn synthetic_workload(spec: &WorkloadSpec) -> Vec<SimJob> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.jobs)
        .map(|_| {
            let total = rng.random_range(spec.min_total_ms..=spec.max_total_ms.max(spec.min_total_ms));
            let mut steps = Vec::new();
            let mut left = total;
            while left > 0 {
                let d = rng.random_range(spec.min_step_ms..=spec.max_step_ms.max(spec.min_step_ms)).min(left).max(1);
                steps.push(d);
                left -= d;
            }
            SimJob { steps_ms: steps }
        })
        .collect()
}
