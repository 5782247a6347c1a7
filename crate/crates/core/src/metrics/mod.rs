//! Run summaries with the success/failure taxonomy, and the ablation
//! harness that runs generate, enhance and execute over sim fixtures.

mod ablation;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{ExecutionResult, StepStatus};
use crate::browser::ErrorKind;
use crate::enhance::StrategyMask;

pub use ablation::{
    ablation_run, all_masks, run_entry, timing_rerun, AblationConfig, AblationError, AblationRow, Corpus, CorpusEntry,
    CorpusError, ScriptSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    Navigation,
    ElementNotFound,
    Timing,
    IncorrectAction,
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureClass::Navigation => "navigation",
            FailureClass::ElementNotFound => "element_not_found",
            FailureClass::Timing => "timing",
            FailureClass::IncorrectAction => "incorrect_action",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub navigation: usize,
    pub element_not_found: usize,
    pub timing: usize,
    pub incorrect_action: usize,
}

impl Taxonomy {
    pub fn add(&mut self, class: FailureClass) {
        *match class {
            FailureClass::Navigation => &mut self.navigation,
            FailureClass::ElementNotFound => &mut self.element_not_found,
            FailureClass::Timing => &mut self.timing,
            FailureClass::IncorrectAction => &mut self.incorrect_action,
        } += 1;
    }

    pub fn get(&self, class: FailureClass) -> usize {
        match class {
            FailureClass::Navigation => self.navigation,
            FailureClass::ElementNotFound => self.element_not_found,
            FailureClass::Timing => self.timing,
            FailureClass::IncorrectAction => self.incorrect_action,
        }
    }

    pub fn total(&self) -> usize {
        self.navigation + self.element_not_found + self.timing + self.incorrect_action
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub scripts: usize,
    /// Scripts that completed at least the success threshold of steps.
    pub succeeded: usize,
    /// Scripts that completed every step.
    pub strict_succeeded: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub totals: Totals,
    pub failure_taxonomy: Taxonomy,
    pub strategies: StrategyMask,
}

impl RunSummary {
    pub fn success_rate(&self) -> f64 {
        if self.totals.scripts == 0 {
            0.0
        } else {
            self.totals.succeeded as f64 / self.totals.scripts as f64
        }
    }

    pub fn strict_rate(&self) -> f64 {
        if self.totals.scripts == 0 {
            0.0
        } else {
            self.totals.strict_succeeded as f64 / self.totals.scripts as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no results to summarize")]
    EmptyInput,
}

/// One executed script and what the timing re-run oracle said about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRun {
    pub result: ExecutionResult,
    /// The script passed when re-run with larger waits. `None` when no
    /// re-run was made, in which case timing is inferred from timeouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passes_with_larger_waits: Option<bool>,
}

impl From<ExecutionResult> for ScriptRun {
    fn from(result: ExecutionResult) -> Self {
        ScriptRun { result, passes_with_larger_waits: None }
    }
}

/// Class of a failed run, from its first failed step: a failed navigation
/// first, then timing, then a missing element, otherwise incorrect action.
pub fn classify_failure(run: &ScriptRun) -> Option<FailureClass> {
    if run.result.success {
        return None;
    }
    let Some(first) = run.result.outcomes.iter().find(|o| o.status == StepStatus::Failed) else {
        return Some(FailureClass::IncorrectAction);
    };
    if first.navigational {
        return Some(FailureClass::Navigation);
    }
    let timing = match run.passes_with_larger_waits {
        Some(passed) => passed,
        None => first.error_kind == Some(ErrorKind::Timeout),
    };
    if timing {
        return Some(FailureClass::Timing);
    }
    if first.error_kind == Some(ErrorKind::ElementNotFound) {
        return Some(FailureClass::ElementNotFound);
    }
    Some(FailureClass::IncorrectAction)
}

pub fn summarize(runs: &[ScriptRun], strategies: StrategyMask) -> Result<RunSummary, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut totals = Totals { scripts: runs.len(), ..Totals::default() };
    let mut failure_taxonomy = Taxonomy::default();
    for run in runs {
        if run.result.success {
            totals.succeeded += 1;
        }
        if run.result.success && run.result.strict_success() {
            totals.strict_succeeded += 1;
        }
        if let Some(class) = classify_failure(run) {
            failure_taxonomy.add(class);
        }
    }
    Ok(RunSummary { totals, failure_taxonomy, strategies })
}
