//! Script enhancement: navigation rewriting (S1), selector enrichment (S2),
//! the static validation gate (S3), wait injection (S4) and the failure
//! store with its clustering (S5).
//!
//! S1, S2 and S4 are pure `TestScript -> TestScript` transforms; S3 returns a
//! [`ValidationReport`]. Analysis follows the script across pages of a
//! [`SiteContext`]; a single [`PageContext`](crate::PageContext) converts into
//! one with `.into()`.

mod failures;
mod strategies;
pub(crate) mod walk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::page::SiteContext;
use crate::script::{Provenance, ScriptError, TestScript};

pub use failures::{
    cluster_failures, cluster_records, error_class, selector_shape, ClusterError, ClusterSignature, FailureCluster,
    FailureRecord, FailureStore, PageState, StorageError, StoredFailure,
};
pub use strategies::{strategy1_navigation, strategy2_selectors, strategy3_validate, strategy4_waits};

pub const META_ROUTE_CHANGE: &str = "route_change";
pub const META_UNMATCHED: &str = "unmatched";
pub const META_AMBIGUOUS: &str = "ambiguous_selector";
/// Label of the region the author meant, e.g. "checkout".
pub const META_CONTEXT_HINT: &str = "context_hint";
/// Visible text of the element the author meant.
pub const META_TARGET_TEXT: &str = "target_text";
pub const META_WAIT_REASON: &str = "wait_reason";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub proceed_threshold: u8,
    pub regenerate_threshold: u8,
    pub nav_wait_ms: u64,
    pub click_route_wait_ms: u64,
    pub post_submit_wait_ms: u64,
    pub per_finding_penalty: u8,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            proceed_threshold: 90,
            regenerate_threshold: 60,
            nav_wait_ms: 1000,
            click_route_wait_ms: 500,
            post_submit_wait_ms: 1500,
            per_finding_penalty: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnhanceError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), EnhanceError> {
        let bad = |m: &str| Err(EnhanceError::InvalidConfig(m.to_string()));
        if self.regenerate_threshold >= self.proceed_threshold {
            return bad("regenerate_threshold must be below proceed_threshold");
        }
        if self.proceed_threshold > 100 {
            return bad("proceed_threshold must be at most 100");
        }
        if self.nav_wait_ms == 0 || self.click_route_wait_ms == 0 || self.post_submit_wait_ms == 0 {
            return bad("waits must be positive");
        }
        Ok(())
    }

    pub fn decide(&self, score: u8) -> Decision {
        if score > self.proceed_threshold {
            Decision::Proceed
        } else if score < self.regenerate_threshold {
            Decision::Regenerate
        } else {
            Decision::ManualReview
        }
    }

    pub fn score(&self, findings: usize) -> u8 {
        let penalty = (self.per_finding_penalty as usize).saturating_mul(findings);
        100usize.saturating_sub(penalty) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntiPattern {
    InvisibleClick,
    ReadonlyFill,
    UnknownRoute,
    UnmatchedSelector,
    AmbiguousSelector,
}

impl AntiPattern {
    pub fn as_str(self) -> &'static str {
        match self {
            AntiPattern::InvisibleClick => "invisible_click",
            AntiPattern::ReadonlyFill => "readonly_fill",
            AntiPattern::UnknownRoute => "unknown_route",
            AntiPattern::UnmatchedSelector => "unmatched_selector",
            AntiPattern::AmbiguousSelector => "ambiguous_selector",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub step_index: u32,
    pub anti_pattern: AntiPattern,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Proceed,
    Regenerate,
    ManualReview,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub score: u8,
    pub findings: Vec<Finding>,
    pub decision: Decision,
}

/// Which of S1-S4 to apply. S3 on means S4 only runs on `proceed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategyMask {
    pub s1: bool,
    pub s2: bool,
    pub s3: bool,
    pub s4: bool,
}

impl StrategyMask {
    pub const ALL: StrategyMask = StrategyMask { s1: true, s2: true, s3: true, s4: true };
    pub const NONE: StrategyMask = StrategyMask { s1: false, s2: false, s3: false, s4: false };

    /// Bit `i` (0-based) enables strategy `i + 1`.
    pub fn from_bits(bits: u8) -> Self {
        StrategyMask { s1: bits & 1 != 0, s2: bits & 2 != 0, s3: bits & 4 != 0, s4: bits & 8 != 0 }
    }

    pub fn bits(self) -> u8 {
        self.s1 as u8 | (self.s2 as u8) << 1 | (self.s3 as u8) << 2 | (self.s4 as u8) << 3
    }

    /// Short label such as `S1+S3`, or `none`.
    pub fn label(self) -> String {
        let on: Vec<String> = [self.s1, self.s2, self.s3, self.s4]
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| format!("S{}", i + 1))
            .collect();
        if on.is_empty() {
            "none".into()
        } else {
            on.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enhanced {
    pub script: TestScript,
    /// The S3 report; absent when S3 is masked off.
    pub report: Option<ValidationReport>,
}

/// S1 → S2 → S3 → S4, with S4 applied only when the gate says proceed.
pub fn enhance_pipeline(
    script: &TestScript,
    ctx: &SiteContext,
    cfg: &PipelineConfig,
) -> Result<(TestScript, ValidationReport), EnhanceError> {
    let out = enhance_with(script, ctx, cfg, StrategyMask::ALL)?;
    Ok((out.script, out.report.expect("S3 enabled")))
}

pub fn enhance_with(
    script: &TestScript,
    ctx: &SiteContext,
    cfg: &PipelineConfig,
    mask: StrategyMask,
) -> Result<Enhanced, EnhanceError> {
    cfg.validate()?;
    script.validate()?;
    let mut s = script.clone();
    if mask.s1 {
        s = strategy1_navigation(&s, ctx);
    }
    if mask.s2 {
        s = strategy2_selectors(&s, ctx);
    }
    let report = mask.s3.then(|| strategy3_validate(&s, ctx, cfg));
    let proceed = report.as_ref().is_none_or(|r| r.decision == Decision::Proceed);
    if mask.s4 && proceed {
        s = strategy4_waits(&s, cfg);
    }
    if mask != StrategyMask::NONE {
        s.provenance = Provenance::Enhanced;
    }
    s.validate()?;
    Ok(Enhanced { script: s, report })
}
