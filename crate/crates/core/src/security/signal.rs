//! Browser-observable signals and their classification.

use regex::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

/// One observable condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "indicator", content = "value", rename_all = "snake_case")]
pub enum Indicator {
    /// HTTP status class, e.g. 4 for 4xx. Unknown status never matches.
    StatusClass(u16),
    /// The request was redirected and landed on this path.
    RedirectTo(String),
    /// The browser ended on this path.
    FinalPath(String),
    DomContains(String),
    DomAbsent(String),
    /// Regex over the step error messages.
    ErrorMessage(String),
    /// The session token changed across the plan's token checkpoint.
    TokenRotated,
    /// The session token stayed the same across the token checkpoint.
    TokenUnchanged,
}

impl Indicator {
    /// Absence-only indicators cannot serve as evidence of a violation.
    pub fn is_positive(&self) -> bool {
        !matches!(self, Indicator::DomAbsent(_))
    }

    pub fn matches(&self, o: &Observation) -> bool {
        match self {
            Indicator::StatusClass(c) => o.status.is_some_and(|s| s / 100 == *c),
            Indicator::RedirectTo(p) => o.redirected_from.is_some() && path_of(&o.final_url).as_deref() == Some(p),
            Indicator::FinalPath(p) => path_of(&o.final_url).as_deref() == Some(p),
            Indicator::DomContains(t) => o.dom_text.contains(t.as_str()),
            Indicator::DomAbsent(t) => !o.dom_text.is_empty() && !o.dom_text.contains(t.as_str()),
            Indicator::ErrorMessage(p) => Regex::new(p).is_ok_and(|re| o.errors.iter().any(|e| re.is_match(e))),
            Indicator::TokenRotated => matches!((&o.token_before, &o.token_after), (Some(a), Some(b)) if a != b),
            Indicator::TokenUnchanged => matches!((&o.token_before, &o.token_after), (Some(a), Some(b)) if a == b),
        }
    }
}

fn path_of(url: &str) -> Option<String> {
    Url::parse(url).ok().map(|u| u.path().to_string())
}

/// Safe when any `safe_when` indicator holds; a violation when every
/// `violation_when` indicator holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub safe_when: Vec<Indicator>,
    pub violation_when: Vec<Indicator>,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.safe_when.is_empty() && self.violation_when.is_empty() {
            return Err("signal spec has no indicators".into());
        }
        if !self.violation_when.is_empty() && !self.violation_when.iter().any(Indicator::is_positive) {
            return Err("violation needs at least one positive indicator".into());
        }
        for i in self.safe_when.iter().chain(&self.violation_when) {
            if let Indicator::ErrorMessage(p) = i {
                Regex::new(p).map_err(|e| format!("bad error pattern {p:?}: {e}"))?;
            }
        }
        Ok(())
    }
}

/// What the browser showed once the plan's steps ran.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub final_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redirected_from: Option<String>,
    /// Visible text of the final page.
    pub dom_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_after: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "signal", content = "matched", rename_all = "snake_case")]
pub enum SignalClass {
    Safe(Vec<Indicator>),
    Violation(Vec<Indicator>),
    None,
}

/// Safe signals win over violations; a violation needs every one of its
/// indicators and at least one of them positive.
pub fn classify_signal(observed: &Observation, spec: &SignalSpec) -> SignalClass {
    let safe: Vec<Indicator> = spec.safe_when.iter().filter(|i| i.matches(observed)).cloned().collect();
    if !safe.is_empty() {
        return SignalClass::Safe(safe);
    }
    let v = &spec.violation_when;
    if !v.is_empty() && v.iter().any(Indicator::is_positive) && v.iter().all(|i| i.matches(observed)) {
        return SignalClass::Violation(v.clone());
    }
    SignalClass::None
}
