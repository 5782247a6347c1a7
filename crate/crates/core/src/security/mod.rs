//! Security probes: attack descriptions compiled into OWASP-tagged probe
//! plans, run through the browser interface behind input guardrails, with
//! verdicts drawn only from browser-observable signals.

mod guardrails;
mod probe;
mod ratelimit;
mod report;
mod signal;

pub use guardrails::{
    guardrail_validate, GuardrailCategory, GuardrailError, GuardrailRule, GuardrailVerdict, Guardrails, BUILTIN_RULES,
};
pub use probe::{
    categorize, execute_probe, plan_probe, AuthHints, Credential, Evidence, Finding, Owasp, Persona, ProbeError,
    ProbePlan, ResourceHint, ReviewStatus, SessionCheck, StepRecord, Verdict, REFLECTION_CANARY,
};
pub use ratelimit::{RateLimitConfig, RateLimited, RateLimiter};
pub use report::{security_report, CategoryCounts, SecurityReport};
pub use signal::{classify_signal, Indicator, Observation, SignalClass, SignalSpec};
