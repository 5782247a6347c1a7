//! Step execution: perceive the live page, act, and recover from missing
//! elements with backoff retries and one alternative-selector attempt.

mod goal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::browser::{ActionResult, Browser, BrowserError, ErrorKind};
use crate::clock::Clock;
use crate::enhance::{FailureRecord, FailureStore, PageState, StorageError, META_ROUTE_CHANGE};
use crate::page::dom::{normalize_text, Document};
use crate::page::{match_selector, unique_selector, PageContext};
use crate::script::{Action, ActionKind, Selector, Step, TestScript, META_ORIGINAL_SELECTOR};
use crate::security::{GuardrailVerdict, Guardrails};

pub use goal::{decompose_goal, execute_goal, split_goal, Goal, GoalResult, Subgoal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub backoff_base_ms: u64,
    pub max_attempts: u32,
    pub success_threshold: f64,
    /// Upper bound on one browser call, enforced by remote backends.
    pub step_timeout_ms: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { backoff_base_ms: 250, max_attempts: 3, success_threshold: 0.80, step_timeout_ms: 30_000 }
    }
}

impl AgentConfig {
    /// Delay before attempt `attempt + 1`, for `attempt` >= 1.
    pub fn backoff(&self, attempt: u32) -> u64 {
        self.backoff_base_ms.saturating_mul(1u64 << (attempt - 1).min(32))
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("browser session is dead")]
    SessionDead,
    #[error("failure sink: {0}")]
    Sink(#[from] StorageError),
    #[error("goal has no actionable clause")]
    UndecomposableGoal,
    #[error("generation: {0}")]
    Generation(#[from] crate::llm::GenerationError),
    #[error("invalid goal: {0}")]
    InvalidGoal(String),
}

#[derive(Debug, Clone)]
pub struct Perception {
    pub current_url: String,
    pub page: PageContext,
    pub last_action_outcome: Option<ActionResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Recovered,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    RetryWait,
    AlternativeSelector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step_index: u32,
    pub action: ActionKind,
    pub status: StepStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<Recovery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
    /// What the step targeted: selector text or URL.
    pub target: String,
    /// Whether the step moves the browser to another page.
    pub navigational: bool,
    /// Backoff delays slept between attempts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backoff_ms: Vec<u64>,
    pub duration_ms: u64,
}

impl StepOutcome {
    pub fn completed(&self) -> bool {
        matches!(self.status, StepStatus::Ok | StepStatus::Recovered)
    }

    fn skipped(step: &Step, why: &str) -> Self {
        StepOutcome {
            step_index: step.index,
            action: step.action.kind(),
            status: StepStatus::Skipped,
            attempts: 0,
            recovery: None,
            error: Some(why.to_string()),
            error_kind: None,
            target: step.action.target_description(),
            navigational: is_navigational(step),
            backoff_ms: Vec::new(),
            duration_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub job_id: String,
    pub script_id: String,
    pub outcomes: Vec<StepOutcome>,
    pub success: bool,
    pub completed_fraction: f64,
}

impl ExecutionResult {
    pub fn new(job_id: &str, script_id: &str, outcomes: Vec<StepOutcome>, threshold: f64) -> Self {
        let done = outcomes.iter().filter(|o| o.completed()).count();
        let completed_fraction = if outcomes.is_empty() { 0.0 } else { done as f64 / outcomes.len() as f64 };
        ExecutionResult {
            job_id: job_id.to_string(),
            script_id: script_id.to_string(),
            success: meets_threshold(done, outcomes.len(), threshold),
            outcomes,
            completed_fraction,
        }
    }

    /// Every step completed.
    pub fn strict_success(&self) -> bool {
        !self.outcomes.is_empty() && self.outcomes.iter().all(StepOutcome::completed)
    }

    pub fn first_failure(&self) -> Option<&StepOutcome> {
        self.outcomes.iter().find(|o| o.status == StepStatus::Failed)
    }
}

/// `done / total >= threshold`, decided without floating-point rounding at
/// the boundary (8 of 10 at 0.80 passes).
pub fn meets_threshold(done: usize, total: usize, threshold: f64) -> bool {
    if total == 0 {
        return false;
    }
    let scaled = (threshold * 1_000_000.0).round() as u128;
    (done as u128) * 1_000_000 >= scaled * total as u128
}

/// Everything a run needs besides the browser.
pub struct ExecContext<'a> {
    pub cfg: &'a AgentConfig,
    pub clock: &'a dyn Clock,
    pub sink: Option<&'a FailureStore>,
    pub guardrails: Option<&'a Guardrails>,
    pub job_id: &'a str,
}

fn is_navigational(step: &Step) -> bool {
    match &step.action {
        Action::Navigate { .. } => true,
        Action::Click { selector } => {
            step.meta(META_ROUTE_CHANGE).is_some() || selector.target_tag().as_deref() == Some("a")
        }
        _ => false,
    }
}

/// Snapshot of the live page.
pub fn perceive<B: Browser + ?Sized>(browser: &mut B, now_ms: u64) -> Result<Perception, AgentError> {
    let dead = |_: BrowserError| AgentError::SessionDead;
    let url = browser.current_url().map_err(dead)?;
    let source = browser.page_source().map_err(dead)?;
    let page = PageContext::from_document(Document::parse(&source), &url, now_ms).unwrap_or_else(|_| PageContext {
        url: url.clone(),
        elements: Vec::new(),
        routes: Default::default(),
        scraped_at: now_ms,
        document: Document::parse(""),
    });
    Ok(Perception { current_url: url, page, last_action_outcome: None })
}

fn parse_displayed_selector(s: &str) -> Option<Selector> {
    let (css, hint) = match s.find(" (text ") {
        Some(i) => {
            let quoted = s[i + 7..].strip_suffix(')')?;
            (&s[..i], Some(serde_json::from_str::<String>(quoted).ok()?))
        }
        None => (s, None),
    };
    let sel = Selector { css: css.trim().to_string(), context_prefix: None, text_hint: hint };
    sel.compile().ok()?;
    Some(sel)
}

/// A fallback selector that matches exactly one live element, or `None`.
pub fn alternative_selector(step: &Step, perception: &Perception) -> Option<Selector> {
    let page = &perception.page;
    let current = step.action.selector()?;
    let unique = |s: &Selector| match_selector(page, s).is_ok_and(|m| m.len() == 1);

    if let Some(original) = step.meta(META_ORIGINAL_SELECTOR).and_then(parse_displayed_selector) {
        if original != *current && unique(&original) {
            return Some(original);
        }
    }
    if let Some(hint) = current.text_hint.as_deref().map(normalize_text).filter(|h| !h.is_empty()) {
        let hint_lc = hint.to_lowercase();
        let exact: Vec<u32> =
            page.elements.iter().filter(|e| e.text.to_lowercase() == hint_lc).map(|e| e.element_id).collect();
        let pool = if exact.is_empty() {
            page.elements.iter().filter(|e| e.text.to_lowercase().contains(&hint_lc)).map(|e| e.element_id).collect()
        } else {
            exact
        };
        if let [id] = pool.as_slice() {
            if let Some(s) = unique_selector(page, *id) {
                return Some(s);
            }
        }
    }
    let mut wanted: Vec<(String, String)> = Vec::new();
    if let Ok(css) = current.compile() {
        for a in &css.last().attrs {
            if matches!(a.name.as_str(), "aria-label" | "name") {
                wanted.push((a.name.clone(), a.value.clone()));
            }
        }
    }
    for (key, attr) in [("target_aria_label", "aria-label"), ("target_name", "name")] {
        if let Some(v) = step.meta(key) {
            wanted.push((attr.to_string(), v.to_string()));
        }
    }
    for (attr, value) in wanted {
        let hits: Vec<u32> =
            page.elements.iter().filter(|e| e.attr(&attr) == Some(value.as_str())).map(|e| e.element_id).collect();
        if let [id] = hits.as_slice() {
            if let Some(s) = unique_selector(page, *id) {
                if s != *current {
                    return Some(s);
                }
            }
        }
    }
    None
}

enum ActError {
    Browser(BrowserError),
    Assertion(String),
    Guardrail(String),
}

impl ActError {
    fn kind(&self) -> ErrorKind {
        match self {
            ActError::Browser(e) => e.kind(),
            ActError::Assertion(_) => ErrorKind::AssertionFailed,
            ActError::Guardrail(_) => ErrorKind::GuardrailBlocked,
        }
    }

    fn message(&self) -> String {
        match self {
            ActError::Browser(e) => e.to_string(),
            ActError::Assertion(m) => format!("assertion failed: {m}"),
            ActError::Guardrail(r) => format!("guardrail blocked fill value (rule {r})"),
        }
    }
}

fn act<B: Browser + ?Sized>(
    browser: &mut B,
    action: &Action,
    selector: Option<&Selector>,
    base_url: &str,
    ctx: &ExecContext<'_>,
) -> Result<(), ActError> {
    let sel = || selector.expect("selector-bearing action");
    let b = ActError::Browser;
    match action {
        Action::Navigate { url } => {
            let target = url::Url::parse(base_url)
                .and_then(|b| b.join(url))
                .map(|u| u.to_string())
                .unwrap_or_else(|_| url.clone());
            let r = browser.navigate(&target).map_err(b)?;
            match r.status {
                Some(s) if s >= 400 => Err(ActError::Browser(BrowserError::NotAPage { url: r.url, status: s })),
                _ => Ok(()),
            }
        }
        Action::Click { .. } => browser.click(sel()).map(|_| ()).map_err(b),
        Action::Fill { value, .. } => {
            if let Some(g) = ctx.guardrails {
                if let GuardrailVerdict::Block { rule_id } = g.validate(value) {
                    return Err(ActError::Guardrail(rule_id));
                }
            }
            browser.fill(sel(), value).map(|_| ()).map_err(b)
        }
        Action::Submit { .. } => browser.submit(sel()).map(|_| ()).map_err(b),
        Action::AssertText { text, .. } => {
            let actual = browser.read_text(sel()).map_err(b)?;
            let want = normalize_text(text);
            if normalize_text(&actual).contains(&want) {
                Ok(())
            } else {
                Err(ActError::Assertion(format!("expected text {want:?}, found {actual:?}")))
            }
        }
        Action::AssertVisible { .. } => {
            if browser.is_displayed(sel()).map_err(b)? {
                Ok(())
            } else {
                Err(ActError::Assertion(format!("{} is not displayed", sel())))
            }
        }
        Action::Wait { ms } => browser.wait(*ms).map_err(b),
    }
}

fn recoverable_by_alternative(kind: ErrorKind) -> bool {
    matches!(
        kind,
        ErrorKind::ElementNotFound
            | ErrorKind::AmbiguousSelector
            | ErrorKind::NotInteractable
            | ErrorKind::StaleElement
    )
}

/// Runs one step. Step-level failures are reported in the outcome; only a
/// dead session is an error.
pub fn execute_step<B: Browser + ?Sized>(
    step: &Step,
    base_url: &str,
    browser: &mut B,
    ctx: &ExecContext<'_>,
) -> Result<StepOutcome, AgentError> {
    let started = ctx.clock.now_ms();
    let mut outcome = StepOutcome {
        step_index: step.index,
        action: step.action.kind(),
        status: StepStatus::Ok,
        attempts: 0,
        recovery: None,
        error: None,
        error_kind: None,
        target: step.action.target_description(),
        navigational: is_navigational(step),
        backoff_ms: Vec::new(),
        duration_ms: 0,
    };
    let max_attempts = ctx.cfg.max_attempts.max(1);
    let selector = step.action.selector().cloned();
    let mut last_err = None;
    loop {
        outcome.attempts += 1;
        match act(browser, &step.action, selector.as_ref(), base_url, ctx) {
            Ok(()) => break,
            Err(ActError::Browser(BrowserError::SessionDead)) => return Err(AgentError::SessionDead),
            Err(e) if e.kind() == ErrorKind::ElementNotFound && outcome.attempts < max_attempts => {
                let delay = ctx.cfg.backoff(outcome.attempts);
                ctx.clock.sleep_ms(delay);
                outcome.backoff_ms.push(delay);
            }
            Err(e) => {
                last_err = Some(e);
                break;
            }
        }
    }
    match last_err {
        None if outcome.attempts > 1 => {
            outcome.status = StepStatus::Recovered;
            outcome.recovery = Some(Recovery::RetryWait);
        }
        None => {}
        Some(err) => {
            let mut recovered = false;
            if selector.is_some() && recoverable_by_alternative(err.kind()) {
                let perception = perceive(browser, ctx.clock.now_ms())?;
                if let Some(alt) = alternative_selector(step, &perception) {
                    match act(browser, &step.action, Some(&alt), base_url, ctx) {
                        Ok(()) => recovered = true,
                        Err(ActError::Browser(BrowserError::SessionDead)) => return Err(AgentError::SessionDead),
                        Err(_) => {}
                    }
                }
            }
            if recovered {
                outcome.status = StepStatus::Recovered;
                outcome.recovery = Some(Recovery::AlternativeSelector);
            } else {
                outcome.status = StepStatus::Failed;
                outcome.error = Some(err.message());
                outcome.error_kind = Some(err.kind());
            }
        }
    }
    outcome.duration_ms = ctx.clock.now_ms().saturating_sub(started);
    Ok(outcome)
}

fn record<B: Browser + ?Sized>(
    browser: &mut B,
    outcome: &StepOutcome,
    ctx: &ExecContext<'_>,
) -> Result<(), AgentError> {
    let Some(sink) = ctx.sink else {
        return Ok(());
    };
    let page_state = match perceive(browser, ctx.clock.now_ms()) {
        Ok(p) => PageState { url: p.current_url, element_count: p.page.elements.len() },
        Err(_) => PageState { url: "about:blank".into(), element_count: 0 },
    };
    let job_id = if ctx.job_id.trim().is_empty() { "adhoc" } else { ctx.job_id };
    sink.record_failure(FailureRecord {
        step_index: outcome.step_index,
        selector_attempted: outcome.target.clone(),
        error_message: outcome.error.clone().unwrap_or_else(|| "step failed".into()),
        page_state,
        job_id: job_id.to_string(),
        recorded_at: ctx.clock.now_ms(),
    })?;
    Ok(())
}

/// Runs every step in order. After a failed navigation, steps up to the
/// next navigate are skipped. A dead session skips everything left.
pub fn execute_script<B: Browser + ?Sized>(
    script: &TestScript,
    browser: &mut B,
    ctx: &ExecContext<'_>,
) -> Result<ExecutionResult, AgentError> {
    let mut outcomes = Vec::with_capacity(script.steps.len());
    let mut lost_page = false;
    let mut dead = false;
    for step in &script.steps {
        if dead {
            outcomes.push(StepOutcome::skipped(step, "browser session died"));
            continue;
        }
        let is_nav = matches!(step.action, Action::Navigate { .. });
        if lost_page && !is_nav {
            outcomes.push(StepOutcome::skipped(step, "page not reached"));
            continue;
        }
        let outcome = match execute_step(step, &script.base_url, browser, ctx) {
            Ok(o) => o,
            Err(AgentError::SessionDead) => {
                dead = true;
                let mut o = StepOutcome::skipped(step, "browser session died");
                o.status = StepStatus::Failed;
                o.attempts = 1;
                o.error_kind = Some(ErrorKind::SessionDead);
                o
            }
            Err(e) => return Err(e),
        };
        if outcome.status == StepStatus::Failed {
            if !dead {
                record(browser, &outcome, ctx)?;
            } else if let Some(sink) = ctx.sink {
                sink.record_failure(FailureRecord {
                    step_index: outcome.step_index,
                    selector_attempted: outcome.target.clone(),
                    error_message: "browser session died".into(),
                    page_state: PageState { url: "about:blank".into(), element_count: 0 },
                    job_id: if ctx.job_id.is_empty() { "adhoc".into() } else { ctx.job_id.to_string() },
                    recorded_at: ctx.clock.now_ms(),
                })?;
            }
            if outcome.navigational {
                lost_page = true;
            }
        } else if is_nav {
            lost_page = false;
        }
        outcomes.push(outcome);
    }
    Ok(ExecutionResult::new(ctx.job_id, &script.id, outcomes, ctx.cfg.success_threshold))
}
