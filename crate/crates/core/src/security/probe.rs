//! Attack descriptions compiled into probe plans, and their execution.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::signal::{classify_signal, Indicator, Observation, SignalClass, SignalSpec};
use super::{GuardrailVerdict, Guardrails};
use crate::browser::{Browser, BrowserError};
use crate::page::dom::Document;
use crate::page::SiteContext;
use crate::script::{Action, Provenance, Selector, Step, TestScript};
use crate::sim::AuthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Owasp {
    #[serde(rename = "A01_access_control")]
    A01AccessControl,
    #[serde(rename = "A03_injection")]
    A03Injection,
    #[serde(rename = "A04_insecure_design")]
    A04InsecureDesign,
    #[serde(rename = "A07_auth_session")]
    A07AuthSession,
}

impl Owasp {
    pub const ALL: [Owasp; 4] =
        [Owasp::A01AccessControl, Owasp::A03Injection, Owasp::A04InsecureDesign, Owasp::A07AuthSession];

    pub fn code(self) -> &'static str {
        match self {
            Owasp::A01AccessControl => "A01",
            Owasp::A03Injection => "A03",
            Owasp::A04InsecureDesign => "A04",
            Owasp::A07AuthSession => "A07",
        }
    }

    pub fn persona(self) -> Persona {
        match self {
            Owasp::A01AccessControl | Owasp::A07AuthSession => Persona::AuthenticatedUser,
            Owasp::A03Injection => Persona::FormSubmitter,
            Owasp::A04InsecureDesign => Persona::UnauthenticatedActor,
        }
    }
}

impl fmt::Display for Owasp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Owasp::A01AccessControl => "A01 broken access control",
            Owasp::A03Injection => "A03 injection",
            Owasp::A04InsecureDesign => "A04 insecure design",
            Owasp::A07AuthSession => "A07 authentication and session",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    AuthenticatedUser,
    UnauthenticatedActor,
    FormSubmitter,
}

/// Which session check an A07 plan performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionCheck {
    Fixation,
    LogoutInvalidation,
    TokenExpiry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub name: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceHint {
    pub path: String,
    pub owner: String,
    /// Text that only the owner's copy of the resource shows.
    pub marker: String,
}

/// Test accounts and routes the tester already knows about.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthHints {
    pub login_path: Option<String>,
    pub logout_path: Option<String>,
    pub users: Vec<Credential>,
    pub protected: Vec<String>,
    pub resources: Vec<ResourceHint>,
    pub session_ttl_ms: Option<u64>,
}

impl From<&AuthSpec> for AuthHints {
    fn from(a: &AuthSpec) -> Self {
        AuthHints {
            login_path: Some(a.login_path.clone()),
            logout_path: a.logout_path.clone(),
            users: a.users.iter().map(|u| Credential { name: u.name.clone(), password: u.password.clone() }).collect(),
            protected: a.protected.clone(),
            resources: a
                .resources
                .iter()
                .map(|r| ResourceHint { path: r.path.clone(), owner: r.owner.clone(), marker: r.marker.clone() })
                .collect(),
            session_ttl_ms: a.session_ttl_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePlan {
    pub id: String,
    pub owasp: Owasp,
    pub persona: Persona,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_check: Option<SessionCheck>,
    pub steps: TestScript,
    pub expected_safe_signal: SignalSpec,
    /// Step after which the session token is first captured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_checkpoint: Option<u32>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("description is empty")]
    EmptyDescription,
    #[error("no OWASP category matches {0:?}")]
    UnmappableDescription(String),
    #[error("plan needs {0}")]
    MissingHints(&'static str),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("browser session is dead")]
    SessionDead,
}

struct Keywords {
    owasp: Owasp,
    pattern: Regex,
}

/// Checked in order; the first category with a hit wins.
static KEYWORDS: LazyLock<Vec<Keywords>> = LazyLock::new(|| {
    let table = [
        (
            Owasp::A03Injection,
            r"\b(inject\w*|xss|cross[- ]site scripting|sql|payloads?|malicious input|script tags?)\b",
        ),
        (Owasp::A07AuthSession, r"\b(session\w*|fixation|log ?out|sign ?out|tokens?|expir\w*|cookies?)\b"),
        (
            Owasp::A04InsecureDesign,
            r"\b(without (logging|signing) in|without (a )?log ?in|without auth\w*|unauthenticated|not logged in|anonymous\w*|protected (routes?|pages?))\b",
        ),
        (
            Owasp::A01AccessControl,
            r"(\b(another|other|different) (user|account|customer)|\buser [a-z0-9]+'s\b|\bsomeone else|\banother's\b|\bidor\b|\baccess control\b|\bforeign\b)",
        ),
    ];
    table
        .into_iter()
        .map(|(owasp, p)| Keywords { owasp, pattern: Regex::new(&format!("(?i){p}")).expect("keyword pattern") })
        .collect()
});

static USER_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\buser ([a-z0-9]+)\b").unwrap());

/// The OWASP category a description maps to, if any.
pub fn categorize(description: &str) -> Option<Owasp> {
    KEYWORDS.iter().find(|k| k.pattern.is_match(description)).map(|k| k.owasp)
}

/// An inert markup canary: passes the guardrails, and shows up verbatim
/// only on pages that reflect input unescaped.
pub const REFLECTION_CANARY: &str = "<i data-testforge-canary=\"7\">tf-canary-7</i>";

fn slug(text: &str) -> String {
    let mut out = String::new();
    for w in text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).take(6) {
        if !out.is_empty() {
            out.push('-');
        }
        out.push_str(&w.to_ascii_lowercase());
    }
    out
}

struct Builder<'a> {
    ctx: &'a SiteContext,
    hints: &'a AuthHints,
    steps: Vec<Step>,
}

impl<'a> Builder<'a> {
    fn push(&mut self, action: Action) -> u32 {
        let i = self.steps.len() as u32 + 1;
        self.steps.push(Step::new(i, action));
        i
    }

    fn login_path(&self) -> Result<String, ProbeError> {
        self.hints.login_path.clone().ok_or(ProbeError::MissingHints("a login path"))
    }

    /// Field names of the login form, read from the scraped login page.
    fn login_fields(&self, login: &str) -> (String, String) {
        let mut user = "username".to_string();
        let mut pass = "password".to_string();
        if let Some(page) = self.ctx.page(login) {
            let inputs: Vec<_> =
                page.elements.iter().filter(|e| e.tag == "input" && e.attr("name").is_some()).collect();
            if let Some(p) = inputs.iter().find(|e| e.attr("type") == Some("password")) {
                pass = p.attr("name").unwrap_or("password").to_string();
            }
            if let Some(u) = inputs.iter().find(|e| {
                matches!(e.attr("type").unwrap_or("text"), "text" | "email") && e.attr("name") != Some(pass.as_str())
            }) {
                user = u.attr("name").unwrap_or("username").to_string();
            }
        }
        (user, pass)
    }

    fn login(&mut self, cred: &Credential) -> Result<u32, ProbeError> {
        let login = self.login_path()?;
        let (uf, pf) = self.login_fields(&login);
        let at = self.push(Action::Navigate { url: login });
        self.push(Action::Fill { selector: Selector::css(format!("input[name='{uf}']")), value: cred.name.clone() });
        self.push(Action::Fill {
            selector: Selector::css(format!("input[name='{pf}']")),
            value: cred.password.clone(),
        });
        self.push(Action::Submit { selector: Selector::css("form") });
        Ok(at)
    }
}

fn pick_user<'h>(hints: &'h AuthHints, description: &str, nth: usize) -> Option<&'h Credential> {
    let named: Vec<&str> = USER_REF.captures_iter(description).map(|c| c.get(1).unwrap().as_str()).collect();
    if let Some(label) = named.get(nth) {
        let lower = label.to_ascii_lowercase();
        if let Some(u) = hints.users.iter().find(|u| u.name.eq_ignore_ascii_case(&lower)) {
            return Some(u);
        }
        if lower.len() == 1 {
            let idx = (lower.as_bytes()[0].wrapping_sub(b'a')) as usize;
            if let Some(u) = hints.users.get(idx) {
                return Some(u);
            }
        }
    }
    hints.users.get(nth)
}

fn pick_route<'h>(routes: &'h [String], description: &str) -> Option<&'h String> {
    let lower = description.to_ascii_lowercase();
    routes
        .iter()
        .find(|r| r.split('/').filter(|s| s.len() > 2).any(|seg| lower.contains(&seg.to_ascii_lowercase())))
        .or_else(|| routes.first())
}

/// Compiles a description into a probe plan using a fixed keyword table.
pub fn plan_probe(
    description: &str,
    ctx: &SiteContext,
    base_url: &str,
    hints: &AuthHints,
) -> Result<ProbePlan, ProbeError> {
    let description = description.trim();
    if description.is_empty() {
        return Err(ProbeError::EmptyDescription);
    }
    let owasp = categorize(description).ok_or_else(|| ProbeError::UnmappableDescription(description.to_string()))?;
    let mut b = Builder { ctx, hints, steps: Vec::new() };
    let mut token_checkpoint = None;
    let mut session_check = None;
    let spec = match owasp {
        Owasp::A01AccessControl => {
            let attacker = pick_user(hints, description, 0).ok_or(ProbeError::MissingHints("a test account"))?.clone();
            let victim_name = pick_user(hints, description, 1).map(|u| u.name.clone());
            let resource = hints
                .resources
                .iter()
                .filter(|r| r.owner != attacker.name)
                .find(|r| victim_name.as_deref().is_none_or(|v| r.owner == v))
                .or_else(|| hints.resources.iter().find(|r| r.owner != attacker.name))
                .ok_or(ProbeError::MissingHints("a resource owned by another account"))?
                .clone();
            b.login(&attacker)?;
            b.push(Action::Navigate { url: resource.path.clone() });
            let login = b.login_path()?;
            SignalSpec {
                safe_when: vec![Indicator::StatusClass(4), Indicator::RedirectTo(login)],
                violation_when: vec![Indicator::FinalPath(resource.path), Indicator::DomContains(resource.marker)],
            }
        }
        Owasp::A04InsecureDesign => {
            let route =
                pick_route(&hints.protected, description).ok_or(ProbeError::MissingHints("a protected route"))?.clone();
            b.push(Action::Navigate { url: route.clone() });
            let login = b.login_path()?;
            let mut violation = vec![Indicator::FinalPath(route.clone())];
            match ctx.page(&route).and_then(|p| p.document.find_tag("h1").map(|h| p.document.text(h))) {
                Some(h) if !h.is_empty() => violation.push(Indicator::DomContains(h)),
                _ => violation.push(Indicator::StatusClass(2)),
            }
            SignalSpec {
                safe_when: vec![Indicator::RedirectTo(login), Indicator::StatusClass(4)],
                violation_when: violation,
            }
        }
        Owasp::A07AuthSession => {
            let lower = description.to_ascii_lowercase();
            let check = if lower.contains("fixation") {
                SessionCheck::Fixation
            } else if Regex::new(r"log ?out|sign ?out").unwrap().is_match(&lower) {
                SessionCheck::LogoutInvalidation
            } else if lower.contains("expir") || lower.contains("timeout") {
                SessionCheck::TokenExpiry
            } else {
                SessionCheck::Fixation
            };
            session_check = Some(check);
            let user = pick_user(hints, description, 0).ok_or(ProbeError::MissingHints("a test account"))?.clone();
            let login = b.login_path()?;
            match check {
                SessionCheck::Fixation => {
                    token_checkpoint = Some(b.login(&user)?);
                    SignalSpec {
                        safe_when: vec![Indicator::TokenRotated],
                        violation_when: vec![Indicator::TokenUnchanged],
                    }
                }
                SessionCheck::LogoutInvalidation | SessionCheck::TokenExpiry => {
                    let route = pick_route(&hints.protected, description)
                        .ok_or(ProbeError::MissingHints("a protected route"))?
                        .clone();
                    b.login(&user)?;
                    if check == SessionCheck::LogoutInvalidation {
                        let logout = hints.logout_path.clone().ok_or(ProbeError::MissingHints("a logout path"))?;
                        b.push(Action::Navigate { url: logout });
                    } else {
                        let ttl = hints.session_ttl_ms.ok_or(ProbeError::MissingHints("a session lifetime"))?;
                        b.push(Action::Wait { ms: ttl + 1000 });
                    }
                    b.push(Action::Navigate { url: route.clone() });
                    SignalSpec {
                        safe_when: vec![Indicator::RedirectTo(login), Indicator::StatusClass(4)],
                        violation_when: vec![Indicator::FinalPath(route), Indicator::StatusClass(2)],
                    }
                }
            }
        }
        Owasp::A03Injection => {
            let (path, page) = ctx
                .pages
                .iter()
                .find(|(_, p)| p.elements.iter().any(|e| e.tag == "form"))
                .ok_or(ProbeError::MissingHints("a page with a form"))?;
            b.push(Action::Navigate { url: path.clone() });
            let fields: Vec<String> = page
                .elements
                .iter()
                .filter(|e| matches!(e.tag.as_str(), "input" | "textarea") && e.visible && !e.readonly)
                .filter(|e| !matches!(e.attr("type"), Some("hidden" | "submit" | "checkbox" | "radio" | "password")))
                .filter_map(|e| e.attr("name").map(str::to_string))
                .collect();
            if fields.is_empty() {
                return Err(ProbeError::MissingHints("a named form field"));
            }
            for f in &fields {
                b.push(Action::Fill {
                    selector: Selector::css(format!("[name='{f}']")),
                    value: REFLECTION_CANARY.to_string(),
                });
            }
            b.push(Action::Submit { selector: Selector::css(format!("[name='{}']", fields[0])) });
            SignalSpec {
                safe_when: vec![Indicator::DomAbsent("data-testforge-canary".into())],
                violation_when: vec![Indicator::DomContains(REFLECTION_CANARY.into())],
            }
        }
    };
    let id = format!("{}-{}", owasp.code().to_ascii_lowercase(), slug(description));
    let plan = ProbePlan {
        id: id.clone(),
        owasp,
        persona: owasp.persona(),
        session_check,
        steps: TestScript { id, base_url: base_url.to_string(), steps: b.steps, provenance: Provenance::Manual },
        expected_safe_signal: spec,
        token_checkpoint,
        description: description.to_string(),
    };
    plan.validate()?;
    Ok(plan)
}

impl ProbePlan {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.steps.steps.is_empty() {
            return Err(ProbeError::InvalidPlan("no steps".into()));
        }
        if self.persona != self.owasp.persona() {
            return Err(ProbeError::InvalidPlan(format!(
                "persona {:?} does not fit {}",
                self.persona,
                self.owasp.code()
            )));
        }
        self.expected_safe_signal.validate().map_err(ProbeError::InvalidPlan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Vulnerable,
    Safe,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Unreviewed,
    ConfirmedTp,
    ConfirmedFp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    /// Indicators that held.
    pub matched: Vec<Indicator>,
    pub observation: Observation,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub plan_ref: String,
    pub owasp: Owasp,
    pub description: String,
    pub verdict: Verdict,
    pub evidence: Evidence,
    /// Steps that reproduce the finding; set for vulnerable verdicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduction: Option<TestScript>,
    pub review_status: ReviewStatus,
}

fn page_text<B: Browser + ?Sized>(browser: &mut B) -> Result<String, BrowserError> {
    let src = browser.page_source()?;
    let doc = Document::parse(&src);
    Ok(doc.body().map(|b| doc.text(b)).unwrap_or_default())
}

/// Runs the plan's steps and classifies what the browser ends up showing.
/// Fill values pass through `guardrails` first.
pub fn execute_probe<B: Browser + ?Sized>(
    plan: &ProbePlan,
    browser: &mut B,
    guardrails: &Guardrails,
) -> Result<Finding, ProbeError> {
    plan.validate()?;
    let dead = |e: BrowserError| match e {
        BrowserError::SessionDead => ProbeError::SessionDead,
        other => ProbeError::InvalidPlan(other.to_string()),
    };
    let mut obs = Observation::default();
    let mut records = Vec::new();
    let base = url::Url::parse(&plan.steps.base_url).ok();
    for step in &plan.steps.steps {
        let outcome: Result<Option<crate::browser::ActionResult>, BrowserError> = match &step.action {
            Action::Navigate { url } => {
                let target =
                    base.as_ref().and_then(|b| b.join(url).ok()).map(|u| u.to_string()).unwrap_or_else(|| url.clone());
                browser.navigate(&target).map(Some)
            }
            Action::Fill { selector, value } => match guardrails.validate(value) {
                GuardrailVerdict::Block { rule_id } => {
                    Err(BrowserError::FormValidation(format!("guardrail {rule_id} blocked the value")))
                }
                GuardrailVerdict::Allow => browser.fill(selector, value).map(Some),
            },
            Action::Click { selector } => browser.click(selector).map(Some),
            Action::Submit { selector } => browser.submit(selector).map(Some),
            Action::Wait { ms } => browser.wait(*ms).map(|_| None),
            Action::AssertText { selector, .. } | Action::AssertVisible { selector } => {
                browser.count(selector).map(|_| None)
            }
        };
        let error = match outcome {
            Ok(Some(r)) => {
                obs.status = r.status;
                obs.redirected_from = r.redirected_from;
                None
            }
            Ok(None) => None,
            Err(BrowserError::SessionDead) => return Err(ProbeError::SessionDead),
            Err(BrowserError::NotAPage { status, .. }) => {
                obs.status = Some(status);
                obs.redirected_from = None;
                Some(format!("page returned status {status}"))
            }
            Err(e) => Some(e.to_string()),
        };
        if let Some(e) = &error {
            obs.errors.push(e.clone());
        }
        records.push(StepRecord { step_index: step.index, error });
        if plan.token_checkpoint == Some(step.index) {
            obs.token_before = browser.session_token().map_err(dead)?;
        }
    }
    obs.final_url = browser.current_url().map_err(dead)?;
    obs.dom_text = page_text(browser).map_err(dead)?;
    if plan.token_checkpoint.is_some() {
        obs.token_after = browser.session_token().map_err(dead)?;
    }
    let class = classify_signal(&obs, &plan.expected_safe_signal);
    let (verdict, matched) = match class {
        SignalClass::Safe(m) => (Verdict::Safe, m),
        SignalClass::Violation(m) => (Verdict::Vulnerable, m),
        SignalClass::None => (Verdict::Inconclusive, Vec::new()),
    };
    Ok(Finding {
        plan_ref: plan.id.clone(),
        owasp: plan.owasp,
        description: plan.description.clone(),
        verdict,
        reproduction: (verdict == Verdict::Vulnerable).then(|| plan.steps.clone()),
        evidence: Evidence { matched, observation: obs, steps: records },
        review_status: ReviewStatus::Unreviewed,
    })
}
