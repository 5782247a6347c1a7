//! Multi-page goals: split into per-page subgoals, generate each, and
//! re-plan against the live page when the browser lands somewhere else.

use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;
use url::Url;

use super::{execute_script, AgentError, ExecContext, ExecutionResult, StepOutcome, StepStatus};
use crate::browser::Browser;
use crate::enhance::walk::Walker;
use crate::llm::{Bridge, GenerationError, GenerationRequest};
use crate::page::dom::Document;
use crate::page::{PageContext, SiteContext};
use crate::script::TestScript;

static SENTENCE_SPLIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)[.;!](?:\s+|$)|,?\s+(?:and\s+)?then\s+").unwrap());
static LEADING_THEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^(?:and\s+)?then\b[,\s]*").unwrap());
static PAGE_SWITCH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i),?\s+and\s+(?:go|navigate|open|visit|return)\b").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subgoal {
    pub instructions: String,
    pub script: TestScript,
    /// Path the browser should be on once the subgoal is done.
    pub expected_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Goal {
    pub id: String,
    pub text: String,
    pub subgoals: Vec<Subgoal>,
}

/// Splits a goal into clause fragments on sentence ends, "then", and
/// "and go/navigate/open/visit/return".
pub fn split_goal(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for sentence in SENTENCE_SPLIT.split(text) {
        let mut start = 0;
        for m in PAGE_SWITCH.find_iter(sentence) {
            out.push(sentence[start..m.start()].to_string());
            let verb_at = m.as_str().to_ascii_lowercase().rfind("and").map(|i| i + 3).unwrap_or(0);
            start = m.start() + verb_at;
        }
        out.push(sentence[start..].to_string());
    }
    out.into_iter()
        .map(|s| {
            let s = s.trim().trim_start_matches(',').trim();
            LEADING_THEN.replace(s, "").trim().to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

fn url_for(base: &str, path: &str) -> String {
    Url::parse(base).and_then(|b| b.join(path)).map(|u| u.to_string()).unwrap_or_else(|_| base.to_string())
}

fn path_of(url: &str) -> Option<String> {
    Url::parse(url).ok().map(|u| u.path().to_string())
}

fn expected_path(site: &SiteContext, script: &TestScript) -> Option<String> {
    let mut walker = Walker::new(site, script);
    for step in &script.steps {
        walker.advance(step);
    }
    walker.path().map(str::to_string)
}

/// Generates one script per actionable fragment, each starting where the
/// previous one is expected to end.
pub fn decompose_goal(
    goal_id: &str,
    text: &str,
    base_url: &str,
    site: &SiteContext,
    bridge: &Bridge,
) -> Result<Goal, AgentError> {
    if goal_id.trim().is_empty() {
        return Err(AgentError::InvalidGoal("goal id is empty".into()));
    }
    if text.trim().is_empty() {
        return Err(AgentError::InvalidGoal("goal text is empty".into()));
    }
    let mut subgoals = Vec::new();
    let mut current = base_url.to_string();
    for fragment in split_goal(text) {
        let id = format!("{goal_id}-{}", subgoals.len() + 1);
        let req = GenerationRequest::new(&id, &current, &fragment);
        let script = match bridge.generate(&req, site) {
            Ok(s) => s,
            Err(GenerationError::NoActionableInstructions) => continue,
            Err(e) => return Err(AgentError::Generation(e)),
        };
        let expected = expected_path(site, &script);
        if let Some(p) = &expected {
            current = url_for(base_url, p);
        }
        subgoals.push(Subgoal { instructions: fragment, script, expected_path: expected });
    }
    if subgoals.is_empty() {
        return Err(AgentError::UndecomposableGoal);
    }
    Ok(Goal { id: goal_id.to_string(), text: text.to_string(), subgoals })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoalResult {
    pub goal_id: String,
    /// One result per subgoal, with the script actually run.
    pub subgoals: Vec<(TestScript, ExecutionResult)>,
    /// Subgoal scripts re-planned against the live page.
    pub replanned: usize,
    pub overall: ExecutionResult,
}

fn failed_all(script: &TestScript, why: &str, job_id: &str, threshold: f64) -> ExecutionResult {
    let outcomes = script
        .steps
        .iter()
        .map(|s| {
            let mut o = StepOutcome::skipped(s, why);
            o.status = StepStatus::Failed;
            o
        })
        .collect();
    ExecutionResult::new(job_id, &script.id, outcomes, threshold)
}

/// Runs the subgoals in order. When the live page differs from where a
/// subgoal was planned to start, that subgoal is regenerated against the
/// live page first.
pub fn execute_goal<B: Browser + ?Sized>(
    goal: &Goal,
    site: &SiteContext,
    bridge: &Bridge,
    browser: &mut B,
    ctx: &ExecContext<'_>,
) -> Result<GoalResult, AgentError> {
    let mut results = Vec::with_capacity(goal.subgoals.len());
    let mut replanned = 0;
    let mut all = Vec::new();
    for (i, sub) in goal.subgoals.iter().enumerate() {
        let mut script = sub.script.clone();
        if i > 0 {
            let live = browser.current_url().map_err(|_| AgentError::SessionDead)?;
            if path_of(&live) != path_of(&script.base_url) {
                replanned += 1;
                let source = browser.page_source().map_err(|_| AgentError::SessionDead)?;
                let mut live_site = site.clone();
                if let Ok(page) = PageContext::from_document(Document::parse(&source), &live, ctx.clock.now_ms()) {
                    live_site.insert(page);
                }
                let req = GenerationRequest::new(&script.id, &live, &sub.instructions);
                match bridge.generate(&req, &live_site) {
                    Ok(s) => script = s,
                    Err(e) => {
                        let r =
                            failed_all(&script, &format!("re-plan failed: {e}"), ctx.job_id, ctx.cfg.success_threshold);
                        all.extend(r.outcomes.iter().cloned());
                        results.push((script, r));
                        continue;
                    }
                }
            }
        }
        let r = execute_script(&script, browser, ctx)?;
        all.extend(r.outcomes.iter().cloned());
        results.push((script, r));
    }
    for (i, o) in all.iter_mut().enumerate() {
        o.step_index = i as u32 + 1;
    }
    Ok(GoalResult {
        goal_id: goal.id.clone(),
        overall: ExecutionResult::new(ctx.job_id, &goal.id, all, ctx.cfg.success_threshold),
        subgoals: results,
        replanned,
    })
}
