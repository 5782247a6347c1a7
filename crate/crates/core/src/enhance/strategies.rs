use std::collections::BTreeMap;

use url::Url;

use crate::page::dom::normalize_text;
use crate::page::{match_selector, same_origin_path, PageContext, SiteContext};
use crate::script::{Action, Selector, Step, TestScript, META_ORIGINAL_SELECTOR};

use super::walk::{common_anchor_route, literal_href, Walker};
use super::{
    AntiPattern, Finding, PipelineConfig, ValidationReport, META_AMBIGUOUS, META_CONTEXT_HINT, META_ROUTE_CHANGE,
    META_TARGET_TEXT, META_UNMATCHED, META_WAIT_REASON,
};

enum NavVerdict {
    Convert(String),
    /// An in-site link click that cannot be rewritten safely.
    Mark,
    Leave,
}

fn nav_verdict(walker: &Walker<'_>, ctx: &SiteContext, selector: &Selector) -> NavVerdict {
    let Some(page) = walker.page() else {
        return match literal_href(&selector.css).map(|h| walker.navigate_path(&h)) {
            Some(Some(r)) if ctx.known_routes().contains(&r) => NavVerdict::Convert(r),
            Some(Some(_)) => NavVerdict::Mark,
            Some(None) => NavVerdict::Leave,
            None if selector.target_tag().as_deref() == Some("a") => NavVerdict::Mark,
            None => NavVerdict::Leave,
        };
    };
    let ids = match_selector(page, selector).unwrap_or_default();
    if ids.is_empty() || !ids.iter().all(|&i| page.elements[i as usize].tag == "a") {
        return NavVerdict::Leave;
    }
    if let Some(r) = common_anchor_route(page, &ids) {
        return NavVerdict::Convert(r);
    }
    let Ok(base) = Url::parse(&page.url) else {
        return NavVerdict::Leave;
    };
    let in_site =
        ids.iter().all(|&i| page.elements[i as usize].attr("href").and_then(|h| same_origin_path(&base, h)).is_some());
    if in_site {
        NavVerdict::Mark
    } else {
        NavVerdict::Leave
    }
}

/// S1: clicks on in-site navigation links become direct navigations.
pub fn strategy1_navigation(script: &TestScript, ctx: &SiteContext) -> TestScript {
    let mut out = script.clone();
    let mut walker = Walker::new(ctx, script);
    for step in &mut out.steps {
        if let Action::Click { selector } = &step.action {
            match nav_verdict(&walker, ctx, selector) {
                NavVerdict::Convert(path) => {
                    let original = selector.to_string();
                    step.action = Action::Navigate { url: path };
                    step.metadata.insert(META_ORIGINAL_SELECTOR.into(), original);
                    step.metadata.remove(META_ROUTE_CHANGE);
                }
                NavVerdict::Mark => {
                    step.metadata.insert(META_ROUTE_CHANGE.into(), "possible".into());
                }
                NavVerdict::Leave => {}
            }
        }
        walker.advance(step);
    }
    out
}

/// Text the author expects on the target: the asserted text or the
/// `target_text` hint left by the generator.
fn intent_text(step: &Step) -> Option<String> {
    let raw = match &step.action {
        Action::AssertText { text, .. } => Some(text.as_str()),
        _ => step.meta(META_TARGET_TEXT),
    };
    raw.map(normalize_text).filter(|t| !t.is_empty())
}

fn choose_target(page: &PageContext, ids: &[u32], context_hint: Option<&str>, intent: Option<&str>) -> u32 {
    let mut pool: Vec<u32> = ids.to_vec();
    if let Some(hint) = context_hint.map(|h| h.trim().to_lowercase()).filter(|h| !h.is_empty()) {
        let in_context: Vec<u32> = pool
            .iter()
            .copied()
            .filter(|&i| {
                page.elements[i as usize].ancestry.iter().any(|a| {
                    a.label_text.to_lowercase().contains(&hint) || a.selector_fragment.to_lowercase().contains(&hint)
                })
            })
            .collect();
        if !in_context.is_empty() {
            pool = in_context;
        }
    }
    if let Some(intent) = intent {
        if let Some(&i) = pool.iter().find(|&&i| page.elements[i as usize].text.contains(intent)) {
            return i;
        }
    }
    pool[0]
}

fn replace_selector(step: &mut Step, candidate: Selector) {
    let slot = step.action.selector_mut().expect("selector");
    let original = std::mem::replace(slot, candidate);
    step.metadata.entry(META_ORIGINAL_SELECTOR.to_string()).or_insert_with(|| original.to_string());
}

fn enrich(step: &mut Step, page: &PageContext) {
    let Some(sel) = step.action.selector().cloned() else {
        return;
    };
    let Ok(ids) = match_selector(page, &sel) else {
        return;
    };
    match ids.len() {
        0 => {
            step.metadata.insert(META_UNMATCHED.into(), "true".into());
            return;
        }
        1 => return,
        _ => {}
    }
    let intent = intent_text(step);
    let target = choose_target(page, &ids, step.meta(META_CONTEXT_HINT), intent.as_deref());
    let rec = &page.elements[target as usize];
    let unique = |s: &Selector| match_selector(page, s).is_ok_and(|m| m == [target]);

    let mut tried = vec![sel.clone()];
    let mut fragments: Vec<&str> = Vec::new();
    for anc in &rec.ancestry {
        fragments.insert(0, &anc.selector_fragment);
        let mut prefix = fragments.join(" ");
        if let Some(existing) = &sel.context_prefix {
            prefix = format!("{prefix} {existing}");
        }
        let candidate = Selector { context_prefix: Some(prefix), ..sel.clone() };
        if unique(&candidate) {
            replace_selector(step, candidate);
            return;
        }
        tried.push(candidate);
    }
    if sel.text_hint.is_none() {
        let hints = intent.into_iter().chain(Some(rec.text.clone()).filter(|t| !t.is_empty()));
        for hint in hints {
            for base in &tried {
                let candidate = base.clone().with_text_hint(hint.clone());
                if unique(&candidate) {
                    replace_selector(step, candidate);
                    return;
                }
            }
        }
    }
    step.metadata.insert(META_AMBIGUOUS.into(), format!("{} matches", ids.len()));
}

/// S2: ambiguous selectors gain ancestor context until they match one element.
pub fn strategy2_selectors(script: &TestScript, ctx: &SiteContext) -> TestScript {
    let mut out = script.clone();
    let mut walker = Walker::new(ctx, script);
    for step in &mut out.steps {
        if let Some(page) = walker.page() {
            if step.meta(META_AMBIGUOUS).is_none() {
                enrich(step, page);
            }
        }
        walker.advance(step);
    }
    out
}

/// S3: static anti-pattern scan and the proceed / regenerate gate.
pub fn strategy3_validate(script: &TestScript, ctx: &SiteContext, cfg: &PipelineConfig) -> ValidationReport {
    let known = ctx.known_routes();
    let mut findings = Vec::new();
    let mut walker = Walker::new(ctx, script);
    for step in &script.steps {
        let mut add =
            |anti_pattern, detail: String| findings.push(Finding { step_index: step.index, anti_pattern, detail });
        match &step.action {
            Action::Navigate { url } => match walker.navigate_path(url) {
                Some(p) if known.contains(&p) => {}
                Some(p) => add(AntiPattern::UnknownRoute, format!("route {p} is not linked from any scraped page")),
                None => add(AntiPattern::UnknownRoute, format!("{url} is outside the site")),
            },
            action => {
                if let (Some(page), Some(sel)) = (walker.page(), action.selector()) {
                    let path = page.path();
                    let ids = match_selector(page, sel).unwrap_or_default();
                    let recs: Vec<_> = ids.iter().map(|&i| &page.elements[i as usize]).collect();
                    match recs.len() {
                        0 => add(AntiPattern::UnmatchedSelector, format!("nothing on {path} matches {sel}")),
                        1 => {}
                        n => add(AntiPattern::AmbiguousSelector, format!("{n} elements on {path} match {sel}")),
                    }
                    if !recs.is_empty() {
                        match action {
                            Action::Click { .. } if recs.iter().all(|r| !r.visible) => {
                                add(AntiPattern::InvisibleClick, format!("{sel} is not visible on {path}"))
                            }
                            Action::Fill { .. } if recs.iter().all(|r| r.readonly) => {
                                add(AntiPattern::ReadonlyFill, format!("{sel} is readonly on {path}"))
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        walker.advance(step);
    }
    let score = cfg.score(findings.len());
    ValidationReport { score, decision: cfg.decide(score), findings }
}

fn push_wait(out: &mut Vec<Step>, ms: u64, metadata: BTreeMap<String, String>) {
    if let Some(Step { action: Action::Wait { ms: prev }, .. }) = out.last_mut() {
        *prev = (*prev).max(ms);
        return;
    }
    out.push(Step { index: 0, action: Action::Wait { ms }, metadata });
}

fn reason(r: &str) -> BTreeMap<String, String> {
    BTreeMap::from([(META_WAIT_REASON.to_string(), r.to_string())])
}

/// S4: waits after navigations, route-changing clicks and before
/// post-submit assertions; adjacent waits merge into the longest.
pub fn strategy4_waits(script: &TestScript, cfg: &PipelineConfig) -> TestScript {
    let mut steps: Vec<Step> = Vec::with_capacity(script.steps.len() * 2);
    let mut after_submit = false;
    for step in &script.steps {
        if let Action::Wait { ms } = step.action {
            push_wait(&mut steps, ms, step.metadata.clone());
            continue;
        }
        if step.action.is_assert() && after_submit {
            push_wait(&mut steps, cfg.post_submit_wait_ms, reason("after_submit"));
            after_submit = false;
        }
        steps.push(step.clone());
        match &step.action {
            Action::Navigate { .. } => {
                after_submit = false;
                push_wait(&mut steps, cfg.nav_wait_ms, reason("after_navigate"));
            }
            Action::Click { selector }
                if step.meta(META_ROUTE_CHANGE).is_some() || selector.target_tag().as_deref() == Some("a") =>
            {
                push_wait(&mut steps, cfg.click_route_wait_ms, reason("after_route_click"));
            }
            Action::Submit { .. } => after_submit = true,
            _ => {}
        }
    }
    let mut out = TestScript { steps, ..script.clone() };
    out.renumber();
    out
}
