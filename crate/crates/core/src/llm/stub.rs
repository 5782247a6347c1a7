//! Deterministic keyword-rule generator. It is deliberately naive: it
//! writes the first selector that comes to mind, guesses routes from words,
//! and never checks its own output, so the enhancement pipeline has real
//! mistakes to catch.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::{GenerationError, GenerationRequest, Provider};
use crate::enhance::{
    strategy3_validate, walk::Walker, AntiPattern, PipelineConfig, ValidationReport, META_CONTEXT_HINT,
    META_TARGET_TEXT,
};
use crate::page::css::{attr_eq, is_ident};
use crate::page::dom::normalize_text;
use crate::page::{match_selector, ElementRecord, PageContext, SiteContext};
use crate::script::{Action, Provenance, Selector, Step, TestScript};

#[derive(Debug, Clone, Copy, Default)]
pub struct StubProvider;

impl Provider for StubProvider {
    fn name(&self) -> &'static str {
        "stub"
    }

    fn generate(&self, req: &GenerationRequest, site: &SiteContext) -> Result<TestScript, GenerationError> {
        match &req.feedback {
            None => generate_fresh(req, site),
            Some(report) => {
                let previous = match &req.previous {
                    Some(p) => p.clone(),
                    None => generate_fresh(req, site)?,
                };
                Ok(repair(&previous, report, site))
            }
        }
    }
}

static NAVIGATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(?:go|navigate|head|return|browse)(?:\s+back)?\s+to|open|visit|load|go|return)\s+(.+)$").unwrap()
});
static LOGIN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:log|sign)\s*in\s+as\s+(\S+)\s+(?:with|using)\s+(?:the\s+)?password\s+(\S+)$").unwrap()
});
static FILL_INTO: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:type|enter|input|put|write)\s+(.+?)\s+(?:into|in)\s+(?:the\s+)?(.+?)(?:\s+(?:field|box|input))?$")
        .unwrap()
});
static FILL_WITH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^fill\s+(?:in\s+|out\s+)?(?:the\s+)?(.+?)(?:\s+(?:field|box|input))?\s+with\s+(.+)$").unwrap()
});
static SUBMIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^submit(?:\s+the)?(?:\s+(.+?))?(?:\s+form)?$").unwrap());
static CLICK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:click|press|tap|hit|choose)\s+(?:on\s+)?(?:the\s+)?(.+)$").unwrap());
static ADD_TO_CART: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:add|put)\s+(?:an?\s+|the\s+|one\s+)?(.+?)\s+(?:to|in|into)\s+(?:the\s+|my\s+)?(?:cart|basket|bag)$",
    )
    .unwrap()
});
static CHECKOUT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:check\s*out|proceed\s+to\s+checkout|complete\s+(?:the\s+)?(?:purchase|order))$").unwrap()
});
static HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:check|verify|see|confirm|ensure|expect|assert|make sure)\s+(?:that\s+)?(?:the\s+)?(?:page\s+)?(?:heading|title)\s+(?:says|reads|is|shows|contains)\s+(.+)$").unwrap()
});
static VISIBLE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:check|verify|confirm|ensure|expect|make sure)\s+(?:that\s+)?(?:the\s+)?(.+?)\s+is\s+(?:visible|shown|displayed)$").unwrap()
});
static SEE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:check|verify|confirm|ensure|expect|see|make sure)\s+(?:that\s+)?(?:(?:i|you|we)\s+)?(?:can\s+)?(?:see|for)?\s*(?:the\s+)?(?:text\s+|message\s+)?(.+)$").unwrap()
});
static WAIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^wait(?:\s+for)?\s+(\d+)\s*(ms|milliseconds?|s|secs?|seconds?)?$").unwrap());
static CLAUSE_SPLIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\s*(?:[;.]\s+|,\s*(?:and\s+)?(?:then\s+)?|\s+and\s+then\s+|\s+then\s+)\s*").unwrap()
});
static AND_VERB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\s+and\s+(?:(?:go|navigate|open|visit|click|press|tap|type|enter|fill|submit|check|verify|confirm|ensure|see|wait|log|sign)\b)").unwrap()
});

const STOP_WORDS: &[&str] =
    &["the", "a", "an", "my", "our", "your", "page", "screen", "section", "site", "tab", "view"];

/// Splits free text into imperative clauses.
fn clauses(instructions: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in CLAUSE_SPLIT.split(instructions.trim().trim_end_matches('.')) {
        let mut rest = part;
        while let Some(m) = AND_VERB.find(rest) {
            out.push(rest[..m.start()].to_string());
            // keep the verb, drop " and "
            let verb_at = m.start() + m.as_str().to_ascii_lowercase().find("and").unwrap() + 3;
            rest = rest[verb_at..].trim_start();
        }
        out.push(rest.to_string());
    }
    out.into_iter().map(|c| c.trim().trim_end_matches(['.', '!']).to_string()).filter(|c| !c.is_empty()).collect()
}

/// Removes surrounding quotes, if any.
fn unquote(s: &str) -> String {
    let t = s.trim();
    for q in ['"', '\'', '`'] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return t[1..t.len() - 1].to_string();
        }
    }
    t.to_string()
}

fn words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOP_WORDS.contains(w))
        .map(|w| match w {
            "signin" | "sign-in" => "login".to_string(),
            w => w.trim_end_matches('s').to_string(),
        })
        .collect()
}

fn normalized_words(phrase: &str) -> Vec<String> {
    let joined = phrase.to_lowercase().replace("sign in", "login").replace("log in", "login");
    words(&joined)
}

/// Best route for a phrase such as "the contact page"; falls back to a
/// slug made from the words, whether or not such a route exists.
fn route_for(phrase: &str, site: &SiteContext) -> String {
    let p = unquote(phrase);
    if p.starts_with('/') || p.contains("://") {
        return p;
    }
    let ws = normalized_words(&p);
    if ws.is_empty() || ws.iter().all(|w| matches!(w.as_str(), "home" | "homepage" | "start" | "main" | "front")) {
        return "/".into();
    }
    let routes: BTreeSet<String> = site.known_routes();
    let mut best: Option<(usize, String)> = None;
    for route in &routes {
        let mut vocab: BTreeSet<String> = words(route).into_iter().collect();
        if let Some(page) = site.page(route) {
            if let Some(h1) = page.elements.iter().find(|e| e.tag == "h1") {
                vocab.extend(words(&h1.text));
            }
        }
        let score = ws.iter().filter(|w| vocab.contains(*w)).count();
        if score == 0 {
            continue;
        }
        let better = match &best {
            None => true,
            Some((s, r)) => score > *s || (score == *s && route.len() < r.len()),
        };
        if better {
            best = Some((score, route.clone()));
        }
    }
    match best {
        Some((_, r)) => r,
        None => format!("/{}", ws.join("-")),
    }
}

/// First-guess selector for an element, the way a person skimming the
/// markup would write it. Uniqueness is not checked.
fn naive_selector(el: &ElementRecord) -> Selector {
    let tag = &el.tag;
    if tag == "a" {
        if let Some(h) = el.attr("href") {
            return Selector::css(format!("a{}", attr_eq("href", h)));
        }
    }
    if let Some(id) = el.attr("id").filter(|i| is_ident(i)) {
        return Selector::css(format!("#{id}"));
    }
    if let Some(class) = el.attr("class").and_then(|c| c.split_whitespace().find(|c| is_ident(c))) {
        return Selector::css(format!("{tag}.{class}"));
    }
    for attr in ["name", "aria-label", "data-testid"] {
        if let Some(v) = el.attr(attr) {
            return Selector::css(format!("{tag}{}", attr_eq(attr, v)));
        }
    }
    Selector::css(tag.clone())
}

fn label_of(el: &ElementRecord) -> String {
    let mut parts = vec![el.text.to_lowercase()];
    for a in ["aria-label", "name", "id", "placeholder", "value", "title"] {
        if let Some(v) = el.attr(a) {
            parts.push(v.to_lowercase().replace(['-', '_'], " "));
        }
    }
    parts.join(" | ")
}

#[derive(Clone, Copy, PartialEq)]
enum Want {
    Link,
    Button,
    Field,
    Any,
}

fn kind_ok(el: &ElementRecord, want: Want) -> bool {
    match want {
        Want::Link => el.tag == "a",
        Want::Button => {
            el.tag == "button" || (el.tag == "input" && matches!(el.attr("type"), Some("submit" | "button")))
        }
        Want::Field => matches!(el.tag.as_str(), "input" | "textarea" | "select") && el.attr("type") != Some("submit"),
        Want::Any => true,
    }
}

/// Element whose visible text or labelling attributes mention `label`.
fn find_element<'a>(
    page: &'a PageContext,
    label: &str,
    want: Want,
    context: Option<&str>,
) -> Option<&'a ElementRecord> {
    let label = normalize_text(&label.to_lowercase());
    if label.is_empty() {
        return None;
    }
    let in_context = |e: &ElementRecord| {
        context.is_none_or(|c| {
            e.ancestry
                .iter()
                .any(|a| a.label_text.to_lowercase().contains(c) || a.selector_fragment.to_lowercase().contains(c))
        })
    };
    let pool: Vec<&ElementRecord> = page.elements.iter().filter(|e| kind_ok(e, want)).collect();
    let exact = pool.iter().filter(|e| e.text.to_lowercase() == label);
    let partial = pool.iter().filter(|e| label_of(e).contains(&label));
    let worded = pool.iter().filter(|e| {
        let ws = words(&label);
        !ws.is_empty() && ws.iter().all(|w| words(&label_of(e)).contains(w))
    });
    for tier in [exact.copied().collect::<Vec<_>>(), partial.copied().collect(), worded.copied().collect()] {
        if let Some(e) = tier.iter().find(|e| in_context(e)).or(tier.first()) {
            return Some(e);
        }
    }
    None
}

struct Gen<'a> {
    site: &'a SiteContext,
    steps: Vec<Step>,
    path: Option<String>,
}

impl<'a> Gen<'a> {
    fn page(&self) -> Option<&'a PageContext> {
        self.path.as_deref().and_then(|p| self.site.page(p))
    }

    fn push(&mut self, action: Action) -> &mut Step {
        let index = self.steps.len() as u32 + 1;
        self.steps.push(Step::new(index, action));
        self.steps.last_mut().expect("just pushed")
    }

    fn navigate(&mut self, route: String) {
        self.path = Some(route.clone()).filter(|r| r.starts_with('/'));
        self.push(Action::Navigate { url: route });
    }

    fn clause(&mut self, original: &str) -> bool {
        let lower = original.to_ascii_lowercase();
        let lower = lower.as_str();
        let orig = |m: regex::Match<'_>| original[m.range()].to_string();

        if let Some(c) = WAIT.captures(lower) {
            let n: u64 = c[1].parse().unwrap_or(0);
            let ms = match c.get(2).map(|m| m.as_str()) {
                Some(u) if u.starts_with('s') => n.saturating_mul(1000),
                _ => n,
            };
            if ms > 0 {
                self.push(Action::Wait { ms });
                return true;
            }
            return false;
        }
        if let Some(c) = LOGIN.captures(lower) {
            let user = unquote(&orig(c.get(1).unwrap()));
            let password = unquote(&orig(c.get(2).unwrap()));
            let login = route_for("login", self.site);
            if self.path.as_deref() != Some(login.as_str()) {
                self.navigate(login);
            }
            self.push(Action::Fill { selector: Selector::css("input[name='username']"), value: user });
            self.push(Action::Fill { selector: Selector::css("input[name='password']"), value: password });
            self.push(Action::Submit { selector: Selector::css("form") });
            self.path = None;
            return true;
        }
        if let Some(c) = NAVIGATE.captures(lower) {
            let route = route_for(&orig(c.get(1).unwrap()), self.site);
            self.navigate(route);
            return true;
        }
        if let Some(c) = FILL_INTO.captures(lower) {
            let value = unquote(&orig(c.get(1).unwrap()));
            let field = unquote(c.get(2).unwrap().as_str());
            self.fill(&field, value);
            return true;
        }
        if let Some(c) = FILL_WITH.captures(lower) {
            let field = unquote(c.get(1).unwrap().as_str());
            let value = unquote(&orig(c.get(2).unwrap()));
            self.fill(&field, value);
            return true;
        }
        if let Some(c) = SUBMIT.captures(lower) {
            let name = c.get(1).map(|m| m.as_str().trim().to_string()).filter(|s| !s.is_empty());
            self.submit(name);
            return true;
        }
        if ADD_TO_CART.is_match(lower) {
            self.click("add to cart button");
            return true;
        }
        if CHECKOUT.is_match(lower) {
            self.click("checkout");
            return true;
        }
        if let Some(c) = CLICK.captures(lower) {
            let target = orig(c.get(1).unwrap());
            self.click(&target);
            return true;
        }
        if let Some(c) = HEADING.captures(lower) {
            let text = unquote(&orig(c.get(1).unwrap()));
            self.push(Action::AssertText { selector: Selector::css("h1"), text });
            return true;
        }
        if let Some(c) = VISIBLE.captures(lower) {
            let label = unquote(c.get(1).unwrap().as_str());
            let found = self.page().and_then(|p| find_element(p, &label, Want::Any, None));
            let selector = found.map(naive_selector).unwrap_or_else(|| Selector::css("main"));
            let step = self.push(Action::AssertVisible { selector });
            step.metadata.insert(META_TARGET_TEXT.into(), found.map_or(label, |e| e.text.clone()));
            return true;
        }
        if let Some(c) = SEE.captures(lower) {
            let text = unquote(&orig(c.get(1).unwrap()));
            if text.is_empty() {
                return false;
            }
            let found = self.page().and_then(|p| {
                let needle = text.to_lowercase();
                p.elements.iter().filter(|e| e.text.to_lowercase().contains(&needle)).min_by_key(|e| e.text.len())
            });
            let selector = found.map(naive_selector).unwrap_or_else(|| Selector::css("main"));
            self.push(Action::AssertText { selector, text });
            return true;
        }
        false
    }

    fn fill(&mut self, field: &str, value: String) {
        let found = self.page().and_then(|p| find_element(p, field, Want::Field, None));
        let selector = match found {
            Some(e) => naive_selector(e),
            None => Selector::css(format!("input{}", attr_eq("name", &words(field).join("_")))),
        };
        self.push(Action::Fill { selector, value });
    }

    fn submit(&mut self, name: Option<String>) {
        let form = name.as_deref().and_then(|n| {
            self.page().and_then(|p| {
                p.elements.iter().find(|e| {
                    e.tag == "form"
                        && ["aria-label", "id", "name"]
                            .iter()
                            .any(|a| e.attr(a).is_some_and(|v| v.to_lowercase().contains(n)))
                })
            })
        });
        let selector = form.map(naive_selector).unwrap_or_else(|| Selector::css("form"));
        let step = self.push(Action::Submit { selector });
        if let Some(n) = name {
            step.metadata.insert(META_CONTEXT_HINT.into(), n);
        }
        self.path = None;
    }

    fn click(&mut self, target: &str) {
        let lower = target.to_ascii_lowercase();
        let (label_part, context) = match lower.find(" in the ") {
            Some(i) => (&target[..i], Some(lower[i + 8..].to_string())),
            None => (target, None),
        };
        let context = context.map(|c| {
            c.trim_end_matches(" form")
                .trim_end_matches(" section")
                .trim_end_matches(" menu")
                .trim_end_matches(" area")
                .trim()
                .to_string()
        });
        let mut label = label_part.trim().to_string();
        let mut want = Want::Any;
        for (suffix, w) in [(" link", Want::Link), (" button", Want::Button), (" tab", Want::Link)] {
            if label.to_ascii_lowercase().ends_with(suffix) {
                label.truncate(label.len() - suffix.len());
                want = w;
                break;
            }
        }
        let label = unquote(&label);
        let page = self.page();
        let found = page.and_then(|p| find_element(p, &label, want, context.as_deref()));
        let (selector, text) = match found {
            Some(e) => (naive_selector(e), e.text.clone()),
            None => {
                let tag = if want == Want::Link { "a" } else { "button" };
                (Selector::css(tag), label.clone())
            }
        };
        let next = found
            .filter(|e| e.tag == "a")
            .and_then(|e| e.attr("href"))
            .and_then(|h| page.and_then(|p| url::Url::parse(&p.url).ok()?.join(h).ok()))
            .map(|u| u.path().to_string());
        let step = self.push(Action::Click { selector });
        if !text.is_empty() {
            step.metadata.insert(META_TARGET_TEXT.into(), text);
        }
        if let Some(c) = context.filter(|c| !c.is_empty()) {
            step.metadata.insert(META_CONTEXT_HINT.into(), c);
        }
        if let Some(n) = next {
            self.path = Some(n);
        }
    }
}

fn generate_fresh(req: &GenerationRequest, site: &SiteContext) -> Result<TestScript, GenerationError> {
    let start = url::Url::parse(&req.base_url)
        .map(|u| u.path().to_string())
        .map_err(|e| GenerationError::InvalidRequest(format!("base_url: {e}")))?;
    let mut g = Gen { site, steps: Vec::new(), path: Some(start) };
    for c in clauses(&req.instructions) {
        g.clause(&c);
    }
    if g.steps.is_empty() {
        return Err(GenerationError::NoActionableInstructions);
    }
    Ok(TestScript {
        id: req.script_id.clone(),
        base_url: req.base_url.clone(),
        steps: g.steps,
        provenance: Provenance::Generated,
    })
}

/// Drops or patches the steps named in `report`. Returns `previous`
/// unchanged unless the patched script has strictly fewer findings.
fn repair(previous: &TestScript, report: &ValidationReport, site: &SiteContext) -> TestScript {
    if report.findings.is_empty() {
        return previous.clone();
    }
    let mut candidate = previous.clone();
    let mut drop: BTreeSet<u32> = BTreeSet::new();
    let mut walker = Walker::new(site, previous);
    for step in &mut candidate.steps {
        let named: Vec<AntiPattern> =
            report.findings.iter().filter(|f| f.step_index == step.index).map(|f| f.anti_pattern).collect();
        let page = walker.page();
        walker.advance(step);
        if named.is_empty() {
            continue;
        }
        if named == [AntiPattern::AmbiguousSelector] {
            let hint = match &step.action {
                Action::AssertText { text, .. } => Some(text.clone()),
                _ => step.meta(META_TARGET_TEXT).map(str::to_string),
            };
            if let (Some(page), Some(hint), Some(sel)) = (page, hint, step.action.selector()) {
                let hinted = sel.clone().with_text_hint(hint);
                if match_selector(page, &hinted).is_ok_and(|m| m.len() == 1) {
                    *step.action.selector_mut().expect("selector") = hinted;
                    continue;
                }
            }
        }
        drop.insert(step.index);
    }
    candidate.steps.retain(|s| !drop.contains(&s.index));
    if candidate.steps.is_empty() {
        return previous.clone();
    }
    candidate.renumber();
    let cfg = PipelineConfig::default();
    let before = strategy3_validate(previous, site, &cfg).findings.len();
    let after = strategy3_validate(&candidate, site, &cfg).findings.len();
    if after < before {
        candidate
    } else {
        previous.clone()
    }
}

#[cfg(test)]
pub(super) fn split_for_test(s: &str) -> Vec<String> {
    clauses(s)
}
