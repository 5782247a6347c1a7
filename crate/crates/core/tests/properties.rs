//! Property tests for the script format, scoring and run summaries.

use proptest::prelude::*;
use testforge_core::agent::{meets_threshold, ExecutionResult, StepOutcome, StepStatus};
use testforge_core::enhance::{strategy2_selectors, Decision, PipelineConfig, StrategyMask};
use testforge_core::metrics::{summarize, ScriptRun};
use testforge_core::page::{scrape_context, SiteContext};
use testforge_core::script::{parse_script, serialize_script, ActionKind, Provenance};
use testforge_core::{Action, Selector, Step, TestScript};

const CSS: [&str; 8] =
    ["button", "#go", "input[name='email']", "form .submit", "a[href='/x']", "nav a", "h1", "ul li a.more"];

fn text() -> impl Strategy<Value = String> {
    prop_oneof!["[a-zA-Z0-9 ]{1,12}", "\\PC{1,8}", Just("quote \" and \\ backslash".to_string())]
}

fn selector() -> impl Strategy<Value = Selector> {
    (
        prop::sample::select(&CSS[..]),
        prop::option::of(prop::sample::select(&["form", "#main", "nav"][..])),
        prop::option::of(text()),
    )
        .prop_map(|(css, prefix, hint)| Selector {
            css: css.into(),
            context_prefix: prefix.map(Into::into),
            text_hint: hint,
        })
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        prop::sample::select(&["/", "/a/b?c=1", "https://other.test/x", "/caf%C3%A9"][..])
            .prop_map(|u| Action::Navigate { url: u.into() }),
        selector().prop_map(|selector| Action::Click { selector }),
        (selector(), text()).prop_map(|(selector, value)| Action::Fill { selector, value }),
        (selector(), text()).prop_map(|(selector, text)| Action::AssertText { selector, text }),
        selector().prop_map(|selector| Action::AssertVisible { selector }),
        (1u64..100_000).prop_map(|ms| Action::Wait { ms }),
        selector().prop_map(|selector| Action::Submit { selector }),
    ]
}

fn script() -> impl Strategy<Value = TestScript> {
    let step = (action(), prop::collection::btree_map("[a-z_]{1,8}", text(), 0..3));
    (
        "[a-z][a-z0-9-]{0,10}",
        prop::collection::vec(step, 1..12),
        prop::sample::select(&[Provenance::Generated, Provenance::Enhanced, Provenance::Manual][..]),
    )
        .prop_map(|(id, steps, provenance)| TestScript {
            id,
            base_url: "https://app.test/base/".into(),
            steps: steps
                .into_iter()
                .enumerate()
                .map(|(i, (action, metadata))| Step { index: i as u32 + 1, action, metadata })
                .collect(),
            provenance,
        })
}

fn outcome(i: u32, status: StepStatus) -> StepOutcome {
    StepOutcome {
        step_index: i,
        action: ActionKind::Click,
        status,
        attempts: 1,
        recovery: None,
        error: None,
        error_kind: None,
        target: "#x".into(),
        navigational: false,
        backoff_ms: Vec::new(),
        duration_ms: 0,
    }
}

fn status() -> impl Strategy<Value = StepStatus> {
    prop::sample::select(&[StepStatus::Ok, StepStatus::Recovered, StepStatus::Failed, StepStatus::Skipped][..])
}

const FORMS: &str = r#"<html><body><main><h1>Account</h1>
<form aria-label="profile"><input name="name"><input name="email"><button class="submit">Save</button></form>
<form aria-label="password"><input name="email"><input name="password" type="password"><button class="submit">Change</button></form>
<ul><li><a href="/a">One</a></li><li><a href="/b">Two</a></li></ul>
</main></body></html>"#;
const FORM_CSS: [&str; 7] =
    ["input[name='email']", "button", "button.submit", "input", "a", "li a", "input[name='name']"];
const HINTS: [&str; 5] = ["profile", "password", "Save", "Change", "Two"];

fn oracle(sel: &Selector) -> usize {
    let doc = scraper::Html::parse_document(FORMS);
    let css = scraper::Selector::parse(&sel.combined_css()).unwrap();
    doc.select(&css)
        .filter(|e| sel.text_hint.as_ref().is_none_or(|h| e.text().collect::<String>().contains(h.as_str())))
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scripts_round_trip_byte_for_byte(s in script()) {
        let text = serialize_script(&s);
        let back = parse_script(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_script(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn s2_never_widens_and_rewrites_to_unique(
        picks in prop::collection::vec((prop::sample::select(&FORM_CSS[..]), prop::option::of(prop::sample::select(&HINTS[..]))), 1..8)
    ) {
        let mut site = SiteContext::default();
        site.insert(scrape_context(FORMS, "http://forms.test/account").unwrap());
        let mut steps = vec![Step::new(1, Action::Navigate { url: "/account".into() })];
        for (css, hint) in picks {
            let mut step = Step::new(steps.len() as u32 + 1, Action::AssertVisible { selector: Selector::css(css) });
            if let Some(h) = hint {
                step.metadata.insert("context_hint".into(), h.into());
            }
            steps.push(step);
        }
        let s = TestScript { id: "p".into(), base_url: "http://forms.test/".into(), steps, provenance: Provenance::Manual };
        let out = strategy2_selectors(&s, &site);
        for (before, after) in s.steps.iter().zip(&out.steps).skip(1) {
            let (b, a) = (before.action.selector().unwrap(), after.action.selector().unwrap());
            prop_assert!(oracle(a) <= oracle(b), "{} -> {}", b, a);
            if a != b {
                prop_assert_eq!(oracle(a), 1, "{} -> {}", b, a);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn strict_never_exceeds_lenient(runs in prop::collection::vec(prop::collection::vec(status(), 1..15), 1..20)) {
        let runs: Vec<ScriptRun> = runs
            .into_iter()
            .map(|sts| {
                let outcomes = sts.into_iter().enumerate().map(|(i, st)| outcome(i as u32 + 1, st)).collect();
                ScriptRun { result: ExecutionResult::new("j", "s", outcomes, 0.8), passes_with_larger_waits: None }
            })
            .collect();
        let t = summarize(&runs, StrategyMask::NONE).unwrap().totals;
        prop_assert!(t.strict_succeeded <= t.succeeded);
        prop_assert!(t.succeeded <= t.scripts);
        let lenient = runs
            .iter()
            .filter(|r| meets_threshold(r.result.outcomes.iter().filter(|o| o.completed()).count(), r.result.outcomes.len(), 0.8))
            .count();
        prop_assert_eq!(t.succeeded, lenient);
    }

    #[test]
    fn threshold_matches_exact_ratio(done in 0usize..200, extra in 0usize..200) {
        let total = done + extra;
        prop_assume!(total > 0);
        prop_assert_eq!(meets_threshold(done, total, 0.8), done * 5 >= total * 4);
    }

    #[test]
    fn more_findings_never_improve_the_decision(n in 0usize..10) {
        let cfg = PipelineConfig::default();
        let rank = |d: Decision| match d { Decision::Regenerate => 0, Decision::ManualReview => 1, Decision::Proceed => 2 };
        prop_assert!(cfg.score(n + 1) <= cfg.score(n));
        prop_assert!(rank(cfg.decide(cfg.score(n + 1))) <= rank(cfg.decide(cfg.score(n))));
    }
}
