use super::*;
use crate::enhance::{strategy3_validate, AntiPattern, Decision, Finding, PipelineConfig};
use crate::page::scrape_context;
use crate::script::{Action, Selector};

const BASE: &str = "http://shop.test/";
const HOME: &str = r#"<html><body>
<header><nav><a href="/">Home</a> <a href="/contact">Contact</a> <a href="/login">Sign in</a></nav></header>
<main><h1>Shop</h1>
<form aria-label="search"><input name="q" placeholder="Search"><button class="submit">Go</button></form>
</main></body></html>"#;
const CONTACT: &str = r#"<html><body><main><h1>Contact</h1>
<form aria-label="message" action="/thanks"><input name="email" required><textarea name="message"></textarea>
<button class="submit">Send</button></form></main></body></html>"#;

fn site() -> SiteContext {
    let mut s = SiteContext::default();
    s.insert(scrape_context(HOME, BASE).unwrap());
    s.insert(scrape_context(CONTACT, "http://shop.test/contact").unwrap());
    s
}

fn bridge() -> Bridge {
    Bridge::from_config(ProviderConfig::default()).unwrap()
}

fn actions(s: &TestScript) -> Vec<Action> {
    s.steps.iter().map(|s| s.action.clone()).collect()
}

#[test]
fn clause_splitting() {
    assert_eq!(
        stub::split_for_test("Go to the contact page and check the heading says Contact."),
        vec!["Go to the contact page", "check the heading says Contact"]
    );
    assert_eq!(
        stub::split_for_test("open home, then click Contact; wait 2 seconds then verify Terms and Conditions"),
        vec!["open home", "click Contact", "wait 2 seconds", "verify Terms and Conditions"]
    );
}

#[test]
fn stub_contact_heading() {
    let req = GenerationRequest::new("s", BASE, "go to the contact page and check the heading says Contact");
    let s = bridge().generate(&req, &site()).unwrap();
    assert_eq!(
        actions(&s),
        vec![
            Action::Navigate { url: "/contact".into() },
            Action::AssertText { selector: Selector::css("h1"), text: "Contact".into() },
        ]
    );
    assert_eq!(s.provenance, Provenance::Generated);
}

#[test]
fn stub_is_naive_about_routes() {
    let req = GenerationRequest::new("s", BASE, "open the order history page");
    let s = bridge().generate(&req, &site()).unwrap();
    assert_eq!(actions(&s), vec![Action::Navigate { url: "/order-history".into() }]);
    let report = strategy3_validate(&s, &site(), &PipelineConfig::default());
    assert_eq!(report.findings[0].anti_pattern, AntiPattern::UnknownRoute);
}

#[test]
fn stub_clicks_fills_and_submits() {
    let req = GenerationRequest::new(
        "s",
        BASE,
        "open the home page, click the Contact link, type 'a@b.test' into the email field, \
         fill the message with Hello there and submit the message form",
    );
    let s = bridge().generate(&req, &site()).unwrap();
    assert_eq!(
        actions(&s),
        vec![
            Action::Navigate { url: "/".into() },
            Action::Click { selector: Selector::css("a[href='/contact']") },
            Action::Fill { selector: Selector::css("input[name='email']"), value: "a@b.test".into() },
            Action::Fill { selector: Selector::css("textarea[name='message']"), value: "Hello there".into() },
            Action::Submit { selector: Selector::css("form[aria-label='message']") },
        ]
    );
    assert_eq!(s.steps[1].meta("target_text"), Some("Contact"));
}

#[test]
fn stub_login_expands() {
    let req = GenerationRequest::new("s", BASE, "log in as alice with password wonderland");
    let s = bridge().generate(&req, &site()).unwrap();
    assert_eq!(
        actions(&s),
        vec![
            Action::Navigate { url: "/login".into() },
            Action::Fill { selector: Selector::css("input[name='username']"), value: "alice".into() },
            Action::Fill { selector: Selector::css("input[name='password']"), value: "wonderland".into() },
            Action::Submit { selector: Selector::css("form") },
        ]
    );
}

#[test]
fn stub_rejects_nonsense() {
    let req = GenerationRequest::new("s", BASE, "the quick brown fox");
    assert_eq!(bridge().generate(&req, &site()), Err(GenerationError::NoActionableInstructions));
}

#[test]
fn stub_is_deterministic() {
    let req = GenerationRequest::new("s", BASE, "go to contact, click Send, check you can see Contact");
    assert_eq!(bridge().generate(&req, &site()), bridge().generate(&req, &site()));
}

#[test]
fn regeneration_drops_unknown_route_step() {
    let req = GenerationRequest::new("s", BASE, "go home, open the ghost page, check the heading says Shop");
    let first = bridge().generate(&req, &site()).unwrap();
    assert_eq!(first.steps[1].action, Action::Navigate { url: "/ghost".into() });
    let report = strategy3_validate(&first, &site(), &PipelineConfig::default());
    assert_eq!(
        report.findings,
        vec![Finding {
            step_index: 2,
            anti_pattern: AntiPattern::UnknownRoute,
            detail: "route /ghost is not linked from any scraped page".into()
        }]
    );
    let second = bridge().regenerate(&req.with_feedback(first.clone(), report), &site()).unwrap();
    assert_eq!(
        actions(&second),
        vec![
            Action::Navigate { url: "/".into() },
            Action::AssertText { selector: Selector::css("h1"), text: "Shop".into() },
        ]
    );
    assert_eq!(second.steps.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 2]);
}

#[test]
fn regeneration_with_clean_feedback_is_identity() {
    let req = GenerationRequest::new("s", BASE, "go to the contact page");
    let first = bridge().generate(&req, &site()).unwrap();
    let clean = ValidationReport { score: 100, findings: vec![], decision: Decision::Proceed };
    let second = bridge().regenerate(&req.with_feedback(first.clone(), clean), &site()).unwrap();
    assert_eq!(second, first);
}

#[test]
fn attempts_are_bounded() {
    let mut req = GenerationRequest::new("s", BASE, "go to the contact page");
    req.attempt = 3;
    assert_eq!(bridge().generate(&req, &site()), Err(GenerationError::AttemptsExhausted { attempt: 3, max: 2 }));
    assert!(matches!(
        bridge().regenerate(&GenerationRequest::new("s", BASE, "x"), &site()),
        Err(GenerationError::InvalidRequest(_))
    ));
}

#[test]
fn config_rules() {
    assert!(ProviderConfig::default().validate().is_ok());
    assert!(ProviderConfig { kind: ProviderKind::Http, ..Default::default() }.validate().is_err());
    assert!(ProviderConfig { endpoint: Some("http://x".into()), ..Default::default() }.validate().is_err());
    assert!(ProviderConfig::http("http://x").validate().is_ok());
}

#[test]
fn decode_rejects_bad_payloads() {
    for raw in ["not json", "[]", "{}", r#"{"script": 3}"#, r#"{"script": {"schema": "testforge/1"}}"#] {
        match decode_provider_output(raw) {
            Err(GenerationError::MalformedProviderOutput { raw: r, .. }) => assert_eq!(r, raw),
            other => panic!("{raw}: {other:?}"),
        }
    }
    let req = GenerationRequest::new("s", BASE, "go to the contact page");
    let script = bridge().generate(&req, &site()).unwrap();
    let body = serde_json::json!({ "script": script.to_value() }).to_string();
    assert_eq!(decode_provider_output(&body).unwrap(), script);
    let body = serde_json::json!({ "script": crate::script::serialize_script(&script) }).to_string();
    assert_eq!(decode_provider_output(&body).unwrap(), script);
}
