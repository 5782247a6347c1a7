use super::*;
use crate::browser::{Browser, BrowserError, ErrorKind};
use crate::clock::{Clock, SimClock};
use crate::script::Selector;

const HOME: &str = r#"<html><body>
<header><nav><a href="/">Home</a> <a href="/contact">Contact</a></nav></header>
<main><h1>Welcome</h1><p id="promo">Sale</p>
<a href="/account">Account</a> <a href="/invoices/1">Invoice 1</a> <a href="/invoices/2">Invoice 2</a></main>
</body></html>"#;
const CONTACT: &str = r#"<html><body><main><h1>Contact us</h1>
<form action="/thanks"><input name="email" required><input name="ref" readonly value="x">
<button type="submit">Send</button></form></main></body></html>"#;
const THANKS: &str = "<html><body><h1>Thanks</h1></body></html>";
const LOGIN: &str = r#"<html><body><h1>Sign in</h1><form><input name="username"><input name="password" type="password"><button>Sign in</button></form></body></html>"#;
const ACCOUNT: &str = "<html><body><h1>Your account</h1></body></html>";
const INV1: &str = "<html><body><h1>Invoice 1</h1><p>INV-0001 total 10</p></body></html>";
const INV2: &str = "<html><body><h1>Invoice 2</h1><p>INV-0002 total 20</p></body></html>";

fn auth() -> AuthSpec {
    AuthSpec {
        login_path: "/login".into(),
        logout_path: None,
        after_login: Some("/account".into()),
        users: vec![
            UserSpec { name: "alice".into(), password: "a-pw".into() },
            UserSpec { name: "bob".into(), password: "b-pw".into() },
        ],
        protected: vec!["/account".into()],
        resources: vec![
            ResourceSpec { path: "/invoices/1".into(), owner: "alice".into(), marker: "INV-0001".into() },
            ResourceSpec { path: "/invoices/2".into(), owner: "bob".into(), marker: "INV-0002".into() },
        ],
        session_ttl_ms: None,
    }
}

fn site(faults: Vec<FaultSpec>) -> std::sync::Arc<SimSite> {
    SimSite::from_pages(
        "demo",
        &[
            ("/", HOME),
            ("/contact", CONTACT),
            ("/thanks", THANKS),
            ("/login", LOGIN),
            ("/account", ACCOUNT),
            ("/invoices/1", INV1),
            ("/invoices/2", INV2),
        ],
        faults,
        Some(auth()),
    )
    .unwrap()
}

fn fault(kind: FaultKind, target: &str) -> FaultSpec {
    FaultSpec { kind, target: Some(target.into()), selector: None, magnitude: None, redirect_to: None }
}

fn sel(css: &str) -> Selector {
    Selector::css(css)
}

#[test]
fn navigate_and_follow_links() {
    let site = site(vec![]);
    let mut s = site.open_session(SimClock::new());
    let r = s.navigate("/").unwrap();
    assert_eq!(r.url, "http://demo.test/");
    assert_eq!(s.read_text(&sel("h1")).unwrap(), "Welcome");
    s.click(&sel("a[href='/contact']")).unwrap();
    assert_eq!(s.current_url().unwrap(), "http://demo.test/contact");
    assert_eq!(s.read_text(&sel("h1")).unwrap(), "Contact us");
}

#[test]
fn unknown_path_is_not_a_page() {
    let site = site(vec![]);
    let mut s = site.open_session(SimClock::new());
    let e = s.navigate("/nope").unwrap_err();
    assert_eq!(e, BrowserError::NotAPage { url: "http://demo.test/nope".into(), status: 404 });
    let e = s.navigate("https://elsewhere.test/").unwrap_err();
    assert_eq!(e.kind(), ErrorKind::NotAPage);
}

#[test]
fn form_rules() {
    let site = site(vec![]);
    let mut s = site.open_session(SimClock::new());
    s.navigate("/contact").unwrap();
    let e = s.click(&sel("button")).unwrap_err();
    assert_eq!(e.kind(), ErrorKind::FormValidation);
    assert_eq!(s.fill(&sel("input[name='ref']"), "y").unwrap_err().kind(), ErrorKind::Readonly);
    s.fill(&sel("input[name='email']"), "a@b.test").unwrap();
    s.submit(&sel("form")).unwrap();
    assert_eq!(s.path(), "/thanks");
}

#[test]
fn duplicate_nav_links_make_link_selectors_ambiguous() {
    let site = site(vec![fault(FaultKind::DuplicateNavLinks, "/")]);
    let mut s = site.open_session(SimClock::new());
    s.navigate("/").unwrap();
    let e = s.click(&sel("a[href='/contact']")).unwrap_err();
    assert_eq!(e, BrowserError::AmbiguousSelector { selector: "a[href='/contact']".into(), count: 2 });
    assert_eq!(s.count(&sel("header a[href='/contact']")).unwrap(), 1);
    let ctx = site.scrape_all();
    assert_eq!(
        ctx.page("/").unwrap().elements.iter().filter(|e| e.tag == "a" && e.attr("href") == Some("/contact")).count(),
        2
    );
}

#[test]
fn element_delay_resolves_on_virtual_time() {
    let mut f = fault(FaultKind::ElementDelay, "/");
    f.selector = Some("#promo".into());
    f.magnitude = Some(1200);
    let site = site(vec![f]);
    let clock = SimClock::new();
    let mut s = site.open_session(clock.clone());
    s.navigate("/").unwrap();
    assert_eq!(s.count(&sel("#promo")).unwrap(), 0);
    assert!(!s.page_source().unwrap().contains("promo"));
    s.wait(1199).unwrap();
    assert_eq!(s.count(&sel("#promo")).unwrap(), 0);
    s.wait(1).unwrap();
    assert_eq!(s.read_text(&sel("#promo")).unwrap(), "Sale");
    assert_eq!(clock.now_ms(), 1200);
}

#[test]
fn async_content_without_magnitude_never_appears() {
    let mut f = fault(FaultKind::AsyncContent, "/");
    f.selector = Some("#promo".into());
    let site = site(vec![f]);
    let mut s = site.open_session(SimClock::new());
    s.navigate("/").unwrap();
    s.wait(1_000_000).unwrap();
    assert_eq!(s.count(&sel("#promo")).unwrap(), 0);
}

#[test]
fn route_change_delay_defers_navigation() {
    let mut f = fault(FaultKind::RouteChangeDelay, "/");
    f.magnitude = Some(400);
    let site = site(vec![f]);
    let mut s = site.open_session(SimClock::new());
    s.navigate("/").unwrap();
    s.click(&sel("header a[href='/contact']")).unwrap();
    assert_eq!(s.path(), "/");
    s.wait(400).unwrap();
    assert_eq!(s.path(), "/contact");
}

#[test]
fn modal_reset_clears_fields() {
    let mut f = fault(FaultKind::ModalReset, "/contact");
    f.magnitude = Some(2);
    let site = site(vec![f]);
    let mut s = site.open_session(SimClock::new());
    s.navigate("/contact").unwrap();
    s.fill(&sel("input[name='email']"), "a@b.test").unwrap();
    let e = s.click(&sel("button")).unwrap_err();
    assert_eq!(e.kind(), ErrorKind::FormValidation);
}

#[test]
fn redirect_fault() {
    let mut f = fault(FaultKind::RedirectOn, "/contact");
    f.redirect_to = Some("/".into());
    let site = site(vec![f]);
    let mut s = site.open_session(SimClock::new());
    let r = s.navigate("/contact").unwrap();
    assert_eq!(r.redirected_from.as_deref(), Some("/contact"));
    assert_eq!(s.path(), "/");
}

#[test]
fn auth_rules_and_login_form() {
    let site = site(vec![]);
    let mut s = site.open_session(SimClock::new());
    let r = s.navigate("/account").unwrap();
    assert_eq!(s.path(), "/login");
    assert_eq!(r.redirected_from.as_deref(), Some("/account"));
    s.fill(&sel("input[name='username']"), "alice").unwrap();
    s.fill(&sel("input[name='password']"), "wrong").unwrap();
    assert_eq!(s.click(&sel("button")).unwrap_err(), BrowserError::BadCredentials);
    s.fill(&sel("input[name='password']"), "a-pw").unwrap();
    let before = s.session_token().unwrap();
    s.click(&sel("button")).unwrap();
    assert_eq!(s.path(), "/account");
    assert_ne!(s.session_token().unwrap(), before);
    assert_eq!(s.fetch("/invoices/1").unwrap().status, 200);
    let other = s.fetch("/invoices/2").unwrap();
    assert_eq!(other.status, 403);
    assert!(!other.text.contains("INV-0002"));
}

#[test]
fn auth_faults() {
    let site = site(vec![
        fault(FaultKind::MissingAuthCheck, "/account"),
        fault(FaultKind::IdorExposure, "/invoices/2"),
        FaultSpec {
            kind: FaultKind::SessionFixation,
            target: None,
            selector: None,
            magnitude: None,
            redirect_to: None,
        },
    ]);
    let mut s = site.open_session(SimClock::new());
    assert_eq!(s.fetch("/account").unwrap().final_path, "/account");
    let before = s.session_token().unwrap();
    s.login("alice", "a-pw").unwrap();
    assert_eq!(s.session_token().unwrap(), before);
    let r = s.fetch("/invoices/2").unwrap();
    assert_eq!(r.status, 200);
    assert!(r.text.contains("INV-0002"));
}

#[test]
fn session_ttl_expires_login() {
    let mut a = auth();
    a.session_ttl_ms = Some(1000);
    let site = SimSite::from_pages(
        "t",
        &[
            ("/", HOME),
            ("/contact", CONTACT),
            ("/thanks", THANKS),
            ("/login", LOGIN),
            ("/account", ACCOUNT),
            ("/invoices/1", INV1),
            ("/invoices/2", INV2),
        ],
        vec![],
        Some(a),
    )
    .unwrap();
    let mut s = site.open_session(SimClock::new());
    s.login("alice", "a-pw").unwrap();
    s.wait(1001).unwrap();
    assert_eq!(s.user(), None);
    assert_eq!(s.fetch("/account").unwrap().final_path, "/login");
}

#[test]
fn invalid_models_are_rejected() {
    let e = SimSite::from_pages("x", &[("/", r#"<a href="/missing">m</a>"#)], vec![], None).unwrap_err();
    assert!(matches!(e, SimError::InvalidModel(_)), "{e}");
    let mut f = fault(FaultKind::ElementDelay, "/");
    f.selector = Some("#nothing".into());
    f.magnitude = Some(10);
    assert!(SimSite::from_pages("x", &[("/", HOME_NO_LINKS)], vec![f], None).is_err());
    let f = fault(FaultKind::RouteChangeDelay, "/");
    assert!(SimSite::from_pages("x", &[("/", HOME_NO_LINKS)], vec![f], None).is_err());
}

const HOME_NO_LINKS: &str = "<html><body><h1>x</h1></body></html>";

#[test]
fn sessions_are_independent_and_deterministic() {
    let run = || {
        let site = site(vec![fault(FaultKind::DuplicateNavLinks, "/")]);
        let mut a = site.open_session(SimClock::new());
        let mut b = site.open_session(SimClock::new());
        a.navigate("/contact").unwrap();
        a.fill(&sel("input[name='email']"), "x@y.test").unwrap();
        b.navigate("/").unwrap();
        assert_eq!(b.path(), "/");
        assert_eq!(a.path(), "/contact");
        let _ = a.click(&sel("button"));
        (a.trace().to_vec(), a.page_source().unwrap(), b.page_source().unwrap(), a.session_token().unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn stale_handles_after_navigation() {
    let site = site(vec![]);
    let mut s = site.open_session(SimClock::new());
    s.navigate("/").unwrap();
    let node = s.find(&sel("h1")).unwrap()[0];
    let g = s.generation();
    s.navigate("/contact").unwrap();
    assert_eq!(s.element_text(node, g).unwrap_err(), BrowserError::StaleElement);
    s.kill();
    assert_eq!(s.navigate("/").unwrap_err(), BrowserError::SessionDead);
}
