//! A fixed action sequence any [`Browser`] backend must answer identically.
//! Run it with [`run`] and compare against [`expected`].

use std::sync::Arc;

use testforge_core::browser::{ActionResult, Browser, BrowserError};
use testforge_core::sim::{AuthSpec, FaultKind, FaultSpec, SimSite, UserSpec};
use testforge_core::Selector;

const NAV: &str = r#"<nav><a href="/">Home</a><a href="/contact">Contact</a><a href="/products">Products</a></nav>"#;

pub fn site() -> Arc<SimSite> {
    let home = format!(
        r#"<html><body>{NAV}<main><h1>Home</h1><p id="hidden" style="display:none">secret</p><div id="late">Loaded</div></main></body></html>"#
    );
    let contact = format!(
        r#"<html><body>{NAV}<main><h1>Contact</h1><form action="/thanks"><input name="email" type="email" required><input name="code" value="X1" readonly><button type="submit">Send</button></form></main></body></html>"#
    );
    let products = format!(r#"<html><body>{NAV}<main><h1>Products</h1><ul><li>Lamp</li></ul></main></body></html>"#);
    let thanks = r#"<html><body><main><h1>Thanks</h1></main></body></html>"#.to_string();
    let login = r#"<html><body><main><form id="login"><input name="username"><input name="password" type="password"><button type="submit">Sign in</button></form></main></body></html>"#.to_string();
    let faults = vec![
        FaultSpec {
            kind: FaultKind::DuplicateNavLinks,
            target: Some("/products".into()),
            selector: None,
            magnitude: None,
            redirect_to: None,
        },
        FaultSpec {
            kind: FaultKind::ElementDelay,
            target: Some("/".into()),
            selector: Some("#late".into()),
            magnitude: Some(800),
            redirect_to: None,
        },
    ];
    let auth = AuthSpec {
        login_path: "/login".into(),
        logout_path: None,
        after_login: Some("/".into()),
        users: vec![UserSpec { name: "ana".into(), password: "pw-ana".into() }],
        protected: vec![],
        resources: vec![],
        session_ttl_ms: None,
    };
    SimSite::from_pages(
        "contract",
        &[("/", &home), ("/contact", &contact), ("/products", &products), ("/thanks", &thanks), ("/login", &login)],
        faults,
        Some(auth),
    )
    .unwrap()
}

fn show(r: Result<ActionResult, BrowserError>) -> String {
    match r {
        Ok(a) => format!("{:?} {}", a.kind, a.url),
        Err(e) => format!("error {:?}", e.kind()),
    }
}

fn show_val<T: std::fmt::Debug>(r: Result<T, BrowserError>) -> String {
    match r {
        Ok(v) => format!("{v:?}"),
        Err(e) => format!("error {:?}", e.kind()),
    }
}

pub fn run(b: &mut dyn Browser, origin: &str) -> Vec<String> {
    let css = Selector::css;
    let mut out = Vec::new();
    out.push(show(b.navigate(&format!("{origin}/"))));
    out.push(show_val(b.count(&css("#late"))));
    b.wait(800).unwrap();
    out.push(show_val(b.count(&css("#late"))));
    out.push(show_val(b.is_displayed(&css("#hidden"))));
    out.push(show_val(b.read_text(&css("main h1"))));
    out.push(show(b.click(&css("#missing"))));
    out.push(show(b.click(&css("a").with_text_hint("Products"))));
    out.push(show(b.click(&css("a[href='/contact']"))));
    out.push(show(b.navigate("/contact")));
    out.push(show(b.fill(&css("input[name=code]"), "Z9")));
    out.push(show(b.submit(&css("form"))));
    out.push(show(b.fill(&css("input[name=email]"), "ana@example.com")));
    out.push(show(b.submit(&css("input[name=email]"))));
    out.push(show_val(b.read_text(&css("h1"))));
    out.push(show_val(b.current_url()));
    out.push(show_val(b.page_source().map(|s| s.contains("<h1>Thanks</h1>"))));
    let before = b.session_token().unwrap();
    out.push(show(b.navigate("/login")));
    out.push(show(b.fill(&css("input[name=username]"), "ana")));
    out.push(show(b.fill(&css("input[name=password]"), "pw-ana")));
    out.push(show(b.click(&css("#login button"))));
    let after = b.session_token().unwrap();
    out.push(format!("token present {} rotated {}", before.is_some(), before != after));
    out
}

pub fn expected(origin: &str) -> Vec<String> {
    let at = |p: &str| format!("{origin}{p}");
    vec![
        format!("Navigated {}", at("/")),
        "0".into(),
        "1".into(),
        "false".into(),
        "\"Home\"".into(),
        "error ElementNotFound".into(),
        format!("Clicked {}", at("/products")),
        "error AmbiguousSelector".into(),
        format!("Navigated {}", at("/contact")),
        "error Readonly".into(),
        "error FormValidation".into(),
        format!("Filled {}", at("/contact")),
        format!("Submitted {}", at("/thanks")),
        "\"Thanks\"".into(),
        format!("{:?}", at("/thanks")),
        "true".into(),
        format!("Navigated {}", at("/login")),
        format!("Filled {}", at("/login")),
        format!("Filled {}", at("/login")),
        format!("Clicked {}", at("/")),
        "token present true rotated true".into(),
    ]
}
