use std::collections::HashMap;
use std::sync::Arc;

use url::Url;

use super::model::{FaultKind, SimSite};
use crate::browser::{ActionResult, Browser, BrowserError, ResultKind};
use crate::clock::{Clock, SimClock};
use crate::page::css::Css;
use crate::page::dom::{normalize_text, Document, NodeId};
use crate::page::{is_visible, same_origin_path};
use crate::script::Selector;

const MAX_REDIRECTS: usize = 8;

/// Outcome of a direct resource fetch made by a security probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub status: u16,
    /// Path actually served after redirects.
    pub final_path: String,
    pub text: String,
}

/// One browser session against a [`SimSite`].
#[derive(Debug)]
pub struct SimSession {
    site: Arc<SimSite>,
    clock: SimClock,
    id: u64,
    path: String,
    status: u16,
    dom: Document,
    generation: u64,
    /// Nodes that are not yet attached, with the time they appear (`None`: never).
    pending: HashMap<NodeId, Option<u64>>,
    values: HashMap<NodeId, String>,
    pending_nav: Option<(String, u64)>,
    user: Option<String>,
    login_at: u64,
    token: String,
    token_seq: u64,
    actions_on_page: u64,
    alive: bool,
    trace: Vec<String>,
}

/// Appends a second, visible copy of every in-site navigation link, the way
/// a responsive layout ships both a desktop and a mobile menu.
pub(crate) fn duplicate_nav(doc: &mut Document, page_url: &str) {
    let Ok(base) = Url::parse(page_url) else {
        return;
    };
    let anchors: Vec<NodeId> = doc
        .elements()
        .into_iter()
        .filter(|&n| {
            let el = doc.element(n).expect("element");
            el.tag == "a" && el.attr("href").and_then(|h| same_origin_path(&base, h)).is_some() && is_visible(doc, n)
        })
        .collect();
    let Some(body) = doc.body() else {
        return;
    };
    if anchors.is_empty() {
        return;
    }
    let nav = doc.append_element(body, "nav", &[("class", "menu-mobile")]);
    for a in anchors {
        doc.clone_subtree(a, nav);
    }
}

impl SimSite {
    pub fn open_session(self: &Arc<Self>, clock: SimClock) -> SimSession {
        let id = self.allocate_session();
        let mut s = SimSession {
            site: Arc::clone(self),
            clock,
            id,
            path: String::new(),
            status: 0,
            dom: Document::parse("<html><body></body></html>"),
            generation: 0,
            pending: HashMap::new(),
            values: HashMap::new(),
            pending_nav: None,
            user: None,
            login_at: 0,
            token: String::new(),
            token_seq: 0,
            actions_on_page: 0,
            alive: true,
            trace: Vec::new(),
        };
        s.rotate_token();
        s
    }
}

impl SimSession {
    pub fn site(&self) -> &Arc<SimSite> {
        &self.site
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    /// Path of the page currently shown.
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn status(&self) -> u16 {
        self.status
    }

    pub fn user(&self) -> Option<&str> {
        self.user.as_deref()
    }

    /// Bumped whenever a new document replaces the current one.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Event log of everything this session did, with virtual timestamps.
    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn document(&self) -> &Document {
        &self.dom
    }

    /// Simulates the browser process dying.
    pub fn kill(&mut self) {
        self.alive = false;
    }

    fn log(&mut self, event: String) {
        self.trace.push(format!("{:>8} {}", self.clock.now_ms(), event));
    }

    fn rotate_token(&mut self) {
        self.token_seq += 1;
        self.token = format!("sid-{}-{}", self.id, self.token_seq);
    }

    fn check_alive(&self) -> Result<(), BrowserError> {
        if self.alive {
            Ok(())
        } else {
            Err(BrowserError::SessionDead)
        }
    }

    /// Applies anything that became due on the virtual clock.
    fn settle(&mut self) -> Result<(), BrowserError> {
        self.check_alive()?;
        if let Some(auth) = &self.site.model.auth {
            if let (Some(ttl), Some(_)) = (auth.session_ttl_ms, &self.user) {
                if self.clock.now_ms().saturating_sub(self.login_at) > ttl {
                    self.user = None;
                    self.log("session expired".into());
                }
            }
        }
        if let Some((target, due)) = self.pending_nav.clone() {
            if self.clock.now_ms() >= due {
                self.pending_nav = None;
                let _ = self.load(&target);
            }
        }
        Ok(())
    }

    fn is_present(&self, node: NodeId) -> bool {
        let now = self.clock.now_ms();
        let attached = |n: NodeId| match self.pending.get(&n) {
            None => true,
            Some(Some(t)) => *t <= now,
            Some(None) => false,
        };
        attached(node) && self.dom.ancestors(node).all(attached)
    }

    fn error_page(&mut self, path: &str, status: u16, title: &str) {
        let html = format!(
            "<html><head><title>{status}</title></head><body><main><h1>{status} {title}</h1></main></body></html>"
        );
        self.dom = Document::parse(&html);
        self.path = path.to_string();
        self.status = status;
        self.reset_page_state();
    }

    fn reset_page_state(&mut self) {
        self.generation += 1;
        self.pending.clear();
        self.values.clear();
        self.pending_nav = None;
        self.actions_on_page = 0;
    }

    fn show(&mut self, path: &str) {
        let site = Arc::clone(&self.site);
        self.dom = site.docs[path].clone();
        self.path = path.to_string();
        self.status = 200;
        self.reset_page_state();
        if site.model.has_fault(FaultKind::DuplicateNavLinks, path) {
            duplicate_nav(&mut self.dom, &site.url_for(path));
        }
        let now = self.clock.now_ms();
        for f in &site.model.faults {
            let delayed = matches!(f.kind, FaultKind::ElementDelay | FaultKind::AsyncContent);
            if !delayed || f.target.as_deref() != Some(path) {
                continue;
            }
            let Some(css) = f.selector.as_deref().and_then(|s| Css::parse(s).ok()) else {
                continue;
            };
            let appear = f.magnitude.map(|ms| now + ms);
            for n in css.select(&self.dom) {
                self.pending.insert(n, appear);
            }
        }
    }

    /// Resolves `target` against the current page; `None` for other origins.
    fn resolve(&self, target: &str) -> Result<String, BrowserError> {
        let base = self.site.origin().join(if self.path.is_empty() { "/" } else { &self.path });
        let base = base.map_err(|e| BrowserError::Protocol(e.to_string()))?;
        same_origin_path(&base, target).ok_or_else(|| BrowserError::NotAPage { url: target.to_string(), status: 0 })
    }

    /// Follows redirects and auth rules for `requested`, then shows the result.
    fn load(&mut self, requested: &str) -> Result<ActionResult, BrowserError> {
        let site = Arc::clone(&self.site);
        let model = &site.model;
        let mut path = requested.to_string();
        let mut redirected_from: Option<String> = None;
        let redirect = |from: &str, redirected_from: &mut Option<String>| {
            redirected_from.get_or_insert_with(|| from.to_string());
        };
        for _ in 0..MAX_REDIRECTS {
            if let Some(auth) = &model.auth {
                if auth.logout_path.as_deref() == Some(path.as_str()) {
                    self.user = None;
                    self.rotate_token();
                    self.log(format!("logout via {path}"));
                    if !site.docs.contains_key(&path) {
                        redirect(&path, &mut redirected_from);
                        path = model.start_path.clone();
                        continue;
                    }
                }
            }
            if let Some(f) = model.faults_of(FaultKind::RedirectOn).find(|f| f.target.as_deref() == Some(path.as_str()))
            {
                redirect(&path, &mut redirected_from);
                path = f.redirect_to.clone().unwrap_or_default();
                continue;
            }
            if !site.docs.contains_key(&path) {
                self.error_page(&path, 404, "Not Found");
                self.log(format!("load {requested} -> 404"));
                return Err(BrowserError::NotAPage { url: site.url_for(&path), status: 404 });
            }
            if let Some(auth) = &model.auth {
                if auth.requires_login(&path)
                    && self.user.is_none()
                    && !model.has_fault(FaultKind::MissingAuthCheck, &path)
                {
                    redirect(&path, &mut redirected_from);
                    path = auth.login_path.clone();
                    continue;
                }
                if let (Some(res), Some(user)) = (auth.resource(&path), self.user.as_deref()) {
                    if res.owner != user && !model.has_fault(FaultKind::IdorExposure, &path) {
                        self.error_page(&path, 403, "Forbidden");
                        self.log(format!("load {requested} -> 403"));
                        return Ok(self.result(ResultKind::Navigated, redirected_from));
                    }
                }
            }
            self.show(&path);
            self.log(format!("load {requested} -> {path} 200"));
            return Ok(self.result(ResultKind::Navigated, redirected_from));
        }
        Err(BrowserError::NotAPage { url: site.url_for(requested), status: 310 })
    }

    fn result(&self, kind: ResultKind, redirected_from: Option<String>) -> ActionResult {
        ActionResult { kind, url: self.site.url_for(&self.path), status: Some(self.status), redirected_from }
    }

    /// Present elements matching `sel`, in document order.
    pub fn find(&mut self, sel: &Selector) -> Result<Vec<NodeId>, BrowserError> {
        self.settle()?;
        let css = sel.compile().map_err(|e| BrowserError::InvalidSelector(e.to_string()))?;
        let hint = sel.text_hint.as_deref().map(normalize_text);
        Ok(self
            .dom
            .elements()
            .into_iter()
            .filter(|&n| css.matches(&self.dom, n) && self.is_present(n))
            .filter(|&n| hint.as_deref().is_none_or(|h| self.dom.text(n).contains(h)))
            .collect())
    }

    fn find_unique(&mut self, sel: &Selector) -> Result<NodeId, BrowserError> {
        let found = self.find(sel)?;
        match found.as_slice() {
            [n] => Ok(*n),
            [] => Err(BrowserError::ElementNotFound { selector: sel.to_string() }),
            _ => Err(BrowserError::AmbiguousSelector { selector: sel.to_string(), count: found.len() }),
        }
    }

    fn check_node(&self, node: NodeId, generation: u64) -> Result<(), BrowserError> {
        self.check_alive()?;
        if generation != self.generation || !self.is_present(node) || self.dom.element(node).is_none() {
            return Err(BrowserError::StaleElement);
        }
        Ok(())
    }

    fn describe(&self, node: NodeId) -> String {
        let el = self.dom.element(node).expect("element");
        match el.attr("id") {
            Some(id) => format!("{}#{id}", el.tag),
            None => el.tag.clone(),
        }
    }

    /// Counts an interaction on the current page; a `modal_reset` fault
    /// wipes every filled value once its count is reached.
    fn tick_page_action(&mut self) {
        self.actions_on_page += 1;
        let path = self.path.clone();
        let reset_at = self
            .site
            .model
            .faults_of(FaultKind::ModalReset)
            .find(|f| f.target.as_deref() == Some(path.as_str()))
            .and_then(|f| f.magnitude);
        if reset_at == Some(self.actions_on_page) {
            self.values.clear();
            self.log(format!("modal reset on {path}"));
        }
    }

    /// Starts navigation from the current page, honoring `route_change_delay`.
    fn begin_navigation(&mut self, target: String, kind: ResultKind) -> Result<ActionResult, BrowserError> {
        let delay = self
            .site
            .model
            .faults_of(FaultKind::RouteChangeDelay)
            .find(|f| f.target.as_deref() == Some(self.path.as_str()))
            .and_then(|f| f.magnitude);
        if let Some(ms) = delay {
            self.pending_nav = Some((target.clone(), self.clock.now_ms() + ms));
            self.log(format!("navigation to {target} deferred {ms}ms"));
            return Ok(self.result(kind, None));
        }
        let mut r = self.load(&target)?;
        r.kind = kind;
        Ok(r)
    }

    pub fn click_element(&mut self, node: NodeId, generation: u64) -> Result<ActionResult, BrowserError> {
        self.settle()?;
        self.check_node(node, generation)?;
        let desc = self.describe(node);
        if !is_visible(&self.dom, node) {
            return Err(BrowserError::NotInteractable { selector: desc });
        }
        self.log(format!("click {desc}"));
        self.tick_page_action();
        let el = self.dom.element(node).expect("element").clone();
        if el.tag == "a" {
            if let Some(href) = el.attr("href") {
                if href.starts_with('#') {
                    return Ok(self.result(ResultKind::Clicked, None));
                }
                let target = self.resolve(href)?;
                return self.begin_navigation(target, ResultKind::Clicked);
            }
        }
        let is_submit = match el.tag.as_str() {
            "button" => !matches!(el.attr("type"), Some("button") | Some("reset")),
            "input" => matches!(el.attr("type"), Some("submit") | Some("image")),
            _ => false,
        };
        if is_submit && self.form_of(node).is_some() {
            let mut r = self.submit_element_inner(node)?;
            r.kind = ResultKind::Clicked;
            return Ok(r);
        }
        Ok(self.result(ResultKind::Clicked, None))
    }

    pub fn fill_element(&mut self, node: NodeId, generation: u64, value: &str) -> Result<ActionResult, BrowserError> {
        self.settle()?;
        self.check_node(node, generation)?;
        let desc = self.describe(node);
        let el = self.dom.element(node).expect("element");
        if !matches!(el.tag.as_str(), "input" | "textarea" | "select") {
            return Err(BrowserError::NotInteractable { selector: desc });
        }
        if el.has_attr("readonly") || el.has_attr("disabled") {
            return Err(BrowserError::Readonly { selector: desc });
        }
        if !is_visible(&self.dom, node) {
            return Err(BrowserError::NotInteractable { selector: desc });
        }
        self.values.insert(node, value.to_string());
        self.log(format!("fill {desc}"));
        self.tick_page_action();
        Ok(self.result(ResultKind::Filled, None))
    }

    pub fn clear_element(&mut self, node: NodeId, generation: u64) -> Result<(), BrowserError> {
        self.fill_element(node, generation, "").map(|_| ())
    }

    pub fn submit_element(&mut self, node: NodeId, generation: u64) -> Result<ActionResult, BrowserError> {
        self.settle()?;
        self.check_node(node, generation)?;
        self.log(format!("submit {}", self.describe(node)));
        self.tick_page_action();
        self.submit_element_inner(node)
    }

    pub fn element_text(&mut self, node: NodeId, generation: u64) -> Result<String, BrowserError> {
        self.settle()?;
        self.check_node(node, generation)?;
        if let Some(v) = self.values.get(&node) {
            return Ok(v.clone());
        }
        Ok(self.dom.text(node))
    }

    pub fn element_displayed(&mut self, node: NodeId, generation: u64) -> Result<bool, BrowserError> {
        self.settle()?;
        self.check_node(node, generation)?;
        Ok(is_visible(&self.dom, node))
    }

    fn form_of(&self, node: NodeId) -> Option<NodeId> {
        std::iter::once(node)
            .chain(self.dom.ancestors(node))
            .find(|&n| self.dom.element(n).is_some_and(|e| e.tag == "form"))
    }

    fn field_value(&self, node: NodeId) -> String {
        self.values
            .get(&node)
            .cloned()
            .or_else(|| self.dom.element(node).and_then(|e| e.attr("value")).map(str::to_string))
            .unwrap_or_default()
    }

    fn named_value(&self, form: NodeId, name: &str) -> String {
        self.dom
            .descendants(form)
            .into_iter()
            .find(|&n| self.dom.element(n).is_some_and(|e| e.attr("name") == Some(name)))
            .map(|n| self.field_value(n))
            .unwrap_or_default()
    }

    fn submit_element_inner(&mut self, node: NodeId) -> Result<ActionResult, BrowserError> {
        let form = self
            .form_of(node)
            .ok_or_else(|| BrowserError::FormValidation(format!("{} is not inside a form", self.describe(node))))?;
        for n in self.dom.descendants(form) {
            let Some(el) = self.dom.element(n) else { continue };
            let field = matches!(el.tag.as_str(), "input" | "textarea" | "select");
            if field && el.has_attr("required") && self.field_value(n).trim().is_empty() {
                let name = el.attr("name").unwrap_or(&el.tag).to_string();
                return Err(BrowserError::FormValidation(format!("required field {name} is empty")));
            }
        }
        let site = Arc::clone(&self.site);
        if let Some(auth) = site.model.auth.as_ref().filter(|a| a.login_path == self.path) {
            let user = self.named_value(form, "username");
            let password = self.named_value(form, "password");
            if !auth.check(&user, &password) {
                self.log(format!("login failed for {user:?}"));
                return Err(BrowserError::BadCredentials);
            }
            self.sign_in(&user);
            let next = auth.after_login.clone().unwrap_or_else(|| site.model.start_path.clone());
            return self.begin_navigation(next, ResultKind::Submitted);
        }
        let action = self.dom.element(form).and_then(|f| f.attr("action")).map(str::to_string);
        match action {
            Some(a) if !a.trim().is_empty() => {
                let target = self.resolve(&a)?;
                self.begin_navigation(target, ResultKind::Submitted)
            }
            _ => Ok(self.result(ResultKind::Submitted, None)),
        }
    }

    fn sign_in(&mut self, user: &str) {
        self.user = Some(user.to_string());
        self.login_at = self.clock.now_ms();
        if !self.site.model.faults_of(FaultKind::SessionFixation).any(|_| true) {
            self.rotate_token();
        }
        self.log(format!("login as {user}"));
    }

    /// Authenticates directly, without going through the login form.
    pub fn login(&mut self, user: &str, password: &str) -> Result<(), BrowserError> {
        self.settle()?;
        let ok = self.site.model.auth.as_ref().is_some_and(|a| a.check(user, password));
        if !ok {
            return Err(BrowserError::BadCredentials);
        }
        self.sign_in(user);
        Ok(())
    }

    pub fn logout(&mut self) {
        self.user = None;
        self.rotate_token();
        self.log("logout".into());
    }

    /// Requests `path` and reports the status and visible text served.
    pub fn fetch(&mut self, path: &str) -> Result<FetchResult, BrowserError> {
        self.settle()?;
        let status = match self.load(path) {
            Ok(r) => r.status.unwrap_or(200),
            Err(BrowserError::NotAPage { status, .. }) => status,
            Err(e) => return Err(e),
        };
        let body = self.dom.body().map(|b| self.dom.text(b)).unwrap_or_default();
        Ok(FetchResult { status, final_path: self.path.clone(), text: body })
    }
}

impl Browser for SimSession {
    fn navigate(&mut self, url: &str) -> Result<ActionResult, BrowserError> {
        self.settle()?;
        let target = self.resolve(url)?;
        self.log(format!("navigate {url}"));
        self.load(&target)
    }

    fn click(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError> {
        let node = self.find_unique(selector)?;
        let g = self.generation;
        self.click_element(node, g)
    }

    fn fill(&mut self, selector: &Selector, value: &str) -> Result<ActionResult, BrowserError> {
        let node = self.find_unique(selector)?;
        let g = self.generation;
        self.fill_element(node, g, value)
    }

    fn submit(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError> {
        let node = self.find_unique(selector)?;
        let g = self.generation;
        self.submit_element(node, g)
    }

    fn count(&mut self, selector: &Selector) -> Result<usize, BrowserError> {
        Ok(self.find(selector)?.len())
    }

    fn read_text(&mut self, selector: &Selector) -> Result<String, BrowserError> {
        let node = self.find_unique(selector)?;
        let g = self.generation;
        self.element_text(node, g)
    }

    fn is_displayed(&mut self, selector: &Selector) -> Result<bool, BrowserError> {
        let node = self.find_unique(selector)?;
        let g = self.generation;
        self.element_displayed(node, g)
    }

    fn current_url(&mut self) -> Result<String, BrowserError> {
        self.settle()?;
        Ok(self.site.url_for(&self.path))
    }

    fn page_source(&mut self) -> Result<String, BrowserError> {
        self.settle()?;
        Ok(self.dom.to_html_filtered(&|n| !self.is_present(n)))
    }

    fn wait(&mut self, ms: u64) -> Result<(), BrowserError> {
        self.check_alive()?;
        self.clock.advance(ms);
        self.log(format!("wait {ms}"));
        self.settle()
    }

    fn session_token(&mut self) -> Result<Option<String>, BrowserError> {
        self.check_alive()?;
        Ok(Some(self.token.clone()))
    }
}
