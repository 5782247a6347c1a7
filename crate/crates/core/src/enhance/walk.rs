//! Static page tracking: which scraped page a script is on at each step.

use url::Url;

use crate::page::dom::NodeId;
use crate::page::{match_selector, same_origin_path, PageContext, SiteContext};
use crate::script::{Action, Step, TestScript};

pub(crate) struct Walker<'a> {
    site: &'a SiteContext,
    base: Option<Url>,
    /// `None` once the script leaves the site or lands somewhere unknowable.
    path: Option<String>,
}

/// Where a step sends the browser, as far as static analysis can tell.
pub(crate) enum Transition {
    Stay,
    To(String),
    Unknown,
}

impl<'a> Walker<'a> {
    pub fn new(site: &'a SiteContext, script: &TestScript) -> Self {
        let base = Url::parse(&script.base_url).ok();
        let path = base.as_ref().map(|b| b.path().to_string());
        Walker { site, base, path }
    }

    pub fn path(&self) -> Option<&str> {
        self.path.as_deref()
    }

    pub fn page(&self) -> Option<&'a PageContext> {
        self.path.as_deref().and_then(|p| self.site.page(p))
    }

    /// Same-origin path of a navigate target, `None` for other origins.
    pub fn navigate_path(&self, url: &str) -> Option<String> {
        let base = self.base.as_ref()?;
        let page_url = match self.page() {
            Some(p) => Url::parse(&p.url).ok()?,
            None => base.clone(),
        };
        same_origin_path(&page_url, url).or_else(|| same_origin_path(base, url))
    }

    pub fn advance(&mut self, step: &Step) {
        match self.transition(step) {
            Transition::Stay => {}
            Transition::To(p) => self.path = Some(p),
            Transition::Unknown => self.path = None,
        }
    }

    pub fn transition(&self, step: &Step) -> Transition {
        match &step.action {
            Action::Navigate { url } => match self.navigate_path(url) {
                Some(p) => Transition::To(p),
                None => Transition::Unknown,
            },
            Action::Click { selector } => {
                let Some(page) = self.page() else {
                    return match literal_href(&selector.css).and_then(|h| self.navigate_path(&h)) {
                        Some(p) => Transition::To(p),
                        None if self.path.is_none() => Transition::Unknown,
                        None => Transition::Stay,
                    };
                };
                let ids = match_selector(page, selector).unwrap_or_default();
                if let Some(route) = common_anchor_route(page, &ids) {
                    return Transition::To(route);
                }
                if ids.len() == 1 {
                    let rec = &page.elements[ids[0] as usize];
                    if is_submit_button(page, rec.node) {
                        return form_target(page, rec.node);
                    }
                }
                Transition::Stay
            }
            Action::Submit { selector } => {
                let Some(page) = self.page() else {
                    return Transition::Unknown;
                };
                match match_selector(page, selector).unwrap_or_default().as_slice() {
                    [id] => form_target(page, page.elements[*id as usize].node),
                    _ => Transition::Unknown,
                }
            }
            _ => Transition::Stay,
        }
    }
}

/// The href of a selector that is literally `a[href='...']`.
pub(crate) fn literal_href(css: &str) -> Option<String> {
    let parsed = crate::page::css::Css::parse(css).ok()?;
    if parsed.compounds.len() != 1 {
        return None;
    }
    let c = &parsed.compounds[0];
    if c.tag.as_deref() != Some("a") || !c.ids.is_empty() || !c.classes.is_empty() || c.attrs.len() != 1 {
        return None;
    }
    let a = &c.attrs[0];
    (a.name == "href" && a.op == crate::page::css::AttrOp::Equals).then(|| a.value.clone())
}

/// The single in-site route every matched element links to, if the matches
/// are all anchors that agree.
pub(crate) fn common_anchor_route(page: &PageContext, ids: &[u32]) -> Option<String> {
    let base = Url::parse(&page.url).ok()?;
    let mut route: Option<String> = None;
    for &id in ids {
        let rec = page.element(id)?;
        if rec.tag != "a" {
            return None;
        }
        let r = rec.attr("href").and_then(|h| same_origin_path(&base, h))?;
        if !page.routes.contains(&r) || route.as_ref().is_some_and(|x| *x != r) {
            return None;
        }
        route = Some(r);
    }
    route
}

pub(crate) fn form_of(page: &PageContext, node: NodeId) -> Option<NodeId> {
    let doc = &page.document;
    std::iter::once(node).chain(doc.ancestors(node)).find(|&n| doc.element(n).is_some_and(|e| e.tag == "form"))
}

pub(crate) fn is_submit_button(page: &PageContext, node: NodeId) -> bool {
    let Some(el) = page.document.element(node) else {
        return false;
    };
    let submit = match el.tag.as_str() {
        "button" => !matches!(el.attr("type"), Some("button") | Some("reset")),
        "input" => matches!(el.attr("type"), Some("submit") | Some("image")),
        _ => false,
    };
    submit && form_of(page, node).is_some()
}

fn form_target(page: &PageContext, node: NodeId) -> Transition {
    let Some(form) = form_of(page, node) else {
        return Transition::Stay;
    };
    let action = page.document.element(form).and_then(|f| f.attr("action"));
    let Ok(base) = Url::parse(&page.url) else {
        return Transition::Unknown;
    };
    match action.filter(|a| !a.trim().is_empty()) {
        Some(a) => match same_origin_path(&base, a) {
            Some(p) => Transition::To(p),
            None => Transition::Unknown,
        },
        // Forms without an action are handled by the server in ways the
        // static view cannot follow (logins redirect, for example).
        None => Transition::Unknown,
    }
}
