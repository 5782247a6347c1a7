use std::collections::{BTreeMap, BTreeSet};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;
use url::Url;

use super::css::{attr_eq, is_ident, Css, CssParseError};
use super::dom::{normalize_text, Document, ElementData, NodeId};
use crate::script::Selector;

/// Ancestry chains are cut to the nearest three landmarks.
pub const MAX_ANCESTRY: usize = 3;

const INTERACTIVE: &[&str] = &["a", "button", "input", "select", "textarea", "form"];
const HEADINGS: &[&str] = &["h1", "h2", "h3", "h4", "h5", "h6"];
const LANDMARK_TAGS: &[&str] = &["nav", "main", "header", "footer", "aside"];
const LANDMARK_ROLES: &[&str] = &["banner", "complementary", "contentinfo", "main", "navigation", "region", "search"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PageError {
    #[error("document has no body content")]
    EmptyDocument,
    #[error("invalid base URL {0:?}")]
    InvalidBaseUrl(String),
    #[error("unknown element id {0}")]
    UnknownElement(u32),
    #[error(transparent)]
    SelectorParse(#[from] CssParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AncestorKind {
    SectionHeading,
    FormLabel,
    AriaLandmark,
    FormElement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AncestorContext {
    pub kind: AncestorKind,
    pub selector_fragment: String,
    pub label_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ElementRecord {
    pub element_id: u32,
    pub tag: String,
    pub attributes: BTreeMap<String, String>,
    pub text: String,
    pub ancestry: Vec<AncestorContext>,
    pub visible: bool,
    pub readonly: bool,
    #[serde(skip)]
    pub node: NodeId,
}

impl ElementRecord {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PageContext {
    pub url: String,
    pub elements: Vec<ElementRecord>,
    pub routes: BTreeSet<String>,
    pub scraped_at: u64,
    #[serde(skip)]
    pub document: Document,
}

impl PartialEq for PageContext {
    /// Equality ignores `scraped_at`.
    fn eq(&self, other: &Self) -> bool {
        self.url == other.url
            && self.elements == other.elements
            && self.routes == other.routes
            && self.document == other.document
    }
}

impl PageContext {
    pub fn path(&self) -> String {
        Url::parse(&self.url).map(|u| u.path().to_string()).unwrap_or_else(|_| "/".into())
    }

    pub fn element(&self, id: u32) -> Option<&ElementRecord> {
        self.elements.get(id as usize).filter(|e| e.element_id == id)
    }

    fn by_node(&self, node: NodeId) -> Option<&ElementRecord> {
        self.elements.binary_search_by_key(&node, |e| e.node).ok().map(|i| &self.elements[i])
    }

    /// Builds a context from an already parsed document.
    pub fn from_document(document: Document, base_url: &str, scraped_at: u64) -> Result<PageContext, PageError> {
        let base = Url::parse(base_url)
            .ok()
            .filter(Url::has_host)
            .ok_or_else(|| PageError::InvalidBaseUrl(base_url.to_string()))?;
        let body = document.body().ok_or(PageError::EmptyDocument)?;
        let has_content =
            document.node(body).children.iter().any(|&c| document.element(c).is_some() || !document.text(c).is_empty());
        if !has_content {
            return Err(PageError::EmptyDocument);
        }

        let mut elements = Vec::new();
        let mut routes = BTreeSet::new();
        for node in document.descendants(body) {
            let Some(el) = document.element(node) else {
                continue;
            };
            if !in_inventory(el) {
                continue;
            }
            if el.tag == "a" {
                if let Some(route) = el.attr("href").and_then(|h| same_origin_path(&base, h)) {
                    routes.insert(route);
                }
            }
            elements.push(ElementRecord {
                element_id: elements.len() as u32,
                tag: el.tag.clone(),
                attributes: el.attrs.iter().cloned().collect(),
                text: document.text(node),
                ancestry: ancestry_of(&document, node),
                visible: is_visible(&document, node),
                readonly: el.has_attr("readonly") || el.has_attr("disabled"),
                node,
            });
        }
        Ok(PageContext { url: base.to_string(), elements, routes, scraped_at, document })
    }
}

/// A set of scraped pages from one site, keyed by path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiteContext {
    pub pages: BTreeMap<String, PageContext>,
}

impl SiteContext {
    pub fn single(ctx: PageContext) -> Self {
        let mut s = SiteContext::default();
        s.insert(ctx);
        s
    }

    pub fn insert(&mut self, ctx: PageContext) {
        self.pages.insert(ctx.path(), ctx);
    }

    pub fn page(&self, path: &str) -> Option<&PageContext> {
        self.pages.get(path)
    }

    /// Routes linked from any scraped page, plus the scraped pages themselves.
    pub fn known_routes(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.pages.keys().cloned().collect();
        for p in self.pages.values() {
            out.extend(p.routes.iter().cloned());
        }
        out
    }
}

impl From<PageContext> for SiteContext {
    fn from(ctx: PageContext) -> Self {
        SiteContext::single(ctx)
    }
}

fn in_inventory(el: &ElementData) -> bool {
    INTERACTIVE.contains(&el.tag.as_str())
        || HEADINGS.contains(&el.tag.as_str())
        || el.has_attr("role")
        || el.has_attr("aria-label")
        || el.has_attr("id")
        || el.has_attr("data-testid")
}

/// Hidden when the element or any ancestor is `display:none`, carries
/// `hidden`, or is `aria-hidden="true"`; inputs of `type=hidden` too.
pub(crate) fn is_visible(doc: &Document, node: NodeId) -> bool {
    let hides = |el: &ElementData| {
        let display_none = el.attr("style").is_some_and(|s| {
            let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            compact.to_ascii_lowercase().contains("display:none")
        });
        display_none || el.has_attr("hidden") || el.attr("aria-hidden").is_some_and(|v| v.eq_ignore_ascii_case("true"))
    };
    let Some(el) = doc.element(node) else {
        return false;
    };
    if el.tag == "input" && el.attr("type").is_some_and(|t| t.eq_ignore_ascii_case("hidden")) {
        return false;
    }
    if hides(el) {
        return false;
    }
    !doc.ancestors(node).any(|a| doc.element(a).is_some_and(hides))
}

pub(crate) fn same_origin_path(base: &Url, href: &str) -> Option<String> {
    let href = href.trim();
    if href.is_empty() || href.starts_with('#') {
        return None;
    }
    let target = base.join(href).ok()?;
    if !matches!(target.scheme(), "http" | "https") || target.origin() != base.origin() {
        return None;
    }
    Some(target.path().to_string())
}

fn ancestry_of(doc: &Document, node: NodeId) -> Vec<AncestorContext> {
    doc.ancestors(node).filter_map(|a| landmark_context(doc, a)).take(MAX_ANCESTRY).collect()
}

fn fragment_for(el: &ElementData, attr_name: Option<&str>) -> String {
    let tag = el.tag.as_str();
    if let Some(name) = attr_name {
        if let Some(v) = el.attr(name) {
            return format!("{tag}{}", attr_eq(name, v));
        }
    }
    match el.attr("id") {
        Some(id) if is_ident(id) => format!("{tag}#{id}"),
        _ => tag.to_string(),
    }
}

fn landmark_context(doc: &Document, node: NodeId) -> Option<AncestorContext> {
    let el = doc.element(node)?;
    let aria_label = el.attr("aria-label").map(normalize_text).filter(|s| !s.is_empty());
    let role = el.attr("role").map(|r| r.trim().to_ascii_lowercase());

    if el.tag == "form" {
        if let Some(label) = aria_label {
            return Some(AncestorContext {
                kind: AncestorKind::FormLabel,
                selector_fragment: fragment_for(el, Some("aria-label")),
                label_text: label,
            });
        }
        let (fragment, label) = if let Some(id) = el.attr("id").filter(|i| is_ident(i)) {
            (format!("form#{id}"), id.to_string())
        } else if let Some(name) = el.attr("name") {
            (format!("form{}", attr_eq("name", name)), name.to_string())
        } else if let Some(action) = el.attr("action") {
            (format!("form{}", attr_eq("action", action)), action.to_string())
        } else {
            ("form".to_string(), "form".to_string())
        };
        return Some(AncestorContext {
            kind: AncestorKind::FormElement,
            selector_fragment: fragment,
            label_text: label,
        });
    }

    let is_landmark_tag = LANDMARK_TAGS.contains(&el.tag.as_str());
    let is_landmark_role = role.as_deref().is_some_and(|r| LANDMARK_ROLES.contains(&r));
    let labelled_region = aria_label.is_some() && matches!(el.tag.as_str(), "section" | "article" | "div");
    if is_landmark_tag || is_landmark_role || labelled_region {
        let fragment = if aria_label.is_some() {
            fragment_for(el, Some("aria-label"))
        } else if el.attr("id").is_some_and(is_ident) {
            fragment_for(el, None)
        } else if is_landmark_role && !is_landmark_tag {
            format!("{}{}", el.tag, attr_eq("role", role.as_deref().unwrap_or_default()))
        } else {
            el.tag.clone()
        };
        let label = aria_label.or(role).unwrap_or_else(|| el.tag.clone());
        return Some(AncestorContext {
            kind: AncestorKind::AriaLandmark,
            selector_fragment: fragment,
            label_text: label,
        });
    }

    if matches!(el.tag.as_str(), "section" | "article") {
        let heading = section_heading(doc, node)?;
        let fragment = if el.attr("id").is_some_and(is_ident) {
            fragment_for(el, None)
        } else {
            fragment_for(el, Some("aria-labelledby"))
        };
        return Some(AncestorContext {
            kind: AncestorKind::SectionHeading,
            selector_fragment: fragment,
            label_text: heading,
        });
    }
    None
}

/// Text of the first heading that belongs to this section (not a nested one).
fn section_heading(doc: &Document, section: NodeId) -> Option<String> {
    doc.descendants(section).into_iter().skip(1).find_map(|n| {
        let el = doc.element(n)?;
        if !HEADINGS.contains(&el.tag.as_str()) {
            return None;
        }
        let owner =
            doc.ancestors(n).find(|&a| doc.element(a).is_some_and(|e| matches!(e.tag.as_str(), "section" | "article")));
        if owner != Some(section) {
            return None;
        }
        Some(doc.text(n)).filter(|t| !t.is_empty())
    })
}

/// Scrapes `html` as served at `base_url`.
pub fn scrape_context(html: &str, base_url: &str) -> Result<PageContext, PageError> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
    PageContext::from_document(Document::parse(html), base_url, now)
}

pub fn element_ancestry(ctx: &PageContext, element_id: u32) -> Result<Vec<AncestorContext>, PageError> {
    ctx.element(element_id).map(|e| e.ancestry.clone()).ok_or(PageError::UnknownElement(element_id))
}

/// Inventory elements matched by `sel`, in document order.
pub fn match_selector(ctx: &PageContext, sel: &Selector) -> Result<Vec<u32>, PageError> {
    let css = sel.compile()?;
    let hint = sel.text_hint.as_deref().map(normalize_text);
    Ok(ctx
        .elements
        .iter()
        .filter(|e| css.matches(&ctx.document, e.node))
        .filter(|e| hint.as_deref().is_none_or(|h| e.text.contains(h)))
        .map(|e| e.element_id)
        .collect())
}

/// Shortest selector from a fixed candidate list that matches exactly `element_id`.
pub fn unique_selector(ctx: &PageContext, element_id: u32) -> Option<Selector> {
    let el = ctx.element(element_id)?;
    let tag = &el.tag;
    let mut candidates: Vec<Selector> = Vec::new();
    if let Some(id) = el.attr("id").filter(|i| is_ident(i)) {
        candidates.push(Selector::css(format!("#{id}")));
    }
    for attr in ["data-testid", "aria-label", "name"] {
        if let Some(v) = el.attr(attr) {
            candidates.push(Selector::css(format!("{tag}{}", attr_eq(attr, v))));
        }
    }
    if tag == "a" {
        if let Some(h) = el.attr("href") {
            candidates.push(Selector::css(format!("a{}", attr_eq("href", h))));
        }
    }
    if let Some(class) = el.attributes.get("class").and_then(|c| c.split_whitespace().find(|c| is_ident(c))) {
        candidates.push(Selector::css(format!("{tag}.{class}")));
    }
    candidates.push(Selector::css(tag.clone()));
    if !el.text.is_empty() {
        candidates.push(Selector::css(tag.clone()).with_text_hint(el.text.clone()));
        for anc in &el.ancestry {
            candidates.push(
                Selector::css(tag.clone()).with_prefix(anc.selector_fragment.clone()).with_text_hint(el.text.clone()),
            );
        }
    }
    candidates.into_iter().find(|s| match_selector(ctx, s).is_ok_and(|m| m == [element_id]))
}

impl PageContext {
    /// Inventory record for the element at `node`, if it is in the inventory.
    pub fn record_for_node(&self, node: NodeId) -> Option<&ElementRecord> {
        self.by_node(node)
    }

    /// Number of inventory elements matched by a compiled selector.
    pub fn count(&self, css: &Css) -> usize {
        self.elements.iter().filter(|e| css.matches(&self.document, e.node)).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "http://shop.test/";

    fn two_forms() -> PageContext {
        scrape_context(
            r#"<html><body>
            <section><h2>Cart</h2>
              <form aria-label="checkout"><input name="card"><button class="submit">Submit</button></form>
            </section>
            <aside><form id="newsletter"><input name="email"><button class="submit">Submit</button></form></aside>
            <button id="submit-btn">Go</button>
            </body></html>"#,
            BASE,
        )
        .unwrap()
    }

    #[test]
    fn duplicate_links_dedupe_routes_not_elements() {
        let ctx = scrape_context(
            r#"<body><a href="/contact">Contact</a><p>x</p><a href="/contact">Contact</a></body>"#,
            BASE,
        )
        .unwrap();
        assert_eq!(ctx.routes.iter().collect::<Vec<_>>(), vec!["/contact"]);
        assert_eq!(ctx.elements.iter().filter(|e| e.tag == "a").count(), 2);
    }

    #[test]
    fn page_without_interactive_elements_is_fine() {
        let ctx = scrape_context("<body><p>Just text</p></body>", BASE).unwrap();
        assert!(ctx.elements.is_empty());
        assert!(ctx.routes.is_empty());
    }

    #[test]
    fn empty_body_and_bad_base_are_errors() {
        assert_eq!(scrape_context("<html><body>  </body></html>", BASE).unwrap_err(), PageError::EmptyDocument);
        assert!(matches!(scrape_context("<body><a>x</a></body>", "not a url"), Err(PageError::InvalidBaseUrl(_))));
    }

    #[test]
    fn external_and_fragment_links_are_not_routes() {
        let ctx = scrape_context(
            r##"<body><a href="https://elsewhere.test/x">x</a><a href="#top">t</a>
            <a href="mailto:a@b.c">m</a><a href="http://shop.test/about?x=1">a</a><a href="team">t</a></body>"##,
            "http://shop.test/company/",
        )
        .unwrap();
        assert_eq!(ctx.routes.into_iter().collect::<Vec<_>>(), vec!["/about".to_string(), "/company/team".to_string()]);
    }

    #[test]
    fn ancestry_is_nearest_first() {
        let ctx = two_forms();
        let sel = Selector::css("button.submit");
        let ids = match_selector(&ctx, &sel).unwrap();
        assert_eq!(ids.len(), 2);
        let chain = element_ancestry(&ctx, ids[0]).unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[0].kind, AncestorKind::FormLabel);
        assert_eq!(chain[0].label_text, "checkout");
        assert_eq!(chain[0].selector_fragment, "form[aria-label='checkout']");
        assert_eq!(chain[1].kind, AncestorKind::SectionHeading);
        assert_eq!(chain[1].label_text, "Cart");
        let top = match_selector(&ctx, &Selector::css("#submit-btn")).unwrap();
        assert!(element_ancestry(&ctx, top[0]).unwrap().is_empty());
        assert_eq!(element_ancestry(&ctx, 999), Err(PageError::UnknownElement(999)));
    }

    #[test]
    fn ancestry_truncated_to_three() {
        let ctx = scrape_context(
            r#"<body><main><section aria-label="outer"><nav aria-label="n1">
               <section><h3>Inner</h3><form name="f"><button>B</button></form></section>
               </nav></section></main></body>"#,
            BASE,
        )
        .unwrap();
        let button = match_selector(&ctx, &Selector::css("button")).unwrap()[0];
        let chain = element_ancestry(&ctx, button).unwrap();
        let labels: Vec<_> = chain.iter().map(|c| c.label_text.as_str()).collect();
        assert_eq!(labels, vec!["f", "Inner", "n1"]);
    }

    #[test]
    fn context_prefix_restricts_matches() {
        let ctx = two_forms();
        let plain = match_selector(&ctx, &Selector::css("button.submit")).unwrap();
        let scoped =
            match_selector(&ctx, &Selector::css("button.submit").with_prefix("form[aria-label='checkout']")).unwrap();
        assert_eq!(scoped.len(), 1);
        assert!(scoped.iter().all(|i| plain.contains(i)));
        assert!(match_selector(&ctx, &Selector::css("table.none")).unwrap().is_empty());
        assert!(matches!(match_selector(&ctx, &Selector::css("a >")), Err(PageError::SelectorParse(_))));
    }

    #[test]
    fn visibility_and_readonly() {
        let ctx = scrape_context(
            r#"<body><div style="display: none"><button id="a">A</button></div>
            <button id="b" hidden>B</button><input id="c" type="hidden"><input id="d" readonly>
            <button id="e" aria-hidden="true">E</button><input id="f" disabled><button id="g">G</button></body>"#,
            BASE,
        )
        .unwrap();
        let vis: Vec<bool> = ctx.elements.iter().map(|e| e.visible).collect();
        assert_eq!(vis, vec![false, false, false, true, false, true, true]);
        let ro: Vec<bool> = ctx.elements.iter().map(|e| e.readonly).collect();
        assert_eq!(ro, vec![false, false, false, true, false, true, false]);
    }

    #[test]
    fn unique_selector_prefers_ids_then_attributes() {
        let ctx = two_forms();
        let ids = match_selector(&ctx, &Selector::css("button.submit")).unwrap();
        let s = unique_selector(&ctx, ids[1]).unwrap();
        assert_eq!(match_selector(&ctx, &s).unwrap(), vec![ids[1]]);
        let go = match_selector(&ctx, &Selector::css("#submit-btn")).unwrap()[0];
        assert_eq!(unique_selector(&ctx, go).unwrap().css, "#submit-btn");
    }
}
