//! Page scraping: turns HTML into an inventory of actionable elements with
//! their landmark ancestry, plus the set of same-origin routes the page links to.

pub mod css;
pub mod dom;

mod context;

pub use context::{
    element_ancestry, match_selector, scrape_context, unique_selector, AncestorContext, AncestorKind, ElementRecord,
    PageContext, PageError, SiteContext, MAX_ANCESTRY,
};
pub(crate) use context::{is_visible, same_origin_path};
