use serde::{Deserialize, Serialize};

use crate::page::{unique_selector, SiteContext};
use crate::script::Selector;

const MAX_TEXT: usize = 80;

/// What a provider sees of the site: routes plus a compact element list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDigest {
    pub routes: Vec<String>,
    pub pages: Vec<PageDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageDigest {
    pub path: String,
    pub elements: Vec<ElementDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDigest {
    pub id: u32,
    pub tag: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ancestry: Vec<String>,
    pub visible: bool,
    pub readonly: bool,
}

fn clip(s: &str) -> String {
    match s.char_indices().nth(MAX_TEXT) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

impl ContextDigest {
    pub fn from_site(site: &SiteContext) -> Self {
        let pages = site
            .pages
            .iter()
            .map(|(path, page)| PageDigest {
                path: path.clone(),
                elements: page
                    .elements
                    .iter()
                    .map(|e| ElementDigest {
                        id: e.element_id,
                        tag: e.tag.clone(),
                        text: clip(&e.text),
                        selector: unique_selector(page, e.element_id),
                        ancestry: e.ancestry.iter().map(|a| a.selector_fragment.clone()).collect(),
                        visible: e.visible,
                        readonly: e.readonly,
                    })
                    .collect(),
            })
            .collect();
        ContextDigest { routes: site.known_routes().into_iter().collect(), pages }
    }
}
