//! Arena-backed DOM used by the scraper and the simulated browser.
//!
//! HTML parsing is delegated to html5ever (through `scraper`), which applies
//! the standard error-recovery rules; the parsed tree is then copied into a
//! small mutable arena that the rest of the crate can walk and edit.

use std::fmt::Write as _;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementData {
    pub tag: String,
    pub attrs: Vec<(String, String)>,
}

impl ElementData {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.attrs.iter().any(|(k, _)| k == name)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.attr("class").unwrap_or("").split_ascii_whitespace()
    }

    pub fn set_attr(&mut self, name: &str, value: &str) {
        match self.attrs.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.attrs.push((name.to_string(), value.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Root,
    Element(ElementData),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub kind: NodeKind,
}

/// A parsed document. Node 0 is always the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    nodes: Vec<Node>,
}

const RAW_TEXT: &[&str] = &["script", "style", "template", "noscript"];
const VOID: &[&str] =
    &["area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr"];

impl Document {
    pub fn parse(html: &str) -> Self {
        let parsed = scraper::Html::parse_document(html);
        let mut doc = Document { nodes: vec![Node { parent: None, children: Vec::new(), kind: NodeKind::Root }] };
        for child in parsed.tree.root().children() {
            doc.import(child, 0);
        }
        doc
    }

    fn import(&mut self, node: ego_tree_ref::NodeRef<'_>, parent: NodeId) {
        match node.value() {
            scraper::Node::Element(el) => {
                let data = ElementData {
                    tag: el.name().to_ascii_lowercase(),
                    attrs: el.attrs().map(|(k, v)| (k.to_ascii_lowercase(), v.to_string())).collect(),
                };
                let id = self.push(parent, NodeKind::Element(data));
                for child in node.children() {
                    self.import(child, id);
                }
            }
            scraper::Node::Text(t) => {
                self.push(parent, NodeKind::Text(t.to_string()));
            }
            _ => {}
        }
    }

    fn push(&mut self, parent: NodeId, kind: NodeKind) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { parent: Some(parent), children: Vec::new(), kind });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn element(&self, id: NodeId) -> Option<&ElementData> {
        match &self.nodes.get(id)?.kind {
            NodeKind::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn element_mut(&mut self, id: NodeId) -> Option<&mut ElementData> {
        match &mut self.nodes.get_mut(id)?.kind {
            NodeKind::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    /// Ancestors from nearest to farthest, excluding the root.
    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let mut cur = self.nodes[id].parent;
        std::iter::from_fn(move || {
            let p = cur?;
            cur = self.nodes[p].parent;
            if p == 0 {
                None
            } else {
                Some(p)
            }
        })
    }

    /// Pre-order (document order) traversal of the subtree under `id`, `id` included.
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.nodes[n].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// All element nodes in document order.
    pub fn elements(&self) -> Vec<NodeId> {
        self.descendants(0).into_iter().filter(|&n| matches!(self.nodes[n].kind, NodeKind::Element(_))).collect()
    }

    pub fn find_tag(&self, tag: &str) -> Option<NodeId> {
        self.elements().into_iter().find(|&n| self.element(n).is_some_and(|e| e.tag == tag))
    }

    pub fn body(&self) -> Option<NodeId> {
        self.find_tag("body")
    }

    /// Whitespace-normalized text of the subtree, skipping script/style content.
    pub fn text(&self, id: NodeId) -> String {
        let mut raw = String::new();
        self.collect_text(id, &mut raw);
        normalize_text(&raw)
    }

    fn collect_text(&self, id: NodeId, out: &mut String) {
        match &self.nodes[id].kind {
            NodeKind::Text(t) => {
                out.push_str(t);
            }
            NodeKind::Element(e) if RAW_TEXT.contains(&e.tag.as_str()) => {}
            _ => {
                for &c in &self.nodes[id].children {
                    self.collect_text(c, out);
                    out.push(' ');
                }
            }
        }
    }

    /// Deep-copies the subtree rooted at `src` and appends it under `parent`.
    pub fn clone_subtree(&mut self, src: NodeId, parent: NodeId) -> NodeId {
        let kind = self.nodes[src].kind.clone();
        let children = self.nodes[src].children.clone();
        let id = self.push(parent, kind);
        for c in children {
            self.clone_subtree(c, id);
        }
        id
    }

    pub fn append_element(&mut self, parent: NodeId, tag: &str, attrs: &[(&str, &str)]) -> NodeId {
        self.push(
            parent,
            NodeKind::Element(ElementData {
                tag: tag.to_string(),
                attrs: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            }),
        )
    }

    pub fn append_text(&mut self, parent: NodeId, text: &str) -> NodeId {
        self.push(parent, NodeKind::Text(text.to_string()))
    }

    /// Serializes the document back to HTML, omitting subtrees for which
    /// `skip` returns true.
    pub fn to_html_filtered(&self, skip: &dyn Fn(NodeId) -> bool) -> String {
        let mut out = String::new();
        out.push_str("<!DOCTYPE html>");
        for &c in &self.nodes[0].children {
            self.write_html(c, skip, &mut out);
        }
        out
    }

    pub fn to_html(&self) -> String {
        self.to_html_filtered(&|_| false)
    }

    fn write_html(&self, id: NodeId, skip: &dyn Fn(NodeId) -> bool, out: &mut String) {
        if skip(id) {
            return;
        }
        match &self.nodes[id].kind {
            NodeKind::Root => {}
            NodeKind::Text(t) => {
                let raw_parent = self.nodes[id]
                    .parent
                    .and_then(|p| self.element(p))
                    .is_some_and(|e| RAW_TEXT.contains(&e.tag.as_str()));
                if raw_parent {
                    out.push_str(t);
                } else {
                    out.push_str(&escape_text(t));
                }
            }
            NodeKind::Element(e) => {
                let _ = write!(out, "<{}", e.tag);
                for (k, v) in &e.attrs {
                    let _ = write!(out, " {}=\"{}\"", k, escape_attr(v));
                }
                out.push('>');
                if VOID.contains(&e.tag.as_str()) {
                    return;
                }
                for &c in &self.nodes[id].children {
                    self.write_html(c, skip, out);
                }
                let _ = write!(out, "</{}>", e.tag);
            }
        }
    }
}

// scraper re-exports ego_tree node refs through its tree type.
mod ego_tree_ref {
    pub type NodeRef<'a> = ego_tree::NodeRef<'a, scraper::Node>;
}

/// Collapses runs of whitespace to one space and trims. Case is preserved.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    s.replace('&', "&amp;").replace('"', "&quot;").replace('<', "&lt;")
}
