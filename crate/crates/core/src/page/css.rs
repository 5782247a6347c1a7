//! The CSS selector subset understood throughout the crate: type, universal,
//! class, id and attribute selectors joined by the descendant combinator.
//! Child/sibling combinators, pseudo-classes and selector lists are rejected.

use std::fmt;

use thiserror::Error;

use super::dom::{Document, ElementData, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid selector {input:?} at byte {pos}: {reason}")]
pub struct CssParseError {
    pub input: String,
    pub pos: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrOp {
    /// `[a]`
    Exists,
    /// `[a=v]`
    Equals,
    /// `[a~=v]`
    Includes,
    /// `[a^=v]`
    Prefix,
    /// `[a$=v]`
    Suffix,
    /// `[a*=v]`
    Substring,
}

impl AttrOp {
    fn token(self) -> &'static str {
        match self {
            AttrOp::Exists => "",
            AttrOp::Equals => "=",
            AttrOp::Includes => "~=",
            AttrOp::Prefix => "^=",
            AttrOp::Suffix => "$=",
            AttrOp::Substring => "*=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrSelector {
    pub name: String,
    pub op: AttrOp,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Compound {
    /// Lowercased tag name; `None` for `*` or an omitted type.
    pub tag: Option<String>,
    pub universal: bool,
    pub ids: Vec<String>,
    pub classes: Vec<String>,
    pub attrs: Vec<AttrSelector>,
}

/// A parsed selector: compounds in left-to-right order, each one a
/// descendant of the previous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Css {
    pub compounds: Vec<Compound>,
}

impl Css {
    pub fn parse(input: &str) -> Result<Css, CssParseError> {
        Parser { src: input, pos: 0 }.parse()
    }

    pub fn last(&self) -> &Compound {
        self.compounds.last().expect("parsed selectors are non-empty")
    }

    /// Prepends `prefix` so that this selector only matches inside it.
    pub fn within(&self, prefix: &Css) -> Css {
        let mut compounds = prefix.compounds.clone();
        compounds.extend(self.compounds.iter().cloned());
        Css { compounds }
    }

    pub fn matches(&self, doc: &Document, node: NodeId) -> bool {
        let Some(el) = doc.element(node) else {
            return false;
        };
        let (last, rest) = self.compounds.split_last().expect("non-empty");
        if !last.matches(el) {
            return false;
        }
        // Descendant-only chains can be matched greedily right to left.
        let mut remaining = rest.iter().rev().peekable();
        for anc in doc.ancestors(node) {
            let Some(want) = remaining.peek() else { break };
            if doc.element(anc).is_some_and(|e| want.matches(e)) {
                remaining.next();
            }
        }
        remaining.peek().is_none()
    }

    /// All matching element nodes in document order.
    pub fn select(&self, doc: &Document) -> Vec<NodeId> {
        doc.elements().into_iter().filter(|&n| self.matches(doc, n)).collect()
    }

    /// Same selector with every id and attribute value replaced by `*`.
    /// Used to group failures by selector shape.
    pub fn shape(&self) -> String {
        let mut c = self.clone();
        for comp in &mut c.compounds {
            for id in &mut comp.ids {
                *id = "*".into();
            }
            for a in &mut comp.attrs {
                if a.op != AttrOp::Exists {
                    a.value = "*".into();
                }
            }
        }
        c.to_string()
    }
}

impl Compound {
    pub fn matches(&self, el: &ElementData) -> bool {
        if let Some(tag) = &self.tag {
            if &el.tag != tag {
                return false;
            }
        }
        if !self.ids.iter().all(|id| el.attr("id") == Some(id.as_str())) {
            return false;
        }
        if !self.classes.iter().all(|c| el.classes().any(|x| x == c)) {
            return false;
        }
        self.attrs.iter().all(|a| {
            let Some(v) = el.attr(&a.name) else {
                return false;
            };
            match a.op {
                AttrOp::Exists => true,
                AttrOp::Equals => v == a.value,
                AttrOp::Includes => v.split_ascii_whitespace().any(|w| w == a.value),
                AttrOp::Prefix => !a.value.is_empty() && v.starts_with(&a.value),
                AttrOp::Suffix => !a.value.is_empty() && v.ends_with(&a.value),
                AttrOp::Substring => !a.value.is_empty() && v.contains(&a.value),
            }
        })
    }
}

impl fmt::Display for Compound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.tag {
            Some(t) => f.write_str(t)?,
            None if self.universal => f.write_str("*")?,
            None => {}
        }
        for id in &self.ids {
            write!(f, "#{id}")?;
        }
        for c in &self.classes {
            write!(f, ".{c}")?;
        }
        for a in &self.attrs {
            if a.op == AttrOp::Exists {
                write!(f, "[{}]", a.name)?;
            } else {
                write!(f, "[{}{}'{}']", a.name, a.op.token(), quote(&a.value))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Css {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.compounds.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Escapes a value for use inside single quotes.
pub fn quote(value: &str) -> String {
    value.replace('\\', "\\\\").replace('\'', "\\'")
}

/// Renders `[name='value']` for an attribute equality test.
pub fn attr_eq(name: &str, value: &str) -> String {
    format!("[{}='{}']", name, quote(value))
}

/// True when `s` can be written bare after `#` or `.`.
pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '-' || !c.is_ascii() => {}
        _ => return false,
    }
    if s == "-" {
        return false;
    }
    chars.all(is_ident_char)
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || !c.is_ascii()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, reason: impl Into<String>) -> CssParseError {
        CssParseError { input: self.src.to_string(), pos: self.pos, reason: reason.into() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
        self.pos != start
    }

    fn parse(mut self) -> Result<Css, CssParseError> {
        let mut compounds = Vec::new();
        self.skip_ws();
        loop {
            compounds.push(self.compound()?);
            let had_ws = self.skip_ws();
            match self.peek() {
                None => break,
                Some(c) if had_ws && c != '>' && c != '+' && c != '~' && c != ',' => continue,
                Some(c) => return Err(self.err(format!("unsupported token {c:?}"))),
            }
        }
        if compounds.is_empty() {
            return Err(self.err("empty selector"));
        }
        Ok(Css { compounds })
    }

    fn ident(&mut self) -> Result<String, CssParseError> {
        let start = self.pos;
        while self.peek().is_some_and(is_ident_char) {
            self.bump();
        }
        let s = &self.src[start..self.pos];
        if !is_ident(s) {
            return Err(self.err("expected identifier"));
        }
        Ok(s.to_string())
    }

    fn compound(&mut self) -> Result<Compound, CssParseError> {
        let mut c = Compound::default();
        let start = self.pos;
        match self.peek() {
            Some('*') => {
                self.bump();
                c.universal = true;
            }
            Some(ch) if ch.is_ascii_alphabetic() => {
                c.tag = Some(self.ident()?.to_ascii_lowercase());
            }
            _ => {}
        }
        loop {
            match self.peek() {
                Some('#') => {
                    self.bump();
                    c.ids.push(self.ident()?);
                }
                Some('.') => {
                    self.bump();
                    c.classes.push(self.ident()?);
                }
                Some('[') => {
                    self.bump();
                    c.attrs.push(self.attr()?);
                }
                Some(':') => return Err(self.err("pseudo-classes are not supported")),
                _ => break,
            }
        }
        if self.pos == start {
            return Err(self.err("expected a compound selector"));
        }
        Ok(c)
    }

    fn attr(&mut self) -> Result<AttrSelector, CssParseError> {
        self.skip_ws();
        let name = self.ident()?.to_ascii_lowercase();
        self.skip_ws();
        let op = match self.peek() {
            Some(']') => {
                self.bump();
                return Ok(AttrSelector { name, op: AttrOp::Exists, value: String::new() });
            }
            Some('=') => {
                self.bump();
                AttrOp::Equals
            }
            Some(c @ ('~' | '^' | '$' | '*')) => {
                self.bump();
                if self.bump() != Some('=') {
                    return Err(self.err("expected '=' in attribute operator"));
                }
                match c {
                    '~' => AttrOp::Includes,
                    '^' => AttrOp::Prefix,
                    '$' => AttrOp::Suffix,
                    _ => AttrOp::Substring,
                }
            }
            _ => return Err(self.err("expected ']' or attribute operator")),
        };
        self.skip_ws();
        let value = match self.peek() {
            Some(q @ ('\'' | '"')) => {
                self.bump();
                let mut v = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err("unterminated string")),
                        Some('\\') => match self.bump() {
                            Some(c) => v.push(c),
                            None => return Err(self.err("dangling escape")),
                        },
                        Some(c) if c == q => break,
                        Some(c) => v.push(c),
                    }
                }
                v
            }
            _ => self.ident()?,
        };
        self.skip_ws();
        if self.bump() != Some(']') {
            return Err(self.err("expected ']'"));
        }
        Ok(AttrSelector { name, op, value })
    }
}
