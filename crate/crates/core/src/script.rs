//! Test-script model and its canonical JSON form (`"schema": "testforge/1"`).
//!
//! A script is a linear list of steps. Parsing is strict: unknown fields are
//! rejected, and every structural invariant is re-checked after decoding so
//! that anything accepted here can be executed without further validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::json;
use crate::page::css::{Css, CssParseError};

pub const SCHEMA_TAG: &str = "testforge/1";

/// Metadata key holding the selector a step had before a strategy rewrote it.
pub const META_ORIGINAL_SELECTOR: &str = "original_selector";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selector {
    pub css: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_hint: Option<String>,
}

impl Selector {
    pub fn css(css: impl Into<String>) -> Self {
        Selector { css: css.into(), context_prefix: None, text_hint: None }
    }

    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.context_prefix = Some(prefix.into());
        self
    }

    pub fn with_text_hint(mut self, hint: impl Into<String>) -> Self {
        self.text_hint = Some(hint.into());
        self
    }

    /// Parses `css` and `context_prefix` into one descendant chain.
    pub fn compile(&self) -> Result<Css, CssParseError> {
        let css = Css::parse(&self.css)?;
        match &self.context_prefix {
            Some(p) => Ok(css.within(&Css::parse(p)?)),
            None => Ok(css),
        }
    }

    /// The CSS actually sent to a browser: prefix and selector joined by a
    /// descendant combinator. The text hint is not representable in CSS.
    pub fn combined_css(&self) -> String {
        match &self.context_prefix {
            Some(p) => format!("{} {}", p, self.css),
            None => self.css.clone(),
        }
    }

    /// Tag of the rightmost compound, if the selector names one.
    pub fn target_tag(&self) -> Option<String> {
        Css::parse(&self.css).ok()?.last().tag.clone()
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.combined_css())?;
        if let Some(h) = &self.text_hint {
            write!(f, " (text {h:?})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Navigate,
    Click,
    Fill,
    AssertText,
    AssertVisible,
    Wait,
    Submit,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Navigate => "navigate",
            ActionKind::Click => "click",
            ActionKind::Fill => "fill",
            ActionKind::AssertText => "assert_text",
            ActionKind::AssertVisible => "assert_visible",
            ActionKind::Wait => "wait",
            ActionKind::Submit => "submit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Navigate { url: String },
    Click { selector: Selector },
    Fill { selector: Selector, value: String },
    AssertText { selector: Selector, text: String },
    AssertVisible { selector: Selector },
    Wait { ms: u64 },
    Submit { selector: Selector },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Navigate { .. } => ActionKind::Navigate,
            Action::Click { .. } => ActionKind::Click,
            Action::Fill { .. } => ActionKind::Fill,
            Action::AssertText { .. } => ActionKind::AssertText,
            Action::AssertVisible { .. } => ActionKind::AssertVisible,
            Action::Wait { .. } => ActionKind::Wait,
            Action::Submit { .. } => ActionKind::Submit,
        }
    }

    pub fn selector(&self) -> Option<&Selector> {
        match self {
            Action::Click { selector }
            | Action::Fill { selector, .. }
            | Action::AssertText { selector, .. }
            | Action::AssertVisible { selector }
            | Action::Submit { selector } => Some(selector),
            Action::Navigate { .. } | Action::Wait { .. } => None,
        }
    }

    pub fn selector_mut(&mut self) -> Option<&mut Selector> {
        match self {
            Action::Click { selector }
            | Action::Fill { selector, .. }
            | Action::AssertText { selector, .. }
            | Action::AssertVisible { selector }
            | Action::Submit { selector } => Some(selector),
            Action::Navigate { .. } | Action::Wait { .. } => None,
        }
    }

    pub fn is_assert(&self) -> bool {
        matches!(self, Action::AssertText { .. } | Action::AssertVisible { .. })
    }

    /// What a failure record should name as "attempted": the selector, or
    /// the URL for navigations.
    pub fn target_description(&self) -> String {
        match self {
            Action::Navigate { url } => url.clone(),
            Action::Wait { ms } => format!("wait {ms}ms"),
            other => other.selector().map(|s| s.to_string()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub index: u32,
    pub action: Action,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Step {
    pub fn new(index: u32, action: Action) -> Self {
        Step { index, action, metadata: BTreeMap::new() }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    Enhanced,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestScript {
    pub id: String,
    pub base_url: String,
    pub steps: Vec<Step>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptDocument {
    schema: String,
    id: String,
    base_url: String,
    steps: Vec<Step>,
    provenance: Provenance,
}

impl TestScript {
    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<(), ScriptError> {
        let inv = |m: String| Err(ScriptError::Invariant(m));
        if self.id.trim().is_empty() {
            return inv("script id is empty".into());
        }
        if let Err(e) = parse_absolute(&self.base_url) {
            return inv(format!("base_url {:?}: {e}", self.base_url));
        }
        if self.steps.is_empty() {
            return inv("script has no steps".into());
        }
        for (pos, step) in self.steps.iter().enumerate() {
            let expected = pos as u32 + 1;
            if step.index != expected {
                return inv(format!("step index {} found where {} was expected", step.index, expected));
            }
            validate_action(&step.action).map_err(|m| ScriptError::Invariant(format!("step {}: {m}", step.index)))?;
        }
        Ok(())
    }

    /// Rewrites step indices to 1..=n in list order.
    pub fn renumber(&mut self) {
        for (i, s) in self.steps.iter_mut().enumerate() {
            s.index = i as u32 + 1;
        }
    }

    /// Resolves a navigate target against `base_url`.
    pub fn resolve_url(&self, target: &str) -> Option<Url> {
        Url::parse(&self.base_url).ok()?.join(target).ok()
    }
}

fn parse_absolute(s: &str) -> Result<Url, String> {
    let u = Url::parse(s).map_err(|e| e.to_string())?;
    if !u.has_host() {
        return Err("URL has no host".into());
    }
    Ok(u)
}

fn validate_action(action: &Action) -> Result<(), String> {
    match action {
        Action::Navigate { url } => {
            if url.starts_with('/') && !url.starts_with("//") {
                Ok(())
            } else {
                parse_absolute(url)
                    .map(|_| ())
                    .map_err(|e| format!("navigate target {url:?} is neither absolute nor root-relative ({e})"))
            }
        }
        Action::Wait { ms } => {
            if *ms == 0 {
                Err("wait duration must be positive".into())
            } else {
                Ok(())
            }
        }
        other => {
            let sel = other.selector().expect("selector-bearing action");
            if sel.css.trim().is_empty() {
                return Err("selector is empty".into());
            }
            Css::parse(&sel.css).map_err(|e| e.to_string())?;
            if let Some(p) = &sel.context_prefix {
                Css::parse(p).map_err(|e| format!("context prefix: {e}"))?;
            }
            Ok(())
        }
    }
}

/// Decodes a canonical script document and validates it.
pub fn parse_script(text: &str) -> Result<TestScript, ScriptError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ScriptDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScriptError::Schema {
            path: if path.is_empty() { "$".into() } else { format!("$.{path}") },
            message: e.into_inner().to_string(),
        }
    })?;
    if doc.schema != SCHEMA_TAG {
        return Err(ScriptError::Schema {
            path: "$.schema".into(),
            message: format!("unsupported schema {:?}, expected {SCHEMA_TAG:?}", doc.schema),
        });
    }
    let script = TestScript { id: doc.id, base_url: doc.base_url, steps: doc.steps, provenance: doc.provenance };
    script.validate()?;
    Ok(script)
}

impl TestScript {
    fn document(&self) -> ScriptDocument {
        ScriptDocument {
            schema: SCHEMA_TAG.to_string(),
            id: self.id.clone(),
            base_url: self.base_url.clone(),
            steps: self.steps.clone(),
            provenance: self.provenance,
        }
    }

    /// The script document as a JSON value (same shape as the canonical text).
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self.document()).expect("script serializes")
    }
}

/// Embeds as the full script document; decoding validates like [`parse_script`].
impl Serialize for TestScript {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TestScript {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        parse_script(&value.to_string()).map_err(serde::de::Error::custom)
    }
}

/// Canonical rendering: sorted keys, two-space indentation, trailing newline.
pub fn serialize_script(script: &TestScript) -> String {
    json::to_canonical_pretty(&script.document())
}
