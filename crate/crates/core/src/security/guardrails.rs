use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The bundled rule table.
pub const BUILTIN_RULES: &str = include_str!("../../data/guardrails.v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardrailCategory {
    ScriptTag,
    JsUri,
    EventHandler,
    DataUri,
    TemplateExpression,
    SqlMeta,
}

impl GuardrailCategory {
    pub const ALL: [GuardrailCategory; 6] = [
        GuardrailCategory::ScriptTag,
        GuardrailCategory::JsUri,
        GuardrailCategory::EventHandler,
        GuardrailCategory::DataUri,
        GuardrailCategory::TemplateExpression,
        GuardrailCategory::SqlMeta,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleSpec {
    rule_id: String,
    category: GuardrailCategory,
    pattern: String,
    #[serde(default)]
    description: String,
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    version: u32,
    rules: Vec<RuleSpec>,
}

#[derive(Debug, Clone)]
pub struct GuardrailRule {
    pub rule_id: String,
    pub category: GuardrailCategory,
    pub pattern: Regex,
    pub description: String,
}

#[derive(Debug, Error)]
pub enum GuardrailError {
    #[error("malformed rule file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("rule {rule_id}: {source}")]
    BadPattern { rule_id: String, source: regex::Error },
    #[error("unsupported rule file version {0}")]
    Version(u32),
    #[error("no rule covers category {0:?}")]
    MissingCategory(GuardrailCategory),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum GuardrailVerdict {
    Allow,
    Block { rule_id: String },
}

impl GuardrailVerdict {
    pub fn is_block(&self) -> bool {
        matches!(self, GuardrailVerdict::Block { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Guardrails {
    pub version: u32,
    rules: Vec<GuardrailRule>,
}

impl Guardrails {
    /// Rules shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_RULES).expect("bundled guardrail rules are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, GuardrailError> {
        let file: RuleFile = serde_json::from_str(text)?;
        if file.version != 1 {
            return Err(GuardrailError::Version(file.version));
        }
        let rules = file
            .rules
            .into_iter()
            .map(|r| {
                let pattern = Regex::new(&r.pattern)
                    .map_err(|source| GuardrailError::BadPattern { rule_id: r.rule_id.clone(), source })?;
                Ok(GuardrailRule { rule_id: r.rule_id, category: r.category, pattern, description: r.description })
            })
            .collect::<Result<Vec<_>, GuardrailError>>()?;
        for c in GuardrailCategory::ALL {
            if !rules.iter().any(|r| r.category == c) {
                return Err(GuardrailError::MissingCategory(c));
            }
        }
        Ok(Guardrails { version: file.version, rules })
    }

    pub fn rules(&self) -> &[GuardrailRule] {
        &self.rules
    }

    /// First matching rule in table order blocks the input.
    pub fn validate(&self, input: &str) -> GuardrailVerdict {
        self.rules
            .iter()
            .find(|r| r.pattern.is_match(input))
            .map_or(GuardrailVerdict::Allow, |r| GuardrailVerdict::Block { rule_id: r.rule_id.clone() })
    }
}

pub fn guardrail_validate(input: &str, rules: &Guardrails) -> GuardrailVerdict {
    rules.validate(input)
}
