//! Script generation providers.
//!
//! [`Bridge`] wraps a [`Provider`] and enforces the attempt budget and the
//! script invariants on everything a provider returns. Two providers ship:
//! [`StubProvider`], a deterministic keyword-rule generator, and
//! [`HttpProvider`], which calls an external service (see
//! `docs/provider-api.md` for the wire format).

mod digest;
mod http;
mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enhance::ValidationReport;
use crate::page::SiteContext;
use crate::script::{Provenance, TestScript};

pub use digest::{ContextDigest, ElementDigest, PageDigest};
pub use http::{decode_provider_output, HttpProvider, WireRequest};
pub use stub::StubProvider;

/// Overrides the configured HTTP endpoint when set.
pub const ENDPOINT_ENV: &str = "TESTFORGE_PROVIDER_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub script_id: String,
    pub base_url: String,
    pub instructions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<ValidationReport>,
    /// The script the feedback refers to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<TestScript>,
    pub attempt: u32,
    /// Failure-cluster summaries offered as generation hints.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hints: Vec<String>,
}

impl GenerationRequest {
    pub fn new(script_id: &str, base_url: &str, instructions: &str) -> Self {
        GenerationRequest {
            script_id: script_id.to_string(),
            base_url: base_url.to_string(),
            instructions: instructions.to_string(),
            feedback: None,
            previous: None,
            attempt: 1,
            hints: Vec::new(),
        }
    }

    /// The follow-up request carrying `report` about `previous`.
    pub fn with_feedback(&self, previous: TestScript, report: ValidationReport) -> Self {
        GenerationRequest {
            feedback: Some(report),
            previous: Some(previous),
            attempt: self.attempt + 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_attempts: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig { kind: ProviderKind::Stub, endpoint: None, timeout_ms: 30_000, max_attempts: 2 }
    }
}

impl ProviderConfig {
    pub fn http(endpoint: &str) -> Self {
        ProviderConfig { kind: ProviderKind::Http, endpoint: Some(endpoint.to_string()), ..Self::default() }
    }

    /// Applies the endpoint environment override, switching to HTTP.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(ep) = std::env::var(ENDPOINT_ENV) {
            if !ep.trim().is_empty() {
                self.kind = ProviderKind::Http;
                self.endpoint = Some(ep);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: &str| Err(GenerationError::InvalidConfig(m.to_string()));
        match (self.kind, &self.endpoint) {
            (ProviderKind::Http, None) => return bad("http provider needs an endpoint"),
            (ProviderKind::Stub, Some(_)) => return bad("stub provider takes no endpoint"),
            _ => {}
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("provider timed out after {0} ms")]
    ProviderTimeout(u64),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider output: {reason}")]
    MalformedProviderOutput { reason: String, raw: String },
    #[error("attempt {attempt} exceeds the limit of {max}")]
    AttemptsExhausted { attempt: u32, max: u32 },
    #[error("no actionable instruction found")]
    NoActionableInstructions,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, req: &GenerationRequest, site: &SiteContext) -> Result<TestScript, GenerationError>;
}

pub struct Bridge {
    provider: Box<dyn Provider>,
    cfg: ProviderConfig,
}

impl std::fmt::Debug for Bridge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bridge").field("provider", &self.provider.name()).field("cfg", &self.cfg).finish()
    }
}

impl Bridge {
    pub fn from_config(cfg: ProviderConfig) -> Result<Self, GenerationError> {
        cfg.validate()?;
        let provider: Box<dyn Provider> = match cfg.kind {
            ProviderKind::Stub => Box::new(StubProvider),
            ProviderKind::Http => {
                Box::new(HttpProvider::new(cfg.endpoint.as_deref().unwrap_or_default(), cfg.timeout_ms))
            }
        };
        Ok(Bridge { provider, cfg })
    }

    pub fn with_provider(provider: Box<dyn Provider>, cfg: ProviderConfig) -> Self {
        Bridge { provider, cfg }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn generate(&self, req: &GenerationRequest, site: &SiteContext) -> Result<TestScript, GenerationError> {
        if req.instructions.trim().is_empty() {
            return Err(GenerationError::InvalidRequest("instructions are empty".into()));
        }
        if req.attempt == 0 {
            return Err(GenerationError::InvalidRequest("attempt numbers start at 1".into()));
        }
        if req.attempt > self.cfg.max_attempts {
            return Err(GenerationError::AttemptsExhausted { attempt: req.attempt, max: self.cfg.max_attempts });
        }
        let mut script = self.provider.generate(req, site)?;
        script.provenance = Provenance::Generated;
        script.validate().map_err(|e| GenerationError::MalformedProviderOutput {
            reason: e.to_string(),
            raw: crate::script::serialize_script(&script),
        })?;
        Ok(script)
    }

    pub fn regenerate(&self, req: &GenerationRequest, site: &SiteContext) -> Result<TestScript, GenerationError> {
        if req.feedback.is_none() {
            return Err(GenerationError::InvalidRequest("regeneration needs feedback".into()));
        }
        self.generate(req, site)
    }
}

#[cfg(test)]
mod tests;
