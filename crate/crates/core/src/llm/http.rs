use std::time::Duration;

use serde::Serialize;

use super::{ContextDigest, GenerationError, GenerationRequest, Provider};
use crate::enhance::ValidationReport;
use crate::page::SiteContext;
use crate::script::{parse_script, TestScript};

/// Body POSTed to an external provider.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WireRequest<'a> {
    pub script_id: &'a str,
    pub base_url: &'a str,
    pub instructions: &'a str,
    pub context_digest: ContextDigest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<&'a ValidationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub previous_script: Option<&'a TestScript>,
    pub attempt: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    pub hints: &'a [String],
}

impl<'a> WireRequest<'a> {
    pub fn new(req: &'a GenerationRequest, site: &SiteContext) -> Self {
        WireRequest {
            script_id: &req.script_id,
            base_url: &req.base_url,
            instructions: &req.instructions,
            context_digest: ContextDigest::from_site(site),
            feedback: req.feedback.as_ref(),
            previous_script: req.previous.as_ref(),
            attempt: req.attempt,
            hints: &req.hints,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpProvider {
    endpoint: String,
    timeout_ms: u64,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(endpoint: &str, timeout_ms: u64) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build();
        HttpProvider { endpoint: endpoint.to_string(), timeout_ms, agent: ureq::Agent::new_with_config(config) }
    }
}

fn malformed(reason: impl Into<String>, raw: &str) -> GenerationError {
    GenerationError::MalformedProviderOutput { reason: reason.into(), raw: raw.to_string() }
}

/// Decodes a provider response body: `{"script": <script document>}`, where
/// the document may also arrive as a JSON string. Anything else, and any
/// script that fails validation, is rejected with the raw body attached.
pub fn decode_provider_output(raw: &str) -> Result<TestScript, GenerationError> {
    let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| malformed(format!("not JSON: {e}"), raw))?;
    let script = value
        .as_object()
        .and_then(|o| o.get("script"))
        .ok_or_else(|| malformed("response has no \"script\" member", raw))?;
    let text = match script {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Object(_) => script.to_string(),
        _ => return Err(malformed("\"script\" is neither an object nor a string", raw)),
    };
    parse_script(&text).map_err(|e| malformed(e.to_string(), raw))
}

impl Provider for HttpProvider {
    fn name(&self) -> &'static str {
        "http"
    }

    fn generate(&self, req: &GenerationRequest, site: &SiteContext) -> Result<TestScript, GenerationError> {
        let body = serde_json::to_string(&WireRequest::new(req, site)).expect("request serializes");
        let response = self.agent.post(&self.endpoint).header("Content-Type", "application/json").send(body.as_str());
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(GenerationError::ProviderTimeout(self.timeout_ms)),
            Err(e) => return Err(GenerationError::ProviderUnavailable(e.to_string())),
        };
        let status = response.status().as_u16();
        let raw = match response.body_mut().read_to_string() {
            Ok(s) => s,
            Err(ureq::Error::Timeout(_)) => return Err(GenerationError::ProviderTimeout(self.timeout_ms)),
            Err(e) => return Err(GenerationError::ProviderUnavailable(e.to_string())),
        };
        if !(200..300).contains(&status) {
            return Err(malformed(format!("HTTP status {status}"), &raw));
        }
        decode_provider_output(&raw)
    }
}
