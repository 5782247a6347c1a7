use std::time::Duration;

use crate::protocol::{Method, WireRequest};
use crate::WebDriverError;

/// Sends one request and returns (status, body).
pub trait Transport: Send + Sync {
    fn send(&self, req: &WireRequest) -> Result<(u16, String), WebDriverError>;
}

pub struct HttpTransport {
    endpoint: String,
    timeout_ms: u64,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout_ms: u64) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build();
        HttpTransport {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            timeout_ms,
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &WireRequest) -> Result<(u16, String), WebDriverError> {
        let url = format!("{}{}", self.endpoint, req.path);
        let sent = match req.method {
            Method::Get => self.agent.get(&url).call(),
            Method::Delete => self.agent.delete(&url).call(),
            Method::Post => self
                .agent
                .post(&url)
                .header("Content-Type", "application/json; charset=utf-8")
                .send(req.body.as_deref().unwrap_or("{}")),
        };
        let map = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => WebDriverError::HttpTimeout(self.timeout_ms),
            other => WebDriverError::Transport(other.to_string()),
        };
        let mut response = sent.map_err(map)?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(map)?;
        Ok((status, body))
    }
}
