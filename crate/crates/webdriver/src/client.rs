use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::protocol::{self, decode, element_id, expect_str, WireRequest};
use crate::transport::{HttpTransport, Transport};
use crate::WebDriverError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub browser_name: Option<String>,
    pub headless: bool,
    pub timeout_ms: u64,
    /// Cookie holding the application's session token.
    pub session_cookie: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:4444".into(),
            browser_name: None,
            headless: true,
            timeout_ms: 30_000,
            session_cookie: "session".into(),
        }
    }
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig { endpoint: endpoint.into(), ..RemoteConfig::default() }
    }

    pub fn validate(&self) -> Result<(), WebDriverError> {
        match url::Url::parse(&self.endpoint) {
            Ok(u) if matches!(u.scheme(), "http" | "https") => {}
            _ => return Err(WebDriverError::InvalidConfig(format!("endpoint {:?} is not an http URL", self.endpoint))),
        }
        if self.timeout_ms == 0 {
            return Err(WebDriverError::InvalidConfig("timeout_ms must be positive".into()));
        }
        Ok(())
    }
}

/// One WebDriver session.
pub struct WebDriverClient {
    cfg: RemoteConfig,
    transport: Box<dyn Transport>,
    session: Option<String>,
}

impl std::fmt::Debug for WebDriverClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WebDriverClient").field("cfg", &self.cfg).field("session", &self.session).finish()
    }
}

impl WebDriverClient {
    pub fn new(cfg: RemoteConfig) -> Result<Self, WebDriverError> {
        cfg.validate()?;
        let transport = HttpTransport::new(&cfg.endpoint, cfg.timeout_ms);
        Ok(Self::with_transport(cfg, Box::new(transport)))
    }

    pub fn with_transport(cfg: RemoteConfig, transport: Box<dyn Transport>) -> Self {
        WebDriverClient { cfg, transport, session: None }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    pub fn session_id(&self) -> Option<&str> {
        self.session.as_deref()
    }

    fn call(&self, req: WireRequest) -> Result<Value, WebDriverError> {
        let (status, body) = self.transport.send(&req)?;
        decode(status, &body)
    }

    fn sid(&self) -> Result<&str, WebDriverError> {
        self.session.as_deref().ok_or(WebDriverError::NoSession)
    }

    pub fn new_session(&mut self) -> Result<String, WebDriverError> {
        let v = self.call(protocol::new_session(self.cfg.browser_name.as_deref(), self.cfg.headless))?;
        let sid = v
            .get("sessionId")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| WebDriverError::Protocol(format!("new session response lacks sessionId: {v}")))?
            .to_string();
        self.session = Some(sid.clone());
        Ok(sid)
    }

    pub fn delete_session(&mut self) -> Result<(), WebDriverError> {
        let sid = self.sid()?.to_string();
        self.call(protocol::delete_session(&sid))?;
        self.session = None;
        Ok(())
    }

    pub fn navigate_to(&self, url: &str) -> Result<(), WebDriverError> {
        self.call(protocol::navigate_to(self.sid()?, url)).map(drop)
    }

    pub fn current_url(&self) -> Result<String, WebDriverError> {
        expect_str(self.call(protocol::get_current_url(self.sid()?))?, "current url")
    }

    pub fn find_elements(&self, css: &str) -> Result<Vec<String>, WebDriverError> {
        match self.call(protocol::find_elements(self.sid()?, css))? {
            Value::Array(items) => items.iter().map(element_id).collect(),
            other => Err(WebDriverError::Protocol(format!("find elements: expected an array, got {other}"))),
        }
    }

    pub fn element_click(&self, eid: &str) -> Result<(), WebDriverError> {
        self.call(protocol::element_click(self.sid()?, eid)).map(drop)
    }

    pub fn element_clear(&self, eid: &str) -> Result<(), WebDriverError> {
        self.call(protocol::element_clear(self.sid()?, eid)).map(drop)
    }

    pub fn element_send_keys(&self, eid: &str, text: &str) -> Result<(), WebDriverError> {
        self.call(protocol::element_send_keys(self.sid()?, eid, text)).map(drop)
    }

    pub fn element_text(&self, eid: &str) -> Result<String, WebDriverError> {
        expect_str(self.call(protocol::get_element_text(self.sid()?, eid))?, "element text")
    }

    pub fn element_displayed(&self, eid: &str) -> Result<bool, WebDriverError> {
        match self.call(protocol::is_element_displayed(self.sid()?, eid))? {
            Value::Bool(b) => Ok(b),
            other => Err(WebDriverError::Protocol(format!("displayed: expected a bool, got {other}"))),
        }
    }

    pub fn page_source(&self) -> Result<String, WebDriverError> {
        expect_str(self.call(protocol::get_page_source(self.sid()?))?, "page source")
    }

    /// Value of the named cookie, `None` when the browser has no such cookie.
    pub fn named_cookie(&self, name: &str) -> Result<Option<String>, WebDriverError> {
        match self.call(protocol::get_named_cookie(self.sid()?, name)) {
            Ok(v) => Ok(v.get("value").and_then(Value::as_str).map(str::to_string)),
            Err(WebDriverError::WebDriver { error, .. }) if error == "no such cookie" => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn execute_on(&self, script: &str, eid: &str) -> Result<Value, WebDriverError> {
        self.call(protocol::execute_sync(self.sid()?, script, eid))
    }
}
