//! The browser interface shared by the simulated browser and the WebDriver
//! client. The agent and the security probes only ever talk to this trait.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::Selector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    Navigated,
    Clicked,
    Filled,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    pub kind: ResultKind,
    /// URL after the action settled.
    pub url: String,
    /// HTTP status of the page now shown, when the backend can observe it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    /// Path originally requested when the backend followed a redirect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redirected_from: Option<String>,
}

/// Coarse error class, stable across backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    AmbiguousSelector,
    ElementNotFound,
    NotInteractable,
    Readonly,
    NotAPage,
    HttpStatus,
    FormValidation,
    BadCredentials,
    AssertionFailed,
    GuardrailBlocked,
    StaleElement,
    InvalidSelector,
    Timeout,
    Protocol,
    SessionDead,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BrowserError {
    #[error("ambiguous selector {selector}: {count} elements match")]
    AmbiguousSelector { selector: String, count: usize },
    #[error("element not found: {selector}")]
    ElementNotFound { selector: String },
    #[error("element not interactable: {selector}")]
    NotInteractable { selector: String },
    #[error("element is readonly: {selector}")]
    Readonly { selector: String },
    #[error("not a page: {url} ({status})")]
    NotAPage { url: String, status: u16 },
    #[error("form rejected: {0}")]
    FormValidation(String),
    #[error("bad credentials")]
    BadCredentials,
    #[error("stale element reference")]
    StaleElement,
    #[error("invalid selector: {0}")]
    InvalidSelector(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("browser session is dead")]
    SessionDead,
}

impl BrowserError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            BrowserError::AmbiguousSelector { .. } => ErrorKind::AmbiguousSelector,
            BrowserError::ElementNotFound { .. } => ErrorKind::ElementNotFound,
            BrowserError::NotInteractable { .. } => ErrorKind::NotInteractable,
            BrowserError::Readonly { .. } => ErrorKind::Readonly,
            BrowserError::NotAPage { .. } => ErrorKind::NotAPage,
            BrowserError::FormValidation(_) => ErrorKind::FormValidation,
            BrowserError::BadCredentials => ErrorKind::BadCredentials,
            BrowserError::StaleElement => ErrorKind::StaleElement,
            BrowserError::InvalidSelector(_) => ErrorKind::InvalidSelector,
            BrowserError::Timeout(_) => ErrorKind::Timeout,
            BrowserError::Protocol(_) => ErrorKind::Protocol,
            BrowserError::SessionDead => ErrorKind::SessionDead,
        }
    }
}

pub trait Browser {
    fn navigate(&mut self, url: &str) -> Result<ActionResult, BrowserError>;
    fn click(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError>;
    fn fill(&mut self, selector: &Selector, value: &str) -> Result<ActionResult, BrowserError>;
    /// Submits the form named by `selector`, or the form containing it.
    fn submit(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError>;
    /// Number of elements currently present that match.
    fn count(&mut self, selector: &Selector) -> Result<usize, BrowserError>;
    /// Text of the single matching element.
    fn read_text(&mut self, selector: &Selector) -> Result<String, BrowserError>;
    /// Whether the single matching element is displayed.
    fn is_displayed(&mut self, selector: &Selector) -> Result<bool, BrowserError>;
    fn current_url(&mut self) -> Result<String, BrowserError>;
    fn page_source(&mut self) -> Result<String, BrowserError>;
    fn wait(&mut self, ms: u64) -> Result<(), BrowserError>;
    /// Session cookie value, when the backend exposes it.
    fn session_token(&mut self) -> Result<Option<String>, BrowserError> {
        Ok(None)
    }
}

impl<B: Browser + ?Sized> Browser for &mut B {
    fn navigate(&mut self, url: &str) -> Result<ActionResult, BrowserError> {
        (**self).navigate(url)
    }
    fn click(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError> {
        (**self).click(selector)
    }
    fn fill(&mut self, selector: &Selector, value: &str) -> Result<ActionResult, BrowserError> {
        (**self).fill(selector, value)
    }
    fn submit(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError> {
        (**self).submit(selector)
    }
    fn count(&mut self, selector: &Selector) -> Result<usize, BrowserError> {
        (**self).count(selector)
    }
    fn read_text(&mut self, selector: &Selector) -> Result<String, BrowserError> {
        (**self).read_text(selector)
    }
    fn is_displayed(&mut self, selector: &Selector) -> Result<bool, BrowserError> {
        (**self).is_displayed(selector)
    }
    fn current_url(&mut self) -> Result<String, BrowserError> {
        (**self).current_url()
    }
    fn page_source(&mut self) -> Result<String, BrowserError> {
        (**self).page_source()
    }
    fn wait(&mut self, ms: u64) -> Result<(), BrowserError> {
        (**self).wait(ms)
    }
    fn session_token(&mut self) -> Result<Option<String>, BrowserError> {
        (**self).session_token()
    }
}
