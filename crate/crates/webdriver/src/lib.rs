//! Minimal W3C WebDriver client.
//!
//! Supports the endpoint subset the agent needs (sessions, navigation,
//! element lookup by CSS, click, clear, send keys, text, displayed, page
//! source, named cookies, and one form-submission script) and exposes it
//! through the shared [`testforge_core::Browser`] trait. [`mock`] serves
//! the same protocol from the simulated browser.

mod browser;
mod client;
pub mod conformance;
pub mod mock;
pub mod protocol;
mod transport;

use thiserror::Error;

pub use browser::WebDriverBrowser;
pub use client::{RemoteConfig, WebDriverClient};
pub use transport::{HttpTransport, Transport};

#[derive(Debug, Error)]
pub enum WebDriverError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no response within {0} ms")]
    HttpTimeout(u64),
    #[error("webdriver error {error:?} (HTTP {status}): {message}")]
    WebDriver { status: u16, error: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no session open")]
    NoSession,
    #[error("invalid remote config: {0}")]
    InvalidConfig(String),
}

impl WebDriverError {
    /// Shared error class, as the agent sees it.
    pub fn kind(&self) -> testforge_core::browser::ErrorKind {
        use testforge_core::browser::ErrorKind;
        match self {
            WebDriverError::WebDriver { error, .. } => protocol::error_kind(error),
            WebDriverError::HttpTimeout(_) => ErrorKind::Timeout,
            WebDriverError::Transport(_) | WebDriverError::NoSession => ErrorKind::SessionDead,
            WebDriverError::Protocol(_) | WebDriverError::InvalidConfig(_) => ErrorKind::Protocol,
        }
    }
}
