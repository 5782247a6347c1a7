//! [`Browser`] over a WebDriver session.

use std::sync::Arc;

use testforge_core::browser::{ActionResult, Browser, BrowserError, ErrorKind, ResultKind};
use testforge_core::page::dom::normalize_text;
use testforge_core::{Clock, Selector};

use crate::client::{RemoteConfig, WebDriverClient};
use crate::protocol::SUBMIT_SCRIPT;
use crate::WebDriverError;

pub struct WebDriverBrowser {
    client: WebDriverClient,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for WebDriverBrowser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WebDriverBrowser").field("client", &self.client).finish_non_exhaustive()
    }
}

fn to_browser(e: WebDriverError, selector: Option<&Selector>) -> BrowserError {
    let sel = || selector.map(|s| s.to_string()).unwrap_or_default();
    match e {
        WebDriverError::HttpTimeout(ms) => BrowserError::Timeout(format!("no response within {ms} ms")),
        WebDriverError::Transport(_) | WebDriverError::NoSession => BrowserError::SessionDead,
        WebDriverError::WebDriver { ref error, ref message, .. } => match crate::protocol::error_kind(error) {
            ErrorKind::ElementNotFound => BrowserError::ElementNotFound { selector: sel() },
            ErrorKind::StaleElement => BrowserError::StaleElement,
            ErrorKind::NotInteractable => BrowserError::NotInteractable { selector: sel() },
            ErrorKind::Readonly => BrowserError::Readonly { selector: sel() },
            ErrorKind::InvalidSelector => BrowserError::InvalidSelector(message.clone()),
            ErrorKind::SessionDead => BrowserError::SessionDead,
            ErrorKind::Timeout => BrowserError::Timeout(message.clone()),
            _ => BrowserError::Protocol(e.to_string()),
        },
        other => BrowserError::Protocol(other.to_string()),
    }
}

impl WebDriverBrowser {
    /// Connects and opens a session.
    pub fn connect(cfg: RemoteConfig, clock: Arc<dyn Clock>) -> Result<Self, WebDriverError> {
        Self::from_client(WebDriverClient::new(cfg)?, clock)
    }

    /// Opens a session on `client`.
    pub fn from_client(mut client: WebDriverClient, clock: Arc<dyn Clock>) -> Result<Self, WebDriverError> {
        client.new_session()?;
        Ok(WebDriverBrowser { client, clock })
    }

    pub fn client(&self) -> &WebDriverClient {
        &self.client
    }

    /// Ends the session.
    pub fn quit(mut self) -> Result<(), WebDriverError> {
        self.client.delete_session()
    }

    fn matching(&self, sel: &Selector) -> Result<Vec<String>, BrowserError> {
        let found = self.client.find_elements(&sel.combined_css()).map_err(|e| to_browser(e, Some(sel)))?;
        let Some(hint) = sel.text_hint.as_deref().map(normalize_text) else {
            return Ok(found);
        };
        let mut kept = Vec::new();
        for eid in found {
            let text = self.client.element_text(&eid).map_err(|e| to_browser(e, Some(sel)))?;
            if normalize_text(&text).contains(&hint) {
                kept.push(eid);
            }
        }
        Ok(kept)
    }

    fn unique(&self, sel: &Selector) -> Result<String, BrowserError> {
        let mut found = self.matching(sel)?;
        match found.len() {
            1 => Ok(found.remove(0)),
            0 => Err(BrowserError::ElementNotFound { selector: sel.to_string() }),
            n => Err(BrowserError::AmbiguousSelector { selector: sel.to_string(), count: n }),
        }
    }

    fn settled(&self, kind: ResultKind) -> Result<ActionResult, BrowserError> {
        let url = self.client.current_url().map_err(|e| to_browser(e, None))?;
        Ok(ActionResult { kind, url, status: None, redirected_from: None })
    }
}

impl Drop for WebDriverBrowser {
    fn drop(&mut self) {
        if self.client.session_id().is_some() {
            let _ = self.client.delete_session();
        }
    }
}

impl Browser for WebDriverBrowser {
    fn navigate(&mut self, url: &str) -> Result<ActionResult, BrowserError> {
        let absolute = match url::Url::parse(url) {
            Ok(u) => u.to_string(),
            Err(_) => {
                let here = self.client.current_url().map_err(|e| to_browser(e, None))?;
                url::Url::parse(&here)
                    .and_then(|b| b.join(url))
                    .map_err(|e| BrowserError::NotAPage { url: format!("{url} ({e})"), status: 0 })?
                    .to_string()
            }
        };
        self.client.navigate_to(&absolute).map_err(|e| to_browser(e, None))?;
        self.settled(ResultKind::Navigated)
    }

    fn click(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError> {
        let eid = self.unique(selector)?;
        self.client.element_click(&eid).map_err(|e| to_browser(e, Some(selector)))?;
        self.settled(ResultKind::Clicked)
    }

    fn fill(&mut self, selector: &Selector, value: &str) -> Result<ActionResult, BrowserError> {
        let eid = self.unique(selector)?;
        self.client.element_clear(&eid).map_err(|e| to_browser(e, Some(selector)))?;
        self.client.element_send_keys(&eid, value).map_err(|e| to_browser(e, Some(selector)))?;
        self.settled(ResultKind::Filled)
    }

    fn submit(&mut self, selector: &Selector) -> Result<ActionResult, BrowserError> {
        let eid = self.unique(selector)?;
        let out = self.client.execute_on(SUBMIT_SCRIPT, &eid).map_err(|e| to_browser(e, Some(selector)))?;
        match out.as_str() {
            None => self.settled(ResultKind::Submitted),
            Some("noform") => Err(BrowserError::FormValidation(format!("{selector} is not inside a form"))),
            Some(s) => match s.strip_prefix("invalid:") {
                Some(field) => Err(BrowserError::FormValidation(format!("required field {field} is empty"))),
                None => Err(BrowserError::Protocol(format!("unexpected submit result {s:?}"))),
            },
        }
    }

    fn count(&mut self, selector: &Selector) -> Result<usize, BrowserError> {
        Ok(self.matching(selector)?.len())
    }

    fn read_text(&mut self, selector: &Selector) -> Result<String, BrowserError> {
        let eid = self.unique(selector)?;
        self.client.element_text(&eid).map_err(|e| to_browser(e, Some(selector)))
    }

    fn is_displayed(&mut self, selector: &Selector) -> Result<bool, BrowserError> {
        let eid = self.unique(selector)?;
        self.client.element_displayed(&eid).map_err(|e| to_browser(e, Some(selector)))
    }

    fn current_url(&mut self) -> Result<String, BrowserError> {
        self.client.current_url().map_err(|e| to_browser(e, None))
    }

    fn page_source(&mut self) -> Result<String, BrowserError> {
        self.client.page_source().map_err(|e| to_browser(e, None))
    }

    fn wait(&mut self, ms: u64) -> Result<(), BrowserError> {
        self.clock.sleep_ms(ms);
        Ok(())
    }

    fn session_token(&mut self) -> Result<Option<String>, BrowserError> {
        let name = self.client.config().session_cookie.clone();
        self.client.named_cookie(&name).map_err(|e| to_browser(e, None))
    }
}
