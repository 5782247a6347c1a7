//! Wire format: request builders for the supported endpoints, response
//! decoding, and the W3C error-code table.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use testforge_core::browser::ErrorKind;

use crate::WebDriverError;

/// Key under which W3C element references travel.
pub const ELEMENT_KEY: &str = "element-6066-11e4-a52e-4f735466cecf";

/// Submits the form owning `arguments[0]`. Returns null when submitted,
/// `"noform"` when there is no form, `"invalid:<name>"` when a field fails validation.
pub const SUBMIT_SCRIPT: &str = "const el = arguments[0]; \
const form = el.tagName === 'FORM' ? el : el.closest('form'); \
if (!form) { return 'noform'; } \
const bad = Array.from(form.elements).find(f => !f.checkValidity()); \
if (bad) { return 'invalid:' + (bad.name || bad.tagName.toLowerCase()); } \
form.requestSubmit(); return null;";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "POST")]
    Post,
    #[serde(rename = "DELETE")]
    Delete,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Delete => "DELETE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRequest {
    pub method: Method,
    pub path: String,
    /// Serialized JSON body; POST requests always carry one.
    pub body: Option<String>,
}

impl WireRequest {
    fn get(path: String) -> Self {
        WireRequest { method: Method::Get, path, body: None }
    }

    fn post<T: Serialize>(path: String, body: &T) -> Self {
        WireRequest { method: Method::Post, path, body: Some(serde_json::to_string(body).expect("body serializes")) }
    }

    fn delete(path: String) -> Self {
        WireRequest { method: Method::Delete, path, body: None }
    }

    /// Canonical text form: request line, blank line, body.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{} {}\n\n", self.method.as_str(), self.path).into_bytes();
        if let Some(b) = &self.body {
            out.extend_from_slice(b.as_bytes());
            out.push(b'\n');
        }
        out
    }
}

#[derive(Debug, Serialize)]
struct Empty {}

#[derive(Debug, Serialize)]
struct NewSessionBody<'a> {
    capabilities: Capabilities<'a>,
}

#[derive(Debug, Serialize)]
struct Capabilities<'a> {
    #[serde(rename = "alwaysMatch")]
    always_match: AlwaysMatch<'a>,
}

#[derive(Debug, Serialize)]
struct AlwaysMatch<'a> {
    #[serde(rename = "browserName", skip_serializing_if = "Option::is_none")]
    browser_name: Option<&'a str>,
    #[serde(rename = "goog:chromeOptions", skip_serializing_if = "Option::is_none")]
    chrome: Option<Args>,
    #[serde(rename = "moz:firefoxOptions", skip_serializing_if = "Option::is_none")]
    firefox: Option<Args>,
}

#[derive(Debug, Serialize)]
struct Args {
    args: Vec<&'static str>,
}

#[derive(Debug, Serialize)]
struct UrlBody<'a> {
    url: &'a str,
}

#[derive(Debug, Serialize)]
struct LocateBody<'a> {
    using: &'static str,
    value: &'a str,
}

#[derive(Debug, Serialize)]
struct TextBody<'a> {
    text: &'a str,
}

#[derive(Debug, Serialize)]
struct ExecuteBody<'a> {
    script: &'a str,
    args: Vec<ElementRef<'a>>,
}

#[derive(Debug, Serialize)]
struct ElementRef<'a> {
    #[serde(rename = "element-6066-11e4-a52e-4f735466cecf")]
    id: &'a str,
}

pub fn new_session(browser_name: Option<&str>, headless: bool) -> WireRequest {
    let args = |a: &'static str| headless.then(|| Args { args: vec![a] });
    WireRequest::post(
        "/session".into(),
        &NewSessionBody {
            capabilities: Capabilities {
                always_match: AlwaysMatch { browser_name, chrome: args("--headless=new"), firefox: args("-headless") },
            },
        },
    )
}

pub fn delete_session(sid: &str) -> WireRequest {
    WireRequest::delete(format!("/session/{sid}"))
}

pub fn navigate_to(sid: &str, url: &str) -> WireRequest {
    WireRequest::post(format!("/session/{sid}/url"), &UrlBody { url })
}

pub fn get_current_url(sid: &str) -> WireRequest {
    WireRequest::get(format!("/session/{sid}/url"))
}

pub fn find_elements(sid: &str, css: &str) -> WireRequest {
    WireRequest::post(format!("/session/{sid}/elements"), &LocateBody { using: "css selector", value: css })
}

pub fn element_click(sid: &str, eid: &str) -> WireRequest {
    WireRequest::post(format!("/session/{sid}/element/{eid}/click"), &Empty {})
}

pub fn element_clear(sid: &str, eid: &str) -> WireRequest {
    WireRequest::post(format!("/session/{sid}/element/{eid}/clear"), &Empty {})
}

pub fn element_send_keys(sid: &str, eid: &str, text: &str) -> WireRequest {
    WireRequest::post(format!("/session/{sid}/element/{eid}/value"), &TextBody { text })
}

pub fn get_element_text(sid: &str, eid: &str) -> WireRequest {
    WireRequest::get(format!("/session/{sid}/element/{eid}/text"))
}

pub fn is_element_displayed(sid: &str, eid: &str) -> WireRequest {
    WireRequest::get(format!("/session/{sid}/element/{eid}/displayed"))
}

pub fn get_page_source(sid: &str) -> WireRequest {
    WireRequest::get(format!("/session/{sid}/source"))
}

pub fn get_named_cookie(sid: &str, name: &str) -> WireRequest {
    WireRequest::get(format!("/session/{sid}/cookie/{name}"))
}

pub fn execute_sync(sid: &str, script: &str, element: &str) -> WireRequest {
    WireRequest::post(
        format!("/session/{sid}/execute/sync"),
        &ExecuteBody { script, args: vec![ElementRef { id: element }] },
    )
}

#[derive(Debug, Deserialize)]
struct Envelope {
    value: Value,
}

#[derive(Debug, Deserialize)]
struct ErrorValue {
    error: String,
    #[serde(default)]
    message: String,
}

/// Decodes a response into its `value`, or the error it carries.
pub fn decode(status: u16, body: &str) -> Result<Value, WebDriverError> {
    let env: Envelope = serde_json::from_str(body)
        .map_err(|e| WebDriverError::Protocol(format!("HTTP {status}: body is not a WebDriver response: {e}")))?;
    let err = env
        .value
        .as_object()
        .filter(|o| o.contains_key("error"))
        .and_then(|_| ErrorValue::deserialize(&env.value).ok());
    match (status, err) {
        (400.., Some(e)) => Err(WebDriverError::WebDriver { status, error: e.error, message: e.message }),
        (200..=299, None) => Ok(env.value),
        (_, Some(e)) => Err(WebDriverError::Protocol(format!("HTTP {status} with error {:?}", e.error))),
        (_, None) => Err(WebDriverError::Protocol(format!("HTTP {status} without an error code"))),
    }
}

/// Maps a W3C error code onto the shared error classes.
pub fn error_kind(code: &str) -> ErrorKind {
    match code {
        "no such element" => ErrorKind::ElementNotFound,
        "stale element reference" => ErrorKind::StaleElement,
        "element not interactable" | "element click intercepted" => ErrorKind::NotInteractable,
        "invalid element state" => ErrorKind::Readonly,
        "invalid selector" => ErrorKind::InvalidSelector,
        "invalid session id" => ErrorKind::SessionDead,
        "timeout" | "script timeout" => ErrorKind::Timeout,
        _ => ErrorKind::Protocol,
    }
}

pub fn element_id(v: &Value) -> Result<String, WebDriverError> {
    v.get(ELEMENT_KEY)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| WebDriverError::Protocol(format!("not an element reference: {v}")))
}

pub fn expect_str(v: Value, what: &str) -> Result<String, WebDriverError> {
    match v {
        Value::String(s) => Ok(s),
        other => Err(WebDriverError::Protocol(format!("{what}: expected a string, got {other}"))),
    }
}
