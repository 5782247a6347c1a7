//! WebDriver endpoint served by the simulated browser, for running the
//! client and the agent end to end without a real browser.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::{json, Value};
use testforge_core::browser::{Browser, BrowserError};
use testforge_core::page::dom::NodeId;
use testforge_core::sim::{SimSession, SimSite};
use testforge_core::{Selector, SimClock};
use tiny_http::{Header, Method, Response, Server};

use crate::protocol::{ELEMENT_KEY, SUBMIT_SCRIPT};

struct MockSession {
    sim: SimSession,
    elements: Vec<(NodeId, u64)>,
}

struct State {
    site: Arc<SimSite>,
    clock: SimClock,
    sessions: HashMap<String, MockSession>,
    next_session: u64,
    log: Vec<String>,
}

pub struct MockServer {
    url: String,
    server: Arc<Server>,
    state: Arc<Mutex<State>>,
    worker: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for MockServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockServer").field("url", &self.url).finish_non_exhaustive()
    }
}

type Reply = (u16, Value);

fn ok(v: Value) -> Reply {
    (200, json!({ "value": v }))
}

fn fail(status: u16, error: &str, message: impl Into<String>) -> Reply {
    (status, json!({ "value": { "error": error, "message": message.into(), "stacktrace": "" } }))
}

fn from_browser(e: BrowserError) -> Reply {
    let msg = e.to_string();
    match e {
        BrowserError::ElementNotFound { .. } => fail(404, "no such element", msg),
        BrowserError::StaleElement => fail(404, "stale element reference", msg),
        BrowserError::NotInteractable { .. } => fail(400, "element not interactable", msg),
        BrowserError::Readonly { .. } => fail(400, "invalid element state", msg),
        BrowserError::InvalidSelector(_) => fail(400, "invalid selector", msg),
        BrowserError::SessionDead => fail(404, "invalid session id", msg),
        BrowserError::Timeout(_) => fail(500, "timeout", msg),
        _ => fail(500, "unknown error", msg),
    }
}

#[derive(Deserialize)]
struct UrlArg {
    url: String,
}

#[derive(Deserialize)]
struct LocateArg {
    using: String,
    value: String,
}

#[derive(Deserialize)]
struct TextArg {
    text: String,
}

#[derive(Deserialize)]
struct ExecArg {
    script: String,
    #[serde(default)]
    args: Vec<Value>,
}

fn arg<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, Reply> {
    serde_json::from_str(body).map_err(|e| fail(400, "invalid argument", e.to_string()))
}

impl MockServer {
    /// Starts serving on an ephemeral localhost port.
    pub fn start(site: Arc<SimSite>, clock: SimClock) -> std::io::Result<MockServer> {
        let server = Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server.server_addr().to_ip().map(|a| a.port()).unwrap_or(0);
        let server = Arc::new(server);
        let state =
            Arc::new(Mutex::new(State { site, clock, sessions: HashMap::new(), next_session: 0, log: Vec::new() }));
        let worker = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = request.as_reader().read_to_string(&mut body);
                    let method = request.method().clone();
                    let path = request.url().to_string();
                    let (status, value) = {
                        let mut st = state.lock().unwrap_or_else(|e| e.into_inner());
                        st.log.push(format!("{} {}", method.as_str(), path));
                        st.handle(&method, &path, &body)
                    };
                    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json; charset=utf-8"[..])
                        .expect("static header");
                    let response =
                        Response::from_string(value.to_string()).with_status_code(status).with_header(header);
                    let _ = request.respond(response);
                }
            })
        };
        Ok(MockServer { url: format!("http://127.0.0.1:{port}"), server, state, worker: Some(worker) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Request lines received so far.
    pub fn requests(&self) -> Vec<String> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).log.clone()
    }

    /// Runs `f` against a live session, if it exists.
    pub fn with_session<R>(&self, session_id: &str, f: impl FnOnce(&mut SimSession) -> R) -> Option<R> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        st.sessions.get_mut(session_id).map(|s| f(&mut s.sim))
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl State {
    fn handle(&mut self, method: &Method, path: &str, body: &str) -> Reply {
        let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, parts.as_slice()) {
            (Method::Post, ["session"]) => {
                self.next_session += 1;
                let sid = format!("mock-{:04}", self.next_session);
                let sim = self.site.open_session(self.clock.clone());
                self.sessions.insert(sid.clone(), MockSession { sim, elements: Vec::new() });
                ok(json!({ "sessionId": sid, "capabilities": { "browserName": "testforge-sim" } }))
            }
            (Method::Delete, ["session", sid]) => match self.sessions.remove(*sid) {
                Some(_) => ok(Value::Null),
                None => fail(404, "invalid session id", format!("no session {sid}")),
            },
            (_, ["session", sid, rest @ ..]) => {
                let Some(session) = self.sessions.get_mut(*sid) else {
                    return fail(404, "invalid session id", format!("no session {sid}"));
                };
                session.handle(method, rest, body).unwrap_or_else(|r| r)
            }
            _ => fail(404, "unknown command", format!("{} {path}", method.as_str())),
        }
    }
}

impl MockSession {
    fn element(&self, eid: &str) -> Result<(NodeId, u64), Reply> {
        eid.strip_prefix('e')
            .and_then(|i| i.parse::<usize>().ok())
            .and_then(|i| self.elements.get(i).copied())
            .ok_or_else(|| fail(404, "no such element", format!("unknown element {eid}")))
    }

    fn reference(&mut self, node: NodeId) -> Value {
        let generation = self.sim.generation();
        let idx = match self.elements.iter().position(|e| *e == (node, generation)) {
            Some(i) => i,
            None => {
                self.elements.push((node, generation));
                self.elements.len() - 1
            }
        };
        json!({ ELEMENT_KEY: format!("e{idx}") })
    }

    fn handle(&mut self, method: &Method, rest: &[&str], body: &str) -> Result<Reply, Reply> {
        let sim_err = |e: BrowserError| from_browser(e);
        let reply = match (method, rest) {
            (Method::Post, ["url"]) => {
                let a: UrlArg = arg(body)?;
                match self.sim.navigate(&a.url) {
                    // A browser still shows the error page.
                    Ok(_) | Err(BrowserError::NotAPage { .. }) => ok(Value::Null),
                    Err(e) => sim_err(e),
                }
            }
            (Method::Get, ["url"]) => ok(json!(self.sim.current_url().map_err(sim_err)?)),
            (Method::Post, ["elements"]) => {
                let a: LocateArg = arg(body)?;
                if a.using != "css selector" {
                    return Err(fail(400, "invalid argument", format!("unsupported strategy {:?}", a.using)));
                }
                let nodes = self.sim.find(&Selector::css(a.value)).map_err(sim_err)?;
                let refs: Vec<Value> = nodes.into_iter().map(|n| self.reference(n)).collect();
                ok(Value::Array(refs))
            }
            (Method::Post, ["element", eid, "click"]) => {
                let (n, g) = self.element(eid)?;
                self.sim.click_element(n, g).map_err(sim_err)?;
                ok(Value::Null)
            }
            (Method::Post, ["element", eid, "clear"]) => {
                let (n, g) = self.element(eid)?;
                self.sim.clear_element(n, g).map_err(sim_err)?;
                ok(Value::Null)
            }
            (Method::Post, ["element", eid, "value"]) => {
                let a: TextArg = arg(body)?;
                let (n, g) = self.element(eid)?;
                let (typed, enter) = match a.text.split_once('\u{E007}') {
                    Some((before, _)) => (before.to_string(), true),
                    None => (a.text, false),
                };
                if !typed.is_empty() {
                    let current = self.sim.element_text(n, g).map_err(sim_err)?;
                    self.sim.fill_element(n, g, &format!("{current}{typed}")).map_err(sim_err)?;
                }
                if enter {
                    self.sim.submit_element(n, g).map_err(sim_err)?;
                }
                ok(Value::Null)
            }
            (Method::Get, ["element", eid, "text"]) => {
                let (n, g) = self.element(eid)?;
                ok(json!(self.sim.element_text(n, g).map_err(sim_err)?))
            }
            (Method::Get, ["element", eid, "displayed"]) => {
                let (n, g) = self.element(eid)?;
                ok(json!(self.sim.element_displayed(n, g).map_err(sim_err)?))
            }
            (Method::Get, ["source"]) => ok(json!(self.sim.page_source().map_err(sim_err)?)),
            (Method::Get, ["cookie", name]) => match (*name, self.sim.session_token().map_err(sim_err)?) {
                ("session", Some(token)) => ok(json!({ "name": "session", "value": token, "path": "/" })),
                _ => fail(404, "no such cookie", format!("no cookie {name}")),
            },
            (Method::Post, ["execute", "sync"]) => {
                let a: ExecArg = arg(body)?;
                if a.script != SUBMIT_SCRIPT {
                    return Err(fail(500, "unsupported operation", "the mock only runs the form-submit script"));
                }
                let eid = a.args.first().and_then(|v| v.get(ELEMENT_KEY)).and_then(Value::as_str).unwrap_or("");
                let (n, g) = self.element(eid)?;
                match self.sim.submit_element(n, g) {
                    // A browser submits and renders whatever the server answers.
                    Ok(_) | Err(BrowserError::BadCredentials) => ok(Value::Null),
                    Err(BrowserError::FormValidation(m)) if m.contains("not inside a form") => ok(json!("noform")),
                    Err(BrowserError::FormValidation(m)) => {
                        let field = m.strip_prefix("required field ").and_then(|r| r.strip_suffix(" is empty"));
                        ok(json!(format!("invalid:{}", field.unwrap_or("?"))))
                    }
                    Err(e) => sim_err(e),
                }
            }
            _ => fail(404, "unknown command", format!("{} {}", method.as_str(), rest.join("/"))),
        };
        Ok(reply)
    }
}
