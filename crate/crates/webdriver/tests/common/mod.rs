#![allow(dead_code)]

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Response, Server};

/// One canned reply.
#[derive(Debug, Clone)]
pub struct Canned {
    pub status: u16,
    pub body: String,
    pub delay_ms: u64,
}

impl Canned {
    pub fn ok(body: &str) -> Self {
        Canned { status: 200, body: body.into(), delay_ms: 0 }
    }

    pub fn status(status: u16, body: &str) -> Self {
        Canned { status, body: body.into(), delay_ms: 0 }
    }
}

/// Replays canned replies in order and records each request as
/// "METHOD path\n\nbody".
pub struct Recorded {
    pub url: String,
    pub seen: Arc<Mutex<Vec<String>>>,
    server: Arc<Server>,
    worker: Option<JoinHandle<()>>,
}

impl Recorded {
    pub fn start(replies: Vec<Canned>) -> Recorded {
        let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let worker = {
            let server = server.clone();
            let seen = seen.clone();
            std::thread::spawn(move || {
                let mut replies = replies.into_iter();
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    req.as_reader().read_to_string(&mut body).unwrap();
                    seen.lock().unwrap().push(format!("{} {}\n\n{}", req.method().as_str(), req.url(), body));
                    let c = replies.next().unwrap_or(Canned::status(500, "no more canned replies"));
                    std::thread::sleep(Duration::from_millis(c.delay_ms));
                    let _ = req.respond(Response::from_string(c.body).with_status_code(c.status));
                }
            })
        };
        Recorded { url: format!("http://127.0.0.1:{port}"), seen, server, worker: Some(worker) }
    }

    pub fn seen(&self) -> Vec<String> {
        self.seen.lock().unwrap().clone()
    }
}

impl Drop for Recorded {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
