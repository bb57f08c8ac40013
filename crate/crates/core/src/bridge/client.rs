use std::io::{BufRead, BufReader, Read};
use std::net::SocketAddr;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use super::{BridgeError, PageRequest, PageUpdate, Tablet, TabletPage};

fn transport(e: impl std::fmt::Display) -> BridgeError {
    BridgeError::Transport(e.to_string())
}

fn base_url(base: &str) -> String {
    if base.starts_with("http://") || base.starts_with("https://") {
        base.trim_end_matches('/').to_string()
    } else {
        format!("http://{}", base.trim_end_matches('/'))
    }
}

fn reply<T: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T, BridgeError> {
    let status = resp.status();
    let body = resp.body_mut().read_to_string().map_err(transport)?;
    if !status.is_success() {
        return Err(BridgeError::Rejected(format!("HTTP {status}: {body}")));
    }
    serde_json::from_str(&body).map_err(transport)
}

/// Headless stand-in for the tablet UI: reads pages, types, confirms.
#[derive(Clone)]
pub struct TabletClient {
    base: String,
    agent: ureq::Agent,
}

impl TabletClient {
    pub fn new(base: &str) -> Self {
        TabletClient {
            base: base_url(base),
            agent: crate::http::agent(),
        }
    }

    pub fn page(&self) -> Result<TabletPage, BridgeError> {
        let resp = self.agent.get(&format!("{}/page", self.base)).call().map_err(transport)?;
        reply(resp)
    }

    pub fn input(&self, value: &str) -> Result<(), BridgeError> {
        let resp = self
            .agent
            .post(&format!("{}/input", self.base))
            .content_type("application/json")
            .send(json!({ "value": value }).to_string())
            .map_err(transport)?;
        reply::<serde_json::Value>(resp).map(|_| ())
    }

    pub fn confirm(&self) -> Result<(), BridgeError> {
        let resp = self
            .agent
            .post(&format!("{}/confirm", self.base))
            .send_empty()
            .map_err(transport)?;
        reply::<serde_json::Value>(resp).map(|_| ())
    }

    /// Types `value` and presses confirm.
    pub fn submit(&self, value: &str) -> Result<(), BridgeError> {
        self.input(value)?;
        self.confirm()
    }

    /// Opens the server-push stream.
    pub fn events(&self) -> Result<EventStream, BridgeError> {
        let resp = self.agent.get(&format!("{}/events", self.base)).call().map_err(transport)?;
        if !resp.status().is_success() {
            return Err(BridgeError::Rejected(format!("HTTP {}", resp.status())));
        }
        let reader: Box<dyn Read + Send> = Box::new(resp.into_body().into_reader());
        Ok(EventStream {
            lines: BufReader::new(reader),
        })
    }
}

/// Blocking iterator over `data:` frames of the event stream.
pub struct EventStream {
    lines: BufReader<Box<dyn Read + Send>>,
}

impl Iterator for EventStream {
    type Item = Result<PageUpdate, BridgeError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut data = String::new();
        loop {
            let mut line = String::new();
            match self.lines.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(transport(e))),
            }
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                if data.is_empty() {
                    continue;
                }
                return Some(serde_json::from_str(&data).map_err(transport));
            }
            if let Some(d) = line.strip_prefix("data:") {
                if !data.is_empty() {
                    data.push('\n');
                }
                data.push_str(d.strip_prefix(' ').unwrap_or(d));
            }
            // comments (keep-alives) and other fields are skipped
        }
    }
}

#[derive(Deserialize)]
struct ClockReply {
    t: f64,
}

/// Session-side control of a bridge in another process.
#[derive(Clone)]
pub struct BridgeClient {
    base: String,
    agent: ureq::Agent,
}

impl BridgeClient {
    pub fn new(base: &str) -> Self {
        BridgeClient {
            base: base_url(base),
            agent: crate::http::agent(),
        }
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: serde_json::Value) -> Result<T, BridgeError> {
        let resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .content_type("application/json")
            .send(body.to_string())
            .map_err(transport)?;
        reply(resp)
    }
}

impl Tablet for BridgeClient {
    fn request(&self, req: PageRequest) -> Result<TabletPage, BridgeError> {
        self.post("/session/page", serde_json::to_value(req).map_err(transport)?)
    }

    fn advance_to(&self, t: f64) -> Result<TabletPage, BridgeError> {
        self.post("/session/clock", json!({ "t": t }))
    }

    fn now(&self) -> Result<f64, BridgeError> {
        let resp = self
            .agent
            .get(&format!("{}/session/clock", self.base))
            .call()
            .map_err(transport)?;
        reply::<ClockReply>(resp).map(|c| c.t)
    }

    fn page(&self) -> Result<TabletPage, BridgeError> {
        TabletClient {
            base: self.base.clone(),
            agent: self.agent.clone(),
        }
        .page()
    }

    fn set_backchannel(&self, addr: Option<SocketAddr>) -> Result<(), BridgeError> {
        self.post::<serde_json::Value>("/session/backchannel", json!({ "addr": addr.map(|a| a.to_string()) }))
            .map(|_| ())
    }
}
