//! Tablet web server: caption/processing/input pages pushed to UI clients,
//! and a TCP back-channel that returns typed input to the session.

mod backchannel;
mod client;
mod server;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

pub use backchannel::{request_text_input, send_line, Backchannel, InputOutcome};
pub use client::{BridgeClient, EventStream, TabletClient};
pub use server::{router, serve_bridge, BridgeServer};

pub const PROCESSING_TEXT: &str = "Processing audio input";
pub const CAPTION_TTL: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rejected: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TabletPage {
    Caption { text: String, shown_at: f64 },
    Processing { text: String },
    Input { prompt: String },
    Blank,
}

impl TabletPage {
    pub fn processing() -> Self {
        TabletPage::Processing {
            text: PROCESSING_TEXT.to_string(),
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            TabletPage::Caption { .. } => "caption",
            TabletPage::Processing { .. } => "processing",
            TabletPage::Input { .. } => "input",
            TabletPage::Blank => "blank",
        }
    }

    /// Displayed text, if the page has any.
    pub fn text(&self) -> Option<&str> {
        match self {
            TabletPage::Caption { text, .. } | TabletPage::Processing { text } => Some(text),
            TabletPage::Input { prompt } => Some(prompt),
            TabletPage::Blank => None,
        }
    }

    /// The page as seen at time `now`: captions lapse after `CAPTION_TTL`.
    pub fn at(&self, now: f64) -> TabletPage {
        match self {
            TabletPage::Caption { shown_at, .. } if now - shown_at >= CAPTION_TTL => TabletPage::Blank,
            other => other.clone(),
        }
    }
}

/// What the session asks the tablet to show; captions are stamped with the
/// bridge clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PageRequest {
    Caption { text: String },
    Processing,
    Input { prompt: String },
    Blank,
    /// Puts back an earlier page verbatim (captions keep their timestamp).
    Restore { page: TabletPage },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackchannelMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub value: String,
    pub at: f64,
}

impl BackchannelMessage {
    pub fn text_input(value: String, at: f64) -> Self {
        BackchannelMessage {
            kind: "text_input".into(),
            value,
            at,
        }
    }
}

/// One server-push event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageUpdate {
    pub seq: u64,
    pub at: f64,
    pub page: TabletPage,
}

/// Session-side control of a tablet, local or remote.
pub trait Tablet: Send + Sync {
    fn request(&self, req: PageRequest) -> Result<TabletPage, BridgeError>;
    fn advance_to(&self, t: f64) -> Result<TabletPage, BridgeError>;
    fn now(&self) -> Result<f64, BridgeError>;
    fn page(&self) -> Result<TabletPage, BridgeError>;
    fn set_backchannel(&self, addr: Option<SocketAddr>) -> Result<(), BridgeError>;

    fn show_caption(&self, text: &str) -> Result<TabletPage, BridgeError> {
        self.request(PageRequest::Caption { text: text.into() })
    }
    fn show_processing(&self) -> Result<TabletPage, BridgeError> {
        self.request(PageRequest::Processing)
    }
    fn show_input(&self, prompt: &str) -> Result<TabletPage, BridgeError> {
        self.request(PageRequest::Input { prompt: prompt.into() })
    }
    fn clear(&self) -> Result<TabletPage, BridgeError> {
        self.request(PageRequest::Blank)
    }
}

struct State {
    page: TabletPage,
    clock: f64,
    seq: u64,
    pending: Option<String>,
    backchannel: Option<SocketAddr>,
    confirms: u64,
}

/// In-process page state shared by the HTTP handlers and the session.
#[derive(Clone)]
pub struct Bridge {
    state: Arc<Mutex<State>>,
    tx: broadcast::Sender<PageUpdate>,
}

impl Default for Bridge {
    fn default() -> Self {
        Self::new()
    }
}

impl Bridge {
    pub fn new() -> Self {
        let (tx, _) = broadcast::channel(256);
        Bridge {
            state: Arc::new(Mutex::new(State {
                page: TabletPage::Blank,
                clock: 0.0,
                seq: 0,
                pending: None,
                backchannel: None,
                confirms: 0,
            })),
            tx,
        }
    }

    fn replace(&self, st: &mut State, page: TabletPage) -> TabletPage {
        st.page = page.clone();
        st.seq += 1;
        // no receivers is fine
        let _ = self.tx.send(PageUpdate {
            seq: st.seq,
            at: st.clock,
            page: page.clone(),
        });
        page
    }

    pub fn subscribe(&self) -> broadcast::Receiver<PageUpdate> {
        self.tx.subscribe()
    }

    /// Current page plus its sequence number, for stream (re)connects.
    pub fn snapshot(&self) -> PageUpdate {
        let st = self.state.lock().unwrap();
        PageUpdate {
            seq: st.seq,
            at: st.clock,
            page: st.page.clone(),
        }
    }

    pub fn set_pending(&self, value: String) {
        self.state.lock().unwrap().pending = Some(value);
    }

    /// Takes the pending input for a confirmation; `None` when no back-channel
    /// is registered.
    pub(crate) fn take_confirmation(&self) -> Option<(SocketAddr, BackchannelMessage)> {
        let mut st = self.state.lock().unwrap();
        let addr = st.backchannel?;
        st.confirms += 1;
        let value = st.pending.take().unwrap_or_default();
        Some((addr, BackchannelMessage::text_input(value, st.clock)))
    }

    pub fn confirm_count(&self) -> u64 {
        self.state.lock().unwrap().confirms
    }

    pub fn backchannel(&self) -> Option<SocketAddr> {
        self.state.lock().unwrap().backchannel
    }
}

impl Tablet for Bridge {
    fn request(&self, req: PageRequest) -> Result<TabletPage, BridgeError> {
        let mut st = self.state.lock().unwrap();
        let page = match req {
            PageRequest::Caption { text } => TabletPage::Caption { text, shown_at: st.clock },
            PageRequest::Processing => TabletPage::processing(),
            PageRequest::Input { prompt } => TabletPage::Input { prompt },
            PageRequest::Blank => TabletPage::Blank,
            PageRequest::Restore { page } => page.at(st.clock),
        };
        Ok(self.replace(&mut st, page))
    }

    /// Moves the simulated clock forward (never back) and applies caption
    /// expiry.
    fn advance_to(&self, t: f64) -> Result<TabletPage, BridgeError> {
        let mut st = self.state.lock().unwrap();
        if t > st.clock {
            st.clock = t;
        }
        let seen = st.page.at(st.clock);
        if seen != st.page {
            return Ok(self.replace(&mut st, seen));
        }
        Ok(seen)
    }

    fn now(&self) -> Result<f64, BridgeError> {
        Ok(self.state.lock().unwrap().clock)
    }

    fn page(&self) -> Result<TabletPage, BridgeError> {
        Ok(self.state.lock().unwrap().page.clone())
    }

    fn set_backchannel(&self, addr: Option<SocketAddr>) -> Result<(), BridgeError> {
        self.state.lock().unwrap().backchannel = addr;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caption_expires_at_ten_seconds() {
        let b = Bridge::new();
        b.show_caption("hello").unwrap();
        assert_eq!(b.advance_to(9.99).unwrap().mode(), "caption");
        assert_eq!(b.advance_to(10.0).unwrap(), TabletPage::Blank);
    }

    #[test]
    fn newer_caption_resets_timer() {
        let b = Bridge::new();
        b.show_caption("A").unwrap();
        b.advance_to(4.0).unwrap();
        b.show_caption("B").unwrap();
        assert_eq!(b.advance_to(13.99).unwrap().text(), Some("B"));
        assert_eq!(b.advance_to(14.0).unwrap(), TabletPage::Blank);
    }

    #[test]
    fn processing_page_json() {
        let b = Bridge::new();
        let p = b.show_processing().unwrap();
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"mode":"processing","text":"Processing audio input"}"#
        );
        // does not expire
        assert_eq!(b.advance_to(1000.0).unwrap(), p);
    }

    #[test]
    fn updates_are_pushed_in_order() {
        let b = Bridge::new();
        let mut rx = b.subscribe();
        b.show_caption("x").unwrap();
        b.advance_to(10.0).unwrap();
        let a = rx.try_recv().unwrap();
        let c = rx.try_recv().unwrap();
        assert_eq!(a.page.mode(), "caption");
        assert_eq!((c.page.mode(), c.at, c.seq), ("blank", 10.0, a.seq + 1));
    }

    #[test]
    fn clock_is_monotone() {
        let b = Bridge::new();
        b.advance_to(5.0).unwrap();
        b.advance_to(2.0).unwrap();
        assert_eq!(b.now().unwrap(), 5.0);
    }
}
