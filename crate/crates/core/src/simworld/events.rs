use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::asr::IntentKind;
use crate::faces::Identity;
use crate::geom::Pose2D;

pub const LED_BLINK_PATTERN: &str = "blink-blue-green";
pub const LED_OFF_PATTERN: &str = "off";
/// Half-period of the 2 Hz blink.
pub const LED_TOGGLE_PERIOD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    HandTouched,
    LedState { pattern: String, lit: bool },
    TtsSaid { text: String },
    PictureTaken { image_ref: String },
    NavGoal { pose: Pose2D, place: Option<String> },
    Halted,
    Refused,
    HugPerformed,
    StateChanged { from: String, to: String },
    EndpointStop { stop_time: f64 },
    Transcribed { text: String },
    IntentRecognized { intent: IntentKind },
    Identified { identity: Identity },
    Executing { intent: IntentKind },
    Enrolled { label: String, entry_id: String },
    TextInput { value: String },
    TabletChanged { mode: String, text: Option<String> },
    Arrived { pose: Pose2D },
    Aborted { reason: String },
    ServiceError { service: String, message: String },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::HandTouched => "hand_touched",
            EventKind::LedState { .. } => "led_state",
            EventKind::TtsSaid { .. } => "tts_said",
            EventKind::PictureTaken { .. } => "picture_taken",
            EventKind::NavGoal { .. } => "nav_goal",
            EventKind::Halted => "halted",
            EventKind::Refused => "refused",
            EventKind::HugPerformed => "hug_performed",
            EventKind::StateChanged { .. } => "state_changed",
            EventKind::EndpointStop { .. } => "endpoint_stop",
            EventKind::Transcribed { .. } => "transcribed",
            EventKind::IntentRecognized { .. } => "intent_recognized",
            EventKind::Identified { .. } => "identified",
            EventKind::Executing { .. } => "executing",
            EventKind::Enrolled { .. } => "enrolled",
            EventKind::TextInput { .. } => "text_input",
            EventKind::TabletChanged { .. } => "tablet_changed",
            EventKind::Arrived { .. } => "arrived",
            EventKind::Aborted { .. } => "aborted",
            EventKind::ServiceError { .. } => "service_error",
        }
    }
}

/// Totally ordered by `(at, seq)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub at: f64,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Default)]
struct BusInner {
    log: Vec<SessionEvent>,
    subscribers: Vec<Sender<SessionEvent>>,
}

/// Multi-producer, multi-subscriber event log. Emission order is the total
/// order; timestamps may not go backwards.
#[derive(Clone, Default)]
pub struct EventBus {
    inner: Arc<Mutex<BusInner>>,
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends and broadcasts. A timestamp earlier than the last one is
    /// raised to it.
    pub fn emit(&self, at: f64, kind: EventKind) -> SessionEvent {
        let mut g = self.inner.lock().unwrap();
        let last = g.log.last().map(|e| e.at).unwrap_or(f64::NEG_INFINITY);
        let ev = SessionEvent {
            at: if at < last { last } else { at },
            seq: g.log.len() as u64,
            kind,
        };
        g.log.push(ev.clone());
        g.subscribers.retain(|s| s.send(ev.clone()).is_ok());
        ev
    }

    /// Receives every event emitted after this call.
    pub fn subscribe(&self) -> Receiver<SessionEvent> {
        let (tx, rx) = channel();
        self.inner.lock().unwrap().subscribers.push(tx);
        rx
    }

    pub fn history(&self) -> Vec<SessionEvent> {
        self.inner.lock().unwrap().log.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 2 Hz blink schedule started at `since`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedBlink {
    pub since: f64,
    /// Toggles already emitted, counting the initial "lit" event.
    pub emitted: u64,
}

impl LedBlink {
    pub fn start(since: f64) -> Self {
        LedBlink { since, emitted: 0 }
    }

    /// Pending `(time, lit)` toggles up to and including `until`.
    pub fn due(&mut self, until: f64) -> Vec<(f64, bool)> {
        let mut out = Vec::new();
        loop {
            let t = self.since + self.emitted as f64 * LED_TOGGLE_PERIOD;
            if t > until {
                break;
            }
            out.push((t, self.emitted % 2 == 0));
            self.emitted += 1;
        }
        out
    }
}
