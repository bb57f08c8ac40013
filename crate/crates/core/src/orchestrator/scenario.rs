//! Scripted sessions: inject stimuli, then check the event log.
//!
//! ```yaml
//! name: short demo
//! start: [3.0, 3.0, 0.0]          # robot pose on the map
//! faces:                          # PGM images, relative to this file
//!   alice: faces/alice.pgm
//! utterances:                     # 16-bit mono WAV, relative to this file
//!   hug: audio/hug.wav
//! steps:
//!   - face: alice                 # who stands in front of the camera ("none" clears)
//!   - touch                       # hand touched
//!   - utterance: hug              # audio played into the microphone
//!   - expect: {event: hug_performed}
//!   - typed_input: Carol          # typed and confirmed on the tablet
//!   - wait: 2.0                   # simulated seconds
//!   - obstacle: {x: 5.0, y: 5.0, radius: 0.3}
//!   - expect: {event: refused, absent: true}
//! ```
//!
//! An expectation looks for an event of type `event` whose JSON form has
//! every key in `fields` with a matching value (nested objects match on the
//! keys given), and whose `text` (if
//! `contains` is given) contains that substring. It searches from the point
//! just after the previous expectation's match up to now, so consecutive
//! expectations also check order. `absent: true` inverts the check and does
//! not move the search point.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::session::{Services, Session, SessionConfig};
use super::Places;
use crate::asr::{serve_mock, FixtureTable, MockConfig, MockServer};
use crate::bridge::{serve_bridge, Bridge, BridgeClient, BridgeServer, Tablet};
use crate::endpointer::read_wav;
use crate::faces::{serve_faces, FaceClient, FaceRecognizer, FaceService, FacesServer, Gallery, Image};
use crate::geom::Pose2D;
use crate::simworld::{load_map, EventBus, SessionEvent, World, WorldConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("service: {0}")]
    Service(String),
}

fn config(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Config(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub event: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub fields: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default)]
    pub absent: bool,
}

impl Expectation {
    pub fn describe(&self) -> String {
        let mut s = format!("{}{}", if self.absent { "no " } else { "" }, self.event);
        if !self.fields.is_empty() {
            s.push_str(&format!(" {}", serde_json::Value::Object(self.fields.clone())));
        }
        if let Some(c) = &self.contains {
            s.push_str(&format!(" containing {c:?}"));
        }
        s
    }

    pub fn matches(&self, ev: &SessionEvent) -> bool {
        if ev.kind.name() != self.event {
            return false;
        }
        let v = serde_json::to_value(ev).unwrap_or_default();
        if !self.fields.iter().all(|(k, want)| v.get(k).is_some_and(|got| subset(want, got))) {
            return false;
        }
        match &self.contains {
            None => true,
            Some(sub) => v.get("text").and_then(|t| t.as_str()).is_some_and(|t| t.contains(sub.as_str())),
        }
    }
}

/// Objects match when every wanted key matches; anything else must be equal.
fn subset(want: &serde_json::Value, got: &serde_json::Value) -> bool {
    match (want, got) {
        (serde_json::Value::Object(w), serde_json::Value::Object(g)) => {
            w.iter().all(|(k, wv)| g.get(k).is_some_and(|gv| subset(wv, gv)))
        }
        _ => want == got,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "RawStep")]
pub enum Step {
    Touch,
    Face(String),
    Utterance(String),
    TypedInput(String),
    Wait(f64),
    Obstacle { x: f64, y: f64, radius: f64 },
    Expect(Expectation),
}

/// `- touch` or a one-key map such as `- face: alice`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawStep {
    Bare(String),
    Keyed(IndexMap<String, serde_yaml::Value>),
}

impl TryFrom<RawStep> for Step {
    type Error = String;

    fn try_from(raw: RawStep) -> Result<Self, String> {
        let (key, v) = match raw {
            RawStep::Bare(k) if k == "touch" => return Ok(Step::Touch),
            RawStep::Bare(k) => return Err(format!("unknown step {k:?}")),
            RawStep::Keyed(m) if m.len() == 1 => m.into_iter().next().unwrap(),
            RawStep::Keyed(m) => return Err(format!("a step has exactly one key, got {:?}", m.keys().collect::<Vec<_>>())),
        };
        let text = |v: serde_yaml::Value| match v {
            serde_yaml::Value::String(s) => Ok(s),
            serde_yaml::Value::Number(n) => Ok(n.to_string()),
            serde_yaml::Value::Bool(b) => Ok(b.to_string()),
            other => Err(format!("{key}: expected a string, got {other:?}")),
        };
        let de = |e: serde_yaml::Error| format!("{key}: {e}");
        Ok(match key.as_str() {
            "face" => Step::Face(text(v)?),
            "utterance" => Step::Utterance(text(v)?),
            "typed_input" => Step::TypedInput(text(v)?),
            "wait" => Step::Wait(serde_yaml::from_value(v).map_err(de)?),
            "obstacle" => {
                #[derive(Deserialize)]
                struct Ob {
                    x: f64,
                    y: f64,
                    radius: f64,
                }
                let o: Ob = serde_yaml::from_value(v).map_err(de)?;
                Step::Obstacle { x: o.x, y: o.y, radius: o.radius }
            }
            "expect" => Step::Expect(serde_yaml::from_value(v).map_err(de)?),
            other => return Err(format!("unknown step {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub start: Option<[f64; 3]>,
    #[serde(default)]
    pub faces: IndexMap<String, PathBuf>,
    #[serde(default)]
    pub utterances: IndexMap<String, PathBuf>,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn from_yaml(s: &str) -> Result<Self, ScenarioError> {
        serde_yaml::from_str(s).map_err(config)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let s = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub step: Option<usize>,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub events: Vec<SessionEvent>,
    pub results: Vec<ExpectationResult>,
    pub final_pose: Pose2D,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

/// Everything a run needs besides the scenario itself.
#[derive(Clone)]
pub struct RunOptions {
    pub map: PathBuf,
    pub gallery: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub places: Option<PathBuf>,
    /// Directory scenario-relative asset paths resolve against.
    pub base_dir: PathBuf,
    pub seed: u64,
    pub asr: Option<String>,
    pub faces: Option<String>,
    pub bridge: Option<String>,
    pub world: WorldConfig,
    pub session: SessionConfig,
}

impl RunOptions {
    pub fn new(map: &Path, base_dir: &Path) -> Self {
        RunOptions {
            map: map.to_path_buf(),
            gallery: None,
            fixtures: None,
            places: None,
            base_dir: base_dir.to_path_buf(),
            seed: 0,
            asr: None,
            faces: None,
            bridge: None,
            world: WorldConfig::default(),
            session: SessionConfig::default(),
        }
    }
}

struct Assets {
    faces: HashMap<String, Image>,
    audio: HashMap<String, (Vec<i16>, u32)>,
}

fn load_assets(sc: &Scenario, base: &Path) -> Result<Assets, ScenarioError> {
    let mut faces = HashMap::new();
    for (name, rel) in &sc.faces {
        let p = base.join(rel);
        let bytes = std::fs::read(&p).map_err(|e| config(format!("face '{name}' ({}): {e}", p.display())))?;
        let img = Image::from_pgm(&bytes).map_err(|e| config(format!("face '{name}': {e}")))?;
        faces.insert(name.clone(), img);
    }
    let mut audio = HashMap::new();
    for (name, rel) in &sc.utterances {
        let p = base.join(rel);
        let wav = read_wav(&p).map_err(|e| config(format!("utterance '{name}' ({}): {e}", p.display())))?;
        audio.insert(name.clone(), wav);
    }
    for (i, step) in sc.steps.iter().enumerate() {
        match step {
            Step::Face(n) if n != "none" && !faces.contains_key(n) => {
                return Err(config(format!("step {}: unknown face '{n}'", i + 1)))
            }
            Step::Utterance(n) if !audio.contains_key(n) => {
                return Err(config(format!("step {}: unknown utterance '{n}'", i + 1)))
            }
            Step::Wait(s) if !(s.is_finite() && *s >= 0.0) => {
                return Err(config(format!("step {}: wait must be >= 0", i + 1)))
            }
            _ => {}
        }
    }
    Ok(Assets { faces, audio })
}

/// Keeps in-process services alive for the run.
#[derive(Default)]
struct Spawned {
    _asr: Option<MockServer>,
    _faces: Option<FacesServer>,
    _bridge: Option<BridgeServer>,
}

fn services(opts: &RunOptions) -> Result<(Services, Spawned), ScenarioError> {
    let mut spawned = Spawned::default();
    let asr = match &opts.asr {
        Some(a) => std::net::ToSocketAddrs::to_socket_addrs(a.as_str())
            .ok()
            .and_then(|mut it| it.next())
            .ok_or_else(|| config(format!("asr address '{a}' does not resolve")))?,
        None => {
            let fixtures = match &opts.fixtures {
                Some(p) => FixtureTable::load(p).map_err(config)?,
                None => FixtureTable::new(),
            };
            let srv = serve_mock(
                MockConfig {
                    fixtures,
                    ..MockConfig::default()
                },
                "127.0.0.1:0",
            )
            .map_err(|e| ScenarioError::Service(format!("asr: {e}")))?;
            let addr = srv.addr();
            spawned._asr = Some(srv);
            addr
        }
    };
    let faces: Arc<dyn FaceService> = match &opts.faces {
        Some(a) => Arc::new(FaceClient::new(a)),
        None => {
            // the run works on a copy; the gallery file is never modified
            let gallery = match &opts.gallery {
                Some(p) => Gallery::load(p).map_err(config)?,
                None => Gallery::new(),
            };
            let srv = serve_faces(FaceRecognizer::in_memory(gallery), "127.0.0.1:0")
                .map_err(|e| ScenarioError::Service(format!("faces: {e}")))?;
            let client = FaceClient::new(&srv.url());
            spawned._faces = Some(srv);
            Arc::new(client)
        }
    };
    let (tablet, tablet_url): (Arc<dyn Tablet>, String) = match &opts.bridge {
        Some(a) => (Arc::new(BridgeClient::new(a)), a.clone()),
        None => {
            let srv = serve_bridge(Bridge::new(), "127.0.0.1:0", None)
                .map_err(|e| ScenarioError::Service(format!("bridge: {e}")))?;
            let url = srv.url();
            spawned._bridge = Some(srv);
            (Arc::new(BridgeClient::new(&url)), url)
        }
    };
    Ok((
        Services {
            asr,
            faces,
            tablet,
            tablet_url,
        },
        spawned,
    ))
}

fn place_registry(opts: &RunOptions) -> Result<Places, ScenarioError> {
    let path = opts.places.clone().or_else(|| {
        let p = opts.map.parent()?.join("places.yaml");
        p.exists().then_some(p)
    });
    match path {
        Some(p) => Places::load(&p),
        None => Ok(opts.session.places.clone()),
    }
}

/// Runs the script headlessly against a fresh world and returns the event
/// log with a verdict per expectation (plus the session invariants).
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunReport, ScenarioError> {
    let assets = load_assets(sc, &opts.base_dir)?;
    let map = load_map(&opts.map).map_err(config)?;
    let mut session_cfg = opts.session.clone();
    session_cfg.places = place_registry(opts)?;
    let start = sc.start.map(|s| Pose2D::new(s[0], s[1], s[2])).unwrap_or(Pose2D::new(1.0, 1.0, 0.0));
    let world = World::new(map, start, opts.world, opts.seed, EventBus::new()).map_err(config)?;
    let (svc, _spawned) = services(opts)?;
    let mut session = Session::new(world, svc, session_cfg, opts.seed.wrapping_add(1)).map_err(config)?;

    let mut results = Vec::new();
    let mut cursor = 0usize;
    for (i, step) in sc.steps.iter().enumerate() {
        match step {
            Step::Touch => session.touch(),
            Step::Face(n) if n == "none" => session.show_face(None),
            Step::Face(n) => session.show_face(Some((n.clone(), assets.faces[n].clone()))),
            Step::Utterance(n) => {
                let (samples, rate) = &assets.audio[n];
                session.hear(samples, *rate);
            }
            Step::TypedInput(v) => session.type_text(v),
            Step::Wait(s) => session.advance(*s),
            Step::Obstacle { x, y, radius } => session.add_obstacle(*x, *y, *radius),
            Step::Expect(e) => {
                let events = session.events();
                let found = events.iter().enumerate().skip(cursor).find(|(_, ev)| e.matches(ev));
                let (passed, detail) = match (found, e.absent) {
                    (Some((j, _)), false) => {
                        cursor = j + 1;
                        (true, format!("matched event #{j}"))
                    }
                    (None, false) => (false, format!("not found after event #{cursor}")),
                    (Some((j, _)), true) => (false, format!("unexpected event #{j}")),
                    (None, true) => (true, String::new()),
                };
                results.push(ExpectationResult {
                    step: Some(i + 1),
                    description: e.describe(),
                    passed,
                    detail,
                });
            }
        }
    }
    let events = session.events();
    for (name, check) in [
        ("trusted gating", check_gating as fn(&[SessionEvent]) -> Result<(), String>),
        ("led and processing page follow state", check_led_and_processing),
        ("speech mirrored on tablet", check_tts_captions),
    ] {
        let r = check(&events);
        results.push(ExpectationResult {
            step: None,
            description: format!("invariant: {name}"),
            passed: r.is_ok(),
            detail: r.err().unwrap_or_default(),
        });
    }
    Ok(RunReport {
        final_pose: session.world().truth(),
        events,
        results,
    })
}

/// No `executing` event after an `identified` that was unknown, within one
/// interaction (a hand touch starts a new one).
pub fn check_gating(events: &[SessionEvent]) -> Result<(), String> {
    use crate::simworld::EventKind as K;
    let mut trusted = false;
    for (i, ev) in events.iter().enumerate() {
        match &ev.kind {
            K::HandTouched => trusted = false,
            K::Identified { identity } => trusted = identity.is_trusted(),
            K::Executing { .. } if !trusted => {
                return Err(format!("event #{i}: executing without a trusted identification"))
            }
            _ => {}
        }
    }
    Ok(())
}

/// At every state change, the LED blinks iff the session was listening and
/// the processing page is up iff it was processing audio.
pub fn check_led_and_processing(events: &[SessionEvent]) -> Result<(), String> {
    use crate::simworld::EventKind as K;
    let mut state = "idle".to_string();
    let mut led = false;
    let mut processing = false;
    let check = |i: usize, state: &str, led: bool, processing: bool| -> Result<(), String> {
        if led != (state == "listening") {
            return Err(format!("before event #{i}: led active={led} in state {state}"));
        }
        if processing != (state == "processing_audio") {
            return Err(format!("before event #{i}: processing page={processing} in state {state}"));
        }
        Ok(())
    };
    for (i, ev) in events.iter().enumerate() {
        match &ev.kind {
            K::StateChanged { to, .. } => {
                check(i, &state, led, processing)?;
                state = to.clone();
            }
            K::LedState { pattern, .. } => led = pattern != crate::simworld::LED_OFF_PATTERN,
            K::TabletChanged { mode, .. } => processing = mode == "processing",
            _ => {}
        }
    }
    check(events.len(), &state, led, processing)
}

/// Every `tts_said` is followed by a caption with the same text before any
/// other speech.
pub fn check_tts_captions(events: &[SessionEvent]) -> Result<(), String> {
    use crate::simworld::EventKind as K;
    let mut pending: Option<(usize, &str)> = None;
    for (i, ev) in events.iter().enumerate() {
        match &ev.kind {
            K::TtsSaid { text } => {
                if let Some((j, _)) = pending {
                    return Err(format!("speech at event #{j} had no caption"));
                }
                pending = Some((i, text));
            }
            K::TabletChanged { mode, text } if mode == "caption" => {
                if let Some((j, want)) = pending {
                    if text.as_deref() != Some(want) {
                        return Err(format!("caption after event #{j} shows {text:?}, said {want:?}"));
                    }
                    pending = None;
                }
            }
            _ => {}
        }
    }
    match pending {
        Some((j, _)) => Err(format!("speech at event #{j} had no caption")),
        None => Ok(()),
    }
}
