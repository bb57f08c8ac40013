use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::navloop::{navigation_loop, Localizer, NavConfig};
use super::{handle_event, Action, Input, Places, SessionContext, SessionState};
use crate::asr::{match_intent, AsrStream, IntentTable};
use crate::bridge::{Backchannel, Tablet, TabletClient, TabletPage};
use crate::endpointer::{AudioChunk, Decision, EndpointConfig, Endpointer};
use crate::faces::{decide_identity, FaceError, FaceService, Identity, Image, CAPTURE_HEIGHT, CAPTURE_WIDTH, DEFAULT_THRESHOLD};
use crate::geom::VelocityCommand;
use crate::localize::{FilterConfig, ParticleFilter};
use crate::simworld::{EventKind, SessionEvent, World};

/// Where the session's remote services live.
#[derive(Clone)]
pub struct Services {
    pub asr: SocketAddr,
    pub faces: Arc<dyn FaceService>,
    pub tablet: Arc<dyn Tablet>,
    /// Base URL of the tablet UI endpoints, used to play the tablet user.
    pub tablet_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub endpoint: EndpointConfig,
    pub intents: IntentTable,
    pub places: Places,
    pub nav: NavConfig,
    pub filter: FilterConfig,
    /// Localize with the particle filter (otherwise odometry).
    pub use_filter: bool,
    pub face_threshold: f64,
    /// Simulated seconds to wait for a typed name.
    pub input_timeout: f64,
    /// Microphone buffer length (s).
    pub chunk_seconds: f64,
    /// Distance covered by a move command (m).
    pub move_distance: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            endpoint: EndpointConfig::default(),
            intents: IntentTable::default(),
            places: Places::default(),
            nav: NavConfig::default(),
            filter: FilterConfig::default(),
            use_filter: true,
            face_threshold: DEFAULT_THRESHOLD,
            input_timeout: 30.0,
            chunk_seconds: 0.1,
            move_distance: 0.5,
        }
    }
}

struct Recording {
    endpointer: Endpointer,
    stream: AsrStream,
}

struct NameRequest {
    backchannel: Backchannel,
    since: f64,
}

/// Runtime around the pure state machine: executes actions against the
/// world and services and feeds their results back in as inputs.
pub struct Session {
    ctx: SessionContext,
    world: World,
    services: Services,
    cfg: SessionConfig,
    localizer: Localizer,
    queue: VecDeque<Input>,
    recording: Option<Recording>,
    name_request: Option<NameRequest>,
    tablet_page: TabletPage,
    ui: TabletClient,
}

impl Session {
    pub fn new(world: World, services: Services, cfg: SessionConfig, seed: u64) -> Result<Self, String> {
        let localizer = if cfg.use_filter {
            let f = ParticleFilter::new(world.map(), cfg.filter, world.odom(), seed).map_err(|e| e.to_string())?;
            Localizer::Filter(Box::new(f))
        } else {
            Localizer::Odometry
        };
        let ui = TabletClient::new(&services.tablet_url);
        Ok(Session {
            ctx: SessionContext::default(),
            world,
            services,
            cfg,
            localizer,
            queue: VecDeque::new(),
            recording: None,
            name_request: None,
            tablet_page: TabletPage::Blank,
            ui,
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.ctx.state
    }

    pub fn context(&self) -> &SessionContext {
        &self.ctx
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn events(&self) -> Vec<SessionEvent> {
        self.world.bus().history()
    }

    fn emit(&self, kind: EventKind) {
        self.world.emit(kind);
    }

    /// Brings the tablet clock to the world clock, reporting caption expiry.
    fn sync_clock(&mut self) {
        match self.services.tablet.advance_to(self.world.clock()) {
            Ok(page) => self.note_page(page),
            Err(e) => log::warn!("tablet clock: {e}"),
        }
        if let Some(req) = &self.name_request {
            if self.world.clock() - req.since >= self.cfg.input_timeout && self.ctx.state == SessionState::AwaitingName {
                self.queue.push_back(Input::InputTimeout);
                self.drain();
            }
        }
    }

    fn note_page(&mut self, page: TabletPage) {
        if page != self.tablet_page {
            self.emit(EventKind::TabletChanged {
                mode: page.mode().to_string(),
                text: page.text().map(str::to_string),
            });
            self.tablet_page = page;
        }
    }

    fn tablet(&mut self, f: impl FnOnce(&dyn Tablet) -> Result<TabletPage, crate::bridge::BridgeError>) {
        match f(self.services.tablet.as_ref()) {
            Ok(page) => {
                // a re-shown identical caption is still an update
                if page == self.tablet_page {
                    self.tablet_page = TabletPage::Blank;
                }
                self.note_page(page)
            }
            Err(e) => {
                log::warn!("tablet: {e}");
                self.emit(EventKind::ServiceError {
                    service: "bridge".into(),
                    message: e.to_string(),
                });
            }
        }
    }

    /// Feeds one input and everything it causes.
    pub fn inject(&mut self, input: Input) {
        self.queue.push_back(input);
        self.drain();
    }

    fn drain(&mut self) {
        while let Some(input) = self.queue.pop_front() {
            let (next, actions) = handle_event(&self.ctx, &input);
            if next.state != self.ctx.state {
                self.emit(EventKind::StateChanged {
                    from: self.ctx.state.name().into(),
                    to: next.state.name().into(),
                });
            }
            self.ctx = next;
            for a in actions {
                self.perform(a);
            }
        }
    }

    fn fail(&mut self, service: &str, message: String) {
        log::warn!("{service}: {message}");
        self.emit(EventKind::ServiceError {
            service: service.into(),
            message: message.clone(),
        });
        self.queue.push_back(Input::ServiceFailed {
            service: service.into(),
            message,
        });
    }

    fn perform(&mut self, action: Action) {
        match action {
            Action::LedBlink => self.world.led_blink_on(),
            Action::LedOff => self.world.led_off(),
            Action::StartListening => match (Endpointer::new(self.cfg.endpoint), AsrStream::connect(self.services.asr)) {
                (Ok(endpointer), Ok(stream)) => self.recording = Some(Recording { endpointer, stream }),
                (Err(e), _) => self.fail("endpointer", e.to_string()),
                (_, Err(e)) => self.fail("asr", e.to_string()),
            },
            Action::FinishListening => {
                let Some(rec) = self.recording.take() else {
                    self.fail("asr", "no recording in progress".into());
                    return;
                };
                match rec.stream.finish() {
                    Ok(t) => {
                        let intent = match_intent(&t, &self.cfg.intents).kind;
                        self.emit(EventKind::Transcribed { text: t.text.clone() });
                        self.emit(EventKind::IntentRecognized { intent: intent.clone() });
                        self.queue.push_back(Input::Transcribed { text: t.text, intent });
                    }
                    Err(e) => self.fail("asr", e.to_string()),
                }
            }
            Action::ShowProcessing => self.tablet(|t| t.show_processing()),
            Action::ClearTablet => self.tablet(|t| t.clear()),
            Action::Say { text } => {
                self.world.say(&text);
                self.tablet(|t| t.show_caption(&text));
            }
            Action::IdentifySpeaker => {
                let Some(img) = self.capture() else { return };
                match self.services.faces.query(&img) {
                    Ok(scores) => self.identified(decide_identity(&scores, self.cfg.face_threshold)),
                    // nobody in view is nobody we know
                    Err(FaceError::NoFace) => self.identified(Identity::Unknown),
                    Err(e) => self.fail("faces", e.to_string()),
                }
            }
            Action::Execute { intent } => self.emit(EventKind::Executing { intent }),
            Action::PerformHug => {
                self.emit(EventKind::HugPerformed);
                self.queue.push_back(Input::ActionDone);
            }
            Action::Refuse => {
                self.emit(EventKind::Refused);
                self.queue.push_back(Input::ActionDone);
            }
            Action::Navigate { place } => self.navigate(place),
            Action::MoveBase { direction } => {
                self.move_base(&direction);
                self.queue.push_back(Input::ActionDone);
            }
            Action::RequestName { prompt } => {
                let bc = match Backchannel::open() {
                    Ok(b) => b,
                    Err(e) => return self.fail("bridge", e.to_string()),
                };
                if let Err(e) = self.services.tablet.set_backchannel(Some(bc.addr())) {
                    return self.fail("bridge", e.to_string());
                }
                self.name_request = Some(NameRequest {
                    backchannel: bc,
                    since: self.world.clock(),
                });
                self.tablet(|t| t.show_input(&prompt));
            }
            Action::CancelNameRequest => self.close_name_request(),
            Action::EnrollFace { label } => {
                let Some(img) = self.capture() else { return };
                match self.services.faces.enroll(&img, &label) {
                    Ok(entry_id) => {
                        self.emit(EventKind::Enrolled {
                            label: label.clone(),
                            entry_id: entry_id.clone(),
                        });
                        self.queue.push_back(Input::Enrolled { label, entry_id });
                    }
                    Err(e) => self.fail("faces", e.to_string()),
                }
            }
        }
    }

    fn identified(&mut self, identity: Identity) {
        self.emit(EventKind::Identified {
            identity: identity.clone(),
        });
        self.queue.push_back(Input::Identified { identity });
    }

    fn capture(&mut self) -> Option<Image> {
        match self.world.capture_picture(CAPTURE_WIDTH, CAPTURE_HEIGHT) {
            Ok((_, img)) => Some(img),
            Err(e) => {
                self.fail("camera", e.to_string());
                None
            }
        }
    }

    fn close_name_request(&mut self) {
        if self.name_request.take().is_some() {
            if let Err(e) = self.services.tablet.set_backchannel(None) {
                log::warn!("bridge: {e}");
            }
        }
    }

    fn navigate(&mut self, place: String) {
        let Some(goal) = self.cfg.places.resolve(&place) else {
            self.emit(EventKind::Aborted {
                reason: format!("unknown place '{place}'"),
            });
            self.queue.push_back(Input::NavDone { arrived: false, place });
            return;
        };
        let base = self.world.map().clone();
        let report = navigation_loop(
            goal,
            Some(&place),
            &mut self.world,
            &mut self.localizer,
            &base,
            &self.cfg.nav,
            &mut |_, _| {},
        );
        self.sync_tablet_only();
        self.queue.push_back(Input::NavDone {
            arrived: report.arrived(),
            place,
        });
    }

    fn move_base(&mut self, direction: &str) {
        let v = 0.25;
        let (vx, vy) = match direction {
            "forward" | "ahead" => (v, 0.0),
            "back" | "backward" | "backwards" => (-v, 0.0),
            "left" => (0.0, v),
            "right" => (0.0, -v),
            _ => {
                log::info!("unknown direction '{direction}'");
                return;
            }
        };
        let dt = self.cfg.nav.dt;
        let n = (self.cfg.move_distance / v / dt).round() as usize;
        for _ in 0..n {
            match self.world.step(&VelocityCommand::new(vx, vy, 0.0), dt) {
                Ok(out) => {
                    if let Localizer::Filter(f) = &mut self.localizer {
                        f.step(&out.odom_delta, &self.world.sense());
                    }
                    if out.halted {
                        break;
                    }
                }
                Err(e) => {
                    log::warn!("move: {e}");
                    break;
                }
            }
        }
        self.sync_tablet_only();
    }

    fn sync_tablet_only(&mut self) {
        match self.services.tablet.advance_to(self.world.clock()) {
            Ok(page) => self.note_page(page),
            Err(e) => log::warn!("tablet clock: {e}"),
        }
    }

    // ---- stimuli ----

    /// Someone touches the robot's hand.
    pub fn touch(&mut self) {
        self.world.touch_hand();
        self.inject(Input::HandTouched);
    }

    pub fn show_face(&mut self, face: Option<(String, Image)>) {
        self.world.set_scene(face);
    }

    /// Plays audio into the microphone. Ignored unless listening; buffers
    /// are fed in order until the endpointer stops the recording, or the
    /// audio runs out.
    pub fn hear(&mut self, samples: &[i16], sample_rate: u32) {
        if self.ctx.state != SessionState::Listening || self.recording.is_none() {
            log::info!("not listening; {} samples dropped", samples.len());
            self.advance(samples.len() as f64 / sample_rate as f64);
            return;
        }
        let start = self.world.clock();
        let chunk_len = ((self.cfg.chunk_seconds * sample_rate as f64).round() as usize).max(1);
        let mut offset = 0usize;
        let mut stop_time = None;
        while offset < samples.len() {
            let end = (offset + chunk_len).min(samples.len());
            let chunk = AudioChunk::new(samples[offset..end].to_vec(), sample_rate, offset as f64 / sample_rate as f64);
            let rec = self.recording.as_mut().expect("recording");
            let decision = match rec.endpointer.feed(&chunk) {
                Ok(d) => d,
                Err(e) => {
                    self.recording = None;
                    self.fail("endpointer", e.to_string());
                    self.drain();
                    return;
                }
            };
            // only audio before the stop point goes to the recognizer
            let keep = match (decision, rec.endpointer.stop_sample()) {
                (Decision::Stop { .. }, Some(s)) => (s as usize).saturating_sub(offset).min(end - offset),
                _ => end - offset,
            };
            if keep > 0 {
                let part = AudioChunk::new(samples[offset..offset + keep].to_vec(), sample_rate, chunk.start_time);
                if let Err(e) = rec.stream.send(&part) {
                    self.recording = None;
                    self.fail("asr", e.to_string());
                    self.drain();
                    return;
                }
            }
            self.world.advance_to(start + end as f64 / sample_rate as f64);
            self.sync_clock();
            if let Decision::Stop { stop_time: t } = decision {
                stop_time = Some(t);
                break;
            }
            offset = end;
        }
        let stop_time = stop_time.unwrap_or(samples.len() as f64 / sample_rate as f64);
        self.emit(EventKind::EndpointStop { stop_time });
        self.inject(Input::EndpointStop { stop_time });
    }

    /// Plays the tablet user: types `value` and presses confirm, then
    /// collects it from the back-channel.
    pub fn type_text(&mut self, value: &str) {
        if let Err(e) = self.ui.submit(value) {
            log::info!("typed input not accepted: {e}");
            return;
        }
        let Some(req) = self.name_request.take() else {
            return;
        };
        let got = req.backchannel.recv_timeout(Duration::from_secs(5));
        if let Err(e) = self.services.tablet.set_backchannel(None) {
            log::warn!("bridge: {e}");
        }
        match got {
            Ok(Some(msg)) => {
                self.emit(EventKind::TextInput { value: msg.value.clone() });
                self.inject(Input::TextInput { value: msg.value });
            }
            Ok(None) => {
                self.fail("bridge", "no back-channel message".into());
                self.drain();
            }
            Err(e) => {
                self.fail("bridge", e.to_string());
                self.drain();
            }
        }
    }

    /// Lets simulated time pass.
    pub fn advance(&mut self, seconds: f64) {
        let end = self.world.clock() + seconds.max(0.0);
        // step in LED half-periods so timeouts and toggles land in order
        while self.world.clock() < end {
            let t = (self.world.clock() + 0.25).min(end);
            self.world.advance_to(t);
            self.sync_clock();
        }
    }

    pub fn add_obstacle(&mut self, x: f64, y: f64, radius: f64) {
        self.world.add_obstacle(x, y, radius);
    }
}
