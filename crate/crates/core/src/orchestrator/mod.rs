//! Session state machine and the scenario runner that drives it against the
//! simulated robot.

mod fixtures;
mod navloop;
mod scenario;
mod session;

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::asr::IntentKind;
use crate::faces::Identity;
use crate::geom::Pose2D;

pub use fixtures::{generate_demo_assets, DemoAssets, FaceSpec, UtteranceSpec};
pub use navloop::{navigation_loop, Localizer, NavConfig, NavOutcome, NavReport, PlanRecord};
pub use scenario::{
    check_gating, check_led_and_processing, check_tts_captions, run_scenario, Expectation, ExpectationResult,
    RunOptions, RunReport, Scenario, ScenarioError, Step,
};
pub use session::{Services, Session, SessionConfig};

pub const REPHRASE_TEXT: &str = "Sorry, I did not understand. Could you rephrase your request?";
pub const REFUSAL_TEXT: &str = "Sorry, I only take commands from people I know.";
pub const NAME_PROMPT: &str = "Please type the name of the new person on my tablet.";
pub const NO_NAME_TEXT: &str = "I did not get a name, so I will not add anyone.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Listening,
    ProcessingAudio,
    Identifying,
    Executing { intent: IntentKind },
    AwaitingName,
    AwaitingPicture,
    Refusing,
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::Listening => "listening",
            SessionState::ProcessingAudio => "processing_audio",
            SessionState::Identifying => "identifying",
            SessionState::Executing { .. } => "executing",
            SessionState::AwaitingName => "awaiting_name",
            SessionState::AwaitingPicture => "awaiting_picture",
            SessionState::Refusing => "refusing",
        }
    }
}

/// State plus what the session has learned in the current interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub state: SessionState,
    pub transcript: Option<String>,
    pub intent: Option<IntentKind>,
    pub identity: Option<Identity>,
    pub pending_label: Option<String>,
}

impl Default for SessionContext {
    fn default() -> Self {
        SessionContext {
            state: SessionState::Idle,
            transcript: None,
            intent: None,
            identity: None,
            pending_label: None,
        }
    }
}

/// Observations and service completions fed to the state machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum Input {
    HandTouched,
    EndpointStop { stop_time: f64 },
    Transcribed { text: String, intent: IntentKind },
    Identified { identity: Identity },
    TextInput { value: String },
    InputTimeout,
    Enrolled { label: String, entry_id: String },
    /// A hug, move, or refusal finished.
    ActionDone,
    NavDone { arrived: bool, place: String },
    ServiceFailed { service: String, message: String },
}

/// Effects requested by a transition, executed in order by the runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    LedBlink,
    LedOff,
    /// Start recorder, endpointer, and ASR stream.
    StartListening,
    /// Send the final ASR frame and collect the transcript.
    FinishListening,
    ShowProcessing,
    ClearTablet,
    /// Speech, mirrored as a tablet caption.
    Say { text: String },
    /// Capture a picture and query the face service.
    IdentifySpeaker,
    Execute { intent: IntentKind },
    PerformHug,
    Navigate { place: String },
    MoveBase { direction: String },
    Refuse,
    RequestName { prompt: String },
    CancelNameRequest,
    /// Capture a picture and enroll it under `label`.
    EnrollFace { label: String },
}

fn say(text: impl Into<String>) -> Action {
    Action::Say { text: text.into() }
}

fn to_idle(actions: Vec<Action>) -> (SessionContext, Vec<Action>) {
    (SessionContext::default(), actions)
}

/// The transition function. Total: inputs that mean nothing in the current
/// state leave it unchanged with no actions.
pub fn handle_event(s: &SessionContext, input: &Input) -> (SessionContext, Vec<Action>) {
    use SessionState as S;
    let stay = || (s.clone(), Vec::new());
    let with = |state: SessionState| SessionContext { state, ..s.clone() };
    match (&s.state, input) {
        (S::Idle, Input::HandTouched) => (
            SessionContext {
                state: S::Listening,
                ..SessionContext::default()
            },
            vec![Action::LedBlink, Action::StartListening],
        ),
        (S::Listening, Input::EndpointStop { .. }) => (
            with(S::ProcessingAudio),
            vec![Action::LedOff, Action::ShowProcessing, Action::FinishListening],
        ),
        (S::ProcessingAudio, Input::Transcribed { text, intent }) => {
            if *intent == IntentKind::Unknown {
                return to_idle(vec![Action::ClearTablet, say(REPHRASE_TEXT)]);
            }
            let next = SessionContext {
                state: S::Identifying,
                transcript: Some(text.clone()),
                intent: Some(intent.clone()),
                ..s.clone()
            };
            (next, vec![Action::ClearTablet, Action::IdentifySpeaker])
        }
        (S::Identifying, Input::Identified { identity }) => {
            let known = SessionContext {
                identity: Some(identity.clone()),
                ..s.clone()
            };
            let Identity::Known { label, .. } = identity else {
                return (
                    SessionContext {
                        state: S::Refusing,
                        ..known
                    },
                    vec![Action::Refuse, say(REFUSAL_TEXT)],
                );
            };
            let intent = s.intent.clone().unwrap_or(IntentKind::Unknown);
            let exec = |extra: Vec<Action>| {
                let mut a = vec![Action::Execute { intent: intent.clone() }];
                a.extend(extra);
                (
                    SessionContext {
                        state: S::Executing { intent: intent.clone() },
                        ..known.clone()
                    },
                    a,
                )
            };
            match &intent {
                IntentKind::Hug => exec(vec![say(format!("Here is a hug for you, {label}!")), Action::PerformHug]),
                IntentKind::GoTo { place } => exec(vec![
                    say(format!("On my way to the {place}.")),
                    Action::Navigate { place: place.clone() },
                ]),
                IntentKind::Move { direction } => exec(vec![
                    say(format!("Moving {direction}.")),
                    Action::MoveBase {
                        direction: direction.clone(),
                    },
                ]),
                IntentKind::Enroll => (
                    SessionContext {
                        state: S::AwaitingName,
                        ..known
                    },
                    vec![
                        say(NAME_PROMPT),
                        Action::RequestName {
                            prompt: "Name of the new person".into(),
                        },
                    ],
                ),
                IntentKind::Unknown => to_idle(vec![say(REPHRASE_TEXT)]),
            }
        }
        (S::Refusing, Input::ActionDone) => to_idle(Vec::new()),
        (S::Executing { .. }, Input::ActionDone) => to_idle(Vec::new()),
        (S::Executing { .. }, Input::NavDone { arrived, place }) => to_idle(vec![say(if *arrived {
            format!("I have arrived at the {place}.")
        } else {
            format!("Sorry, I could not reach the {place}.")
        })]),
        (S::AwaitingName, Input::TextInput { value }) => {
            let name = value.trim();
            if name.is_empty() {
                return to_idle(vec![say(NO_NAME_TEXT)]);
            }
            (
                SessionContext {
                    state: S::AwaitingPicture,
                    pending_label: Some(name.to_string()),
                    ..s.clone()
                },
                vec![
                    say(format!("Thank you. {name}, please look at me while I take your picture.")),
                    Action::EnrollFace { label: name.to_string() },
                ],
            )
        }
        (S::AwaitingName, Input::InputTimeout) => to_idle(vec![Action::CancelNameRequest, say(NO_NAME_TEXT)]),
        (S::AwaitingPicture, Input::Enrolled { label, .. }) => to_idle(vec![say(format!("Nice to meet you, {label}!"))]),
        (state, Input::ServiceFailed { service, .. }) => {
            let mut a = Vec::new();
            match state {
                S::Listening => a.push(Action::LedOff),
                S::ProcessingAudio => a.push(Action::ClearTablet),
                S::AwaitingName => a.push(Action::CancelNameRequest),
                _ => {}
            }
            a.push(say(format!("Sorry, my {service} service is not working right now.")));
            to_idle(a)
        }
        _ => stay(),
    }
}

/// Spoken destination names to poses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Places {
    pub places: IndexMap<String, [f64; 3]>,
}

impl Places {
    pub fn from_yaml(s: &str) -> Result<Self, serde_yaml::Error> {
        serde_yaml::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let s = std::fs::read_to_string(path).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&s).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, name: &str) -> Option<Pose2D> {
        let key = name.trim().to_lowercase();
        self.places
            .iter()
            .find(|(k, _)| k.to_lowercase() == key)
            .map(|(_, p)| Pose2D::new(p[0], p[1], p[2]))
    }
}
