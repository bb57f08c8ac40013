//! Deterministic generator for the bundled demo: map, places, faces,
//! utterance audio, recognizer fixtures, gallery, and the scenario script.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScenarioError;
use crate::asr::FixtureTable;
use crate::endpointer::{endpoint_samples, samples_to_bytes, write_wav, EndpointConfig, DEFAULT_SAMPLE_RATE};
use crate::faces::{FaceRecognizer, Image, CAPTURE_HEIGHT, CAPTURE_WIDTH, EMBED_GRID};
use crate::geom::OccupancyGrid;
use crate::simworld::save_map;

pub struct FaceSpec {
    pub name: &'static str,
    /// Seeds the facial pattern; captures of one person share it.
    pub identity_seed: u64,
    pub capture_seed: u64,
    pub x: u32,
    pub y: u32,
    pub block: u32,
}

pub struct UtteranceSpec {
    pub name: &'static str,
    pub text: &'static str,
    pub speech_seconds: f64,
    pub tone_hz: f64,
}

pub const DEMO_FACES: &[FaceSpec] = &[
    FaceSpec { name: "alice", identity_seed: 11, capture_seed: 101, x: 250, y: 140, block: 10 },
    FaceSpec { name: "bob", identity_seed: 22, capture_seed: 202, x: 220, y: 120, block: 11 },
    FaceSpec { name: "carol", identity_seed: 33, capture_seed: 303, x: 270, y: 150, block: 9 },
];

/// Alice's enrollment picture, taken on another day.
const ALICE_ENROLLMENT: FaceSpec = FaceSpec { name: "alice", identity_seed: 11, capture_seed: 111, x: 300, y: 180, block: 8 };

pub const DEMO_UTTERANCES: &[UtteranceSpec] = &[
    UtteranceSpec { name: "mumble", text: "hmm could you maybe uh", speech_seconds: 1.1, tone_hz: 180.0 },
    UtteranceSpec { name: "hug", text: "give me a hug", speech_seconds: 1.3, tone_hz: 220.0 },
    UtteranceSpec { name: "add_person", text: "please add a new person", speech_seconds: 1.6, tone_hz: 260.0 },
    UtteranceSpec { name: "goto_kitchen", text: "go to the kitchen", speech_seconds: 1.4, tone_hz: 300.0 },
];

pub const DEMO_START: [f64; 3] = [3.0, 3.0, 0.0];

/// Paths of the generated files.
#[derive(Debug, Clone)]
pub struct DemoAssets {
    pub dir: PathBuf,
    pub map: PathBuf,
    pub places: PathBuf,
    pub gallery: PathBuf,
    pub fixtures: PathBuf,
    pub scenario: PathBuf,
}

/// 20 x 20 m floor at 5 cm: four rooms, doorways, some furniture.
pub fn demo_map() -> OccupancyGrid {
    let res = 0.05;
    let n = 400;
    let mut mask = vec![false; n * n];
    let mut fill = |x0: f64, y0: f64, x1: f64, y1: f64| {
        let c0 = (x0 / res).round() as usize;
        let c1 = ((x1 / res).round() as usize).min(n);
        let r0 = (y0 / res).round() as usize;
        let r1 = ((y1 / res).round() as usize).min(n);
        for r in r0..r1 {
            for c in c0..c1 {
                mask[r * n + c] = true;
            }
        }
    };
    // outer walls
    fill(0.0, 0.0, 20.0, 0.2);
    fill(0.0, 19.8, 20.0, 20.0);
    fill(0.0, 0.0, 0.2, 20.0);
    fill(19.8, 0.0, 20.0, 20.0);
    // east-west wall at y = 10 with two doorways
    fill(0.0, 9.9, 3.5, 10.1);
    fill(5.5, 9.9, 14.0, 10.1);
    fill(16.0, 9.9, 20.0, 10.1);
    // north-south wall between the upper rooms, doorway at y 14..16
    fill(9.9, 10.0, 10.1, 14.0);
    fill(9.9, 16.0, 10.1, 20.0);
    // stub wall in the lower hall
    fill(9.9, 0.0, 10.1, 4.0);
    // furniture
    fill(6.0, 6.0, 7.5, 7.0);
    fill(14.0, 2.0, 15.0, 3.5);
    fill(17.0, 17.0, 19.8, 18.0);
    fill(2.0, 12.0, 2.5, 16.0);
    fill(12.0, 12.0, 13.0, 13.0);
    OccupancyGrid::from_mask(n, n, res, &mask)
}

pub const PLACES_YAML: &str = "\
places:
  entrance: [3.0, 3.0, 0.0]
  kitchen: [15.0, 14.0, 1.5707963267948966]
  office: [5.0, 15.0, 0.0]
  lab: [15.0, 6.0, 0.0]
";

/// A bright textured block on a dark noisy background.
pub fn face_capture(spec: &FaceSpec) -> Image {
    let mut id_rng = ChaCha8Rng::seed_from_u64(spec.identity_seed);
    let pattern: Vec<u8> = (0..EMBED_GRID * EMBED_GRID).map(|_| id_rng.random_range(140..=250)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.capture_seed);
    let mut img = Image::blank(CAPTURE_WIDTH, CAPTURE_HEIGHT);
    for y in 0..CAPTURE_HEIGHT {
        for x in 0..CAPTURE_WIDTH {
            img.set(x, y, rng.random_range(10..=40));
        }
    }
    let side = EMBED_GRID as u32 * spec.block;
    for dy in 0..side {
        for dx in 0..side {
            let p = pattern[((dy / spec.block) * EMBED_GRID as u32 + dx / spec.block) as usize] as i32;
            let v = (p + rng.random_range(-5..=5)).clamp(130, 255);
            img.set(spec.x + dx, spec.y + dy, v as u8);
        }
    }
    img
}

/// Quiet room tone, a voiced stretch, then quieter tail so the endpointer
/// stops about a second after speech ends.
pub fn utterance_audio(spec: &UtteranceSpec, seed: u64) -> Vec<i16> {
    let rate = DEFAULT_SAMPLE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lead = (0.4 * rate) as usize;
    let speech = (spec.speech_seconds * rate) as usize;
    let tail = (1.8 * rate) as usize;
    let mut out = Vec::with_capacity(lead + speech + tail);
    for _ in 0..lead {
        out.push(rng.random_range(-200i16..=200));
    }
    for i in 0..speech {
        let t = i as f64 / rate;
        let env = (PI * i as f64 / speech as f64).sin();
        let v = 6000.0 * env * (2.0 * PI * spec.tone_hz * t).sin() + rng.random_range(-200.0..=200.0);
        out.push(v.round() as i16);
    }
    for _ in 0..tail {
        out.push(rng.random_range(-150i16..=150));
    }
    out
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> ScenarioError + '_ {
    move |e| ScenarioError::Config(format!("{}: {e}", path.display()))
}

fn cfg_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Config(e.to_string())
}

pub fn demo_scenario_yaml() -> String {
    let mut s = String::new();
    s.push_str("# Replays the greeter demonstration: an enrolled user is asked to rephrase,\n");
    s.push_str("# then gets a hug; a stranger is refused; the enrolled user adds Carol via\n");
    s.push_str("# the tablet; Carol's hug request succeeds; Carol sends the robot to the kitchen.\n");
    s.push_str("name: demonstration\n");
    s.push_str(&format!("start: [{:.1}, {:.1}, {:.1}]\n", DEMO_START[0], DEMO_START[1], DEMO_START[2]));
    s.push_str("faces:\n");
    for f in DEMO_FACES {
        s.push_str(&format!("  {0}: faces/{0}.pgm\n", f.name));
    }
    s.push_str("utterances:\n");
    for u in DEMO_UTTERANCES {
        s.push_str(&format!("  {0}: audio/{0}.wav\n", u.name));
    }
    s.push_str(
        r#"steps:
  # Alice is enrolled; her first request is not understood
  - face: alice
  - touch
  - expect: {event: led_state, fields: {pattern: blink-blue-green, lit: true}}
  - utterance: mumble
  - expect: {event: endpoint_stop}
  - expect: {event: tablet_changed, fields: {mode: processing, text: Processing audio input}}
  - expect: {event: tts_said, contains: rephrase}
  - expect: {event: identified, absent: true}
  - wait: 1.0
  # she tries again
  - touch
  - utterance: hug
  - expect: {event: identified, fields: {identity: {identity: known, label: Alice}}}
  - expect: {event: executing, fields: {intent: {kind: hug}}}
  - expect: {event: tts_said, contains: "hug for you, Alice"}
  - expect: {event: hug_performed}
  - wait: 2.0
  # a stranger asks for the same
  - face: bob
  - touch
  - utterance: hug
  - expect: {event: identified, fields: {identity: {identity: unknown}}}
  - expect: {event: refused}
  - expect: {event: executing, absent: true}
  - expect: {event: tts_said, contains: only take commands}
  - wait: 2.0
  # Alice adds Carol through the tablet
  - face: alice
  - touch
  - utterance: add_person
  - expect: {event: identified, fields: {identity: {identity: known, label: Alice}}}
  - expect: {event: tablet_changed, fields: {mode: input}}
  - wait: 3.0
  - face: carol
  - typed_input: Carol
  - expect: {event: text_input, fields: {value: Carol}}
  - expect: {event: picture_taken}
  - expect: {event: enrolled, fields: {label: Carol}}
  - expect: {event: tts_said, contains: "Nice to meet you, Carol"}
  - wait: 2.0
  # Carol is now trusted
  - touch
  - utterance: hug
  - expect: {event: identified, fields: {identity: {identity: known, label: Carol}}}
  - expect: {event: executing, fields: {intent: {kind: hug}}}
  - expect: {event: hug_performed}
  - wait: 2.0
  # and sends the robot to the kitchen
  - touch
  - utterance: goto_kitchen
  - expect: {event: executing, fields: {intent: {kind: go_to, place: kitchen}}}
  - expect: {event: nav_goal, fields: {place: kitchen}}
  - expect: {event: arrived}
  - expect: {event: aborted, absent: true}
  - expect: {event: tts_said, contains: arrived at the kitchen}
  # the caption goes away after ten seconds
  - wait: 10.0
  - expect: {event: tablet_changed, fields: {mode: blank}}
"#,
    );
    s
}

/// Writes the demo bundle into `dir` and returns the file paths. Output is
/// byte-identical across runs.
pub fn generate_demo_assets(dir: &Path) -> Result<DemoAssets, ScenarioError> {
    std::fs::create_dir_all(dir.join("faces")).map_err(io(dir))?;
    std::fs::create_dir_all(dir.join("audio")).map_err(io(dir))?;

    let map = dir.join("map.yaml");
    save_map(&demo_map(), &map).map_err(cfg_err)?;
    let places = dir.join("places.yaml");
    std::fs::write(&places, PLACES_YAML).map_err(io(&places))?;

    for f in DEMO_FACES {
        let p = dir.join(format!("faces/{}.pgm", f.name));
        std::fs::write(&p, face_capture(f).to_pgm()).map_err(io(&p))?;
    }
    let gallery = dir.join("gallery.json");
    let rec = FaceRecognizer::in_memory(crate::faces::Gallery::new());
    rec.enroll_at(&face_capture(&ALICE_ENROLLMENT), "Alice", 0.0).map_err(cfg_err)?;
    std::fs::write(&gallery, rec.snapshot().to_json()).map_err(io(&gallery))?;

    let mut table = FixtureTable::new();
    for (i, u) in DEMO_UTTERANCES.iter().enumerate() {
        let samples = utterance_audio(u, 1000 + i as u64);
        let p = dir.join(format!("audio/{}.wav", u.name));
        write_wav(&p, &samples, DEFAULT_SAMPLE_RATE).map_err(cfg_err)?;
        // the recognizer hears exactly what the endpointer lets through
        let cut = endpoint_samples(&samples, DEFAULT_SAMPLE_RATE, &EndpointConfig::default()).map_err(cfg_err)?;
        table.insert_audio(&samples_to_bytes(&cut.samples), u.text);
    }
    let fixtures = dir.join("fixtures.json");
    std::fs::write(&fixtures, table.to_json()).map_err(io(&fixtures))?;

    let scenario = dir.join("demo.yaml");
    std::fs::write(&scenario, demo_scenario_yaml()).map_err(io(&scenario))?;
    Ok(DemoAssets {
        dir: dir.to_path_buf(),
        map,
        places,
        gallery,
        fixtures,
        scenario,
    })
}
