mod common;

use std::path::Path;

use greeter::orchestrator::{generate_demo_assets, run_scenario, RunOptions, RunReport, Scenario, ScenarioError};

fn demo_options(seed: u64) -> RunOptions {
    let dir = common::demo_dir();
    let mut o = RunOptions::new(&dir.join("map.yaml"), &dir);
    o.gallery = Some(dir.join("gallery.json"));
    o.fixtures = Some(dir.join("fixtures.json"));
    o.seed = seed;
    o
}

fn run_yaml(yaml: &str, seed: u64) -> Result<RunReport, ScenarioError> {
    run_scenario(&Scenario::from_yaml(yaml).unwrap(), &demo_options(seed))
}

fn failures(r: &RunReport) -> Vec<String> {
    r.results.iter().filter(|x| !x.passed).map(|x| format!("{} {}", x.description, x.detail)).collect()
}

#[test]
fn bundled_demo_passes_and_is_deterministic() {
    let sc = Scenario::load(&common::demo_dir().join("demo.yaml")).unwrap();
    let a = run_scenario(&sc, &demo_options(7)).unwrap();
    assert!(a.passed(), "{:#?}", failures(&a));
    let b = run_scenario(&sc, &demo_options(7)).unwrap();
    let json = |r: &RunReport| r.events.iter().map(|e| serde_json::to_string(e).unwrap()).collect::<Vec<_>>();
    assert_eq!(json(&a), json(&b));
}

#[test]
fn generator_reproduces_bundled_assets() {
    let dir = tempfile::tempdir().unwrap();
    generate_demo_assets(dir.path()).unwrap();
    let bundled = common::demo_dir();
    let mut n = 0;
    for rel in [
        "map.yaml",
        "map.pgm",
        "places.yaml",
        "gallery.json",
        "fixtures.json",
        "demo.yaml",
        "faces/alice.pgm",
        "faces/bob.pgm",
        "faces/carol.pgm",
        "audio/mumble.wav",
        "audio/hug.wav",
        "audio/add_person.wav",
        "audio/goto_kitchen.wav",
    ] {
        let read = |d: &Path| std::fs::read(d.join(rel)).unwrap();
        assert!(read(dir.path()) == read(&bundled), "{rel} differs from the bundled copy");
        n += 1;
    }
    assert_eq!(n, 13);
}

#[test]
fn empty_scenario_passes_vacuously() {
    let r = run_yaml("name: nothing\nsteps: []\n", 1).unwrap();
    assert!(r.passed());
    // only the three log invariants
    assert_eq!(r.results.len(), 3);
}

#[test]
fn wrong_expectation_fails() {
    let yaml = "\
faces: {bob: faces/bob.pgm}
utterances: {hug: audio/hug.wav}
steps:
  - face: bob
  - touch
  - utterance: hug
  - expect: {event: hug_performed}
";
    let r = run_yaml(yaml, 1).unwrap();
    assert!(!r.passed());
    assert_eq!(failures(&r).len(), 1);
}

#[test]
fn absent_expectation_detects_presence() {
    let yaml = "\
faces: {alice: faces/alice.pgm}
utterances: {hug: audio/hug.wav}
steps:
  - face: alice
  - touch
  - utterance: hug
  - expect: {event: hug_performed, absent: true}
";
    assert!(!run_yaml(yaml, 1).unwrap().passed());
}

#[test]
fn missing_asset_is_rejected_before_running() {
    let yaml = "utterances: {x: audio/nope.wav}\nsteps:\n  - touch\n";
    assert!(matches!(run_yaml(yaml, 1), Err(ScenarioError::Config(_))));
    let yaml = "steps:\n  - utterance: undeclared\n";
    assert!(run_yaml(yaml, 1).is_err());
}

#[test]
fn unknown_step_is_a_parse_error() {
    assert!(Scenario::from_yaml("steps:\n  - dance\n").is_err());
    assert!(Scenario::from_yaml("steps:\n  - {face: a, touch: b}\n").is_err());
}

#[test]
fn unknown_place_aborts_navigation() {
    let dir = tempfile::tempdir().unwrap();
    let yaml = "\
faces: {alice: faces/alice.pgm}
utterances: {go: audio/goto_kitchen.wav}
steps:
  - face: alice
  - touch
  - utterance: go
  - expect: {event: executing}
  - expect: {event: arrived}
";
    let mut o = demo_options(3);
    // a registry without the kitchen
    let places = dir.path().join("places.yaml");
    std::fs::write(&places, "places:\n  lab: [15.0, 6.0, 0.0]\n").unwrap();
    o.places = Some(places);
    let r = run_scenario(&Scenario::from_yaml(yaml).unwrap(), &o).unwrap();
    assert!(!r.passed());
    assert!(r.events.iter().any(|e| e.kind.name() == "aborted"));
    assert!(r.events.iter().any(|e| matches!(&e.kind, greeter::simworld::EventKind::TtsSaid { text } if text.contains("could not reach"))));
}
