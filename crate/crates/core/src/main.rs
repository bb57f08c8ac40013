use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use greeter::asr::{stream_transcribe, transcribe_whole, serve_mock, FixtureTable, MockConfig, MockDelays};
use greeter::bridge::{serve_bridge, Bridge};
use greeter::endpointer::{chunk_samples, endpoint_file, samples_to_bytes, write_wav, read_wav, EndpointConfig};
use greeter::faces::{serve_faces, FaceRecognizer, Gallery};
use greeter::geom::Pose2D;
use greeter::localize::{FilterConfig, ParticleFilter};
use greeter::navigate::{inflate, plan_with, PlannerConfig};
use greeter::orchestrator::{generate_demo_assets, run_scenario, RunOptions, Scenario};
use greeter::percept::{depth_to_scan, Calibration, DepthImage};
use greeter::simworld::{load_map, read_log, run_drive, DriveScript, EventBus, LogRecord, LogWriter, World, WorldConfig};

#[derive(Parser)]
#[command(name = "greeter", version, about = "Greeter robot stack against a simulated robot")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Stream,
    Whole,
}

#[derive(Subcommand)]
enum Cmd {
    /// Find where the speaker stopped and write the trimmed recording.
    Endpoint {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_duration: Option<f64>,
        /// Defaults to `<wav stem>.trimmed.wav`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the mock speech recognizer.
    AsrMock {
        #[arg(long, default_value = "127.0.0.1:7010")]
        listen: String,
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        delay_n: f64,
        #[arg(long, default_value_t = 0.0)]
        delay_p: f64,
        #[arg(long, default_value_t = 0.0)]
        delay_f: f64,
    },
    /// Send a recording to a recognizer.
    Transcribe {
        #[arg(long)]
        server: String,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, value_enum, default_value = "stream")]
        mode: Mode,
        /// Chunk length for streaming (s).
        #[arg(long, default_value_t = 0.5)]
        chunk: f64,
    },
    /// Run the face recognition service.
    FacesServe {
        #[arg(long, default_value = "127.0.0.1:7020")]
        listen: String,
        #[arg(long)]
        gallery: PathBuf,
    },
    /// Convert a depth image (16-bit PGM, mm) to a laser scan.
    Depth2scan {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a simulator log through the particle filter.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        particles: usize,
        /// Initial pose guess; defaults to the log's first ground truth.
        #[arg(long, value_parser = parse_pose)]
        start: Option<Pose2D>,
    },
    /// Plan a path and draw it on the costmap.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_parser = parse_pose)]
        start: Pose2D,
        #[arg(long, value_parser = parse_pose)]
        goal: Pose2D,
        #[arg(long, default_value_t = 0.8)]
        inflation: f64,
        #[arg(long, default_value_t = 3.0)]
        decay: f64,
        #[arg(long)]
        no_map: bool,
    },
    /// Drive the simulated robot along a velocity script and log the run.
    Sim {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        script: PathBuf,
        /// Line-delimited JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the tablet bridge.
    Bridge {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Directory holding the tablet UI (index.html).
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Replay a scenario and check its expectations.
    Run {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        gallery: Option<PathBuf>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        asr: Option<String>,
        #[arg(long)]
        faces: Option<String>,
        #[arg(long)]
        bridge: Option<String>,
        #[arg(long)]
        places: Option<PathBuf>,
        #[arg(long)]
        emit_log: Option<PathBuf>,
    },
    /// Write the demo bundle (map, places, faces, audio, fixtures, scenario).
    GenFixtures {
        #[arg(long, default_value = "assets/demo")]
        out: PathBuf,
    },
}

fn parse_pose(s: &str) -> Result<Pose2D, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y] => Ok(Pose2D::new(x, y, 0.0)),
        [x, y, th] => Ok(Pose2D::new(x, y, th)),
        _ => Err("expected x,y[,theta]".into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Endpoint { wav, epsilon, max_duration, out } => {
            let mut cfg = EndpointConfig::default();
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if let Some(m) = max_duration {
                cfg.max_duration = m;
            }
            let r = endpoint_file(&wav, &cfg)?;
            let out = out.unwrap_or_else(|| wav.with_extension("trimmed.wav"));
            write_wav(&out, &r.samples, r.sample_rate)?;
            println!("stop_time {:.3}", r.stop_time);
            println!("wrote {}", out.display());
        }
        Cmd::AsrMock { listen, fixtures, delay_n, delay_p, delay_f } => {
            let cfg = MockConfig {
                fixtures: FixtureTable::load(&fixtures)?,
                delays: MockDelays {
                    message_overhead: delay_n,
                    chunk_processing: delay_p,
                    finalization: delay_f,
                    ..MockDelays::default()
                },
                ..MockConfig::default()
            };
            let server = serve_mock(cfg, listen.as_str()).with_context(|| format!("listen on {listen}"))?;
            log::info!("mock recognizer on {}", server.addr());
            park();
        }
        Cmd::Transcribe { server, wav, mode, chunk } => {
            let (samples, rate) = read_wav(&wav)?;
            let started = std::time::Instant::now();
            let t = match mode {
                Mode::Whole => transcribe_whole(&samples_to_bytes(&samples), server.as_str())?,
                Mode::Stream => {
                    let len = ((chunk * rate as f64).round() as usize).max(1);
                    stream_transcribe(chunk_samples(&samples, rate, len).into_iter().map(Some), server.as_str())?
                }
            };
            println!("{}", serde_json::to_string(&t)?);
            log::info!("took {:.3} s", started.elapsed().as_secs_f64());
        }
        Cmd::FacesServe { listen, gallery } => {
            if !gallery.exists() {
                Gallery::new().save(&gallery)?;
            }
            let server = serve_faces(FaceRecognizer::open(&gallery)?, listen.as_str())?;
            log::info!("face service on {}", server.url());
            server.wait();
        }
        Cmd::Depth2scan { depth, calib, out } => {
            let bytes = std::fs::read(&depth).with_context(|| depth.display().to_string())?;
            let d = DepthImage::from_pgm_mm(&bytes)?;
            let c = Calibration::load(&calib)?;
            let scan = depth_to_scan(&d, &c.intrinsics(), &c.sensor(), &WorldConfig::default().scan);
            std::fs::write(&out, serde_json::to_string_pretty(&scan)?)?;
            println!("{} beams, {} returns", scan.ranges.len(), scan.ranges.iter().flatten().count());
        }
        Cmd::Localize { map, log, seed, particles, start } => localize(&map, &log, seed, particles, start)?,
        Cmd::Plan { map, start, goal, inflation, decay, no_map } => {
            let grid = load_map(&map)?;
            let cm = inflate(&grid, inflation, decay);
            let path = plan_with(&cm, &start, &goal, &PlannerConfig::default(), None)?;
            println!("{}", serde_json::to_string(&path.waypoints)?);
            println!("cost {:.3} length {:.3} m", path.total_cost, path.length());
            if !no_map {
                print!("{}", cm.render_ascii(Some(&path)));
            }
        }
        Cmd::Sim { map, seed, script, out } => {
            let grid = load_map(&map)?;
            let text = std::fs::read_to_string(&script).with_context(|| script.display().to_string())?;
            let script = DriveScript::from_yaml(&text)?;
            let mut world = World::new(grid, script.start_pose(), WorldConfig::default(), seed, EventBus::new())?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            let mut w = LogWriter::new(sink);
            // initial truth, so a replay knows where the robot began
            w.write(&LogRecord {
                t: world.clock(),
                truth: Some(world.truth()),
                ..Default::default()
            })?;
            let ticks = run_drive(&mut world, &script, &mut w)?;
            w.into_inner().flush()?;
            log::info!("{ticks} ticks, final pose {:?}", world.truth());
        }
        Cmd::Bridge { listen, static_dir } => {
            let server = serve_bridge(Bridge::new(), listen.as_str(), static_dir)?;
            log::info!("tablet bridge on {}", server.url());
            server.wait();
        }
        Cmd::Run { map, scenario, gallery, fixtures, seed, asr, faces, bridge, places, emit_log } => {
            let sc = Scenario::load(&scenario)?;
            let base = scenario.parent().map(Path::to_path_buf).unwrap_or_default();
            let mut opts = RunOptions::new(&map, &base);
            opts.gallery = gallery;
            opts.fixtures = fixtures;
            opts.places = places;
            opts.seed = seed;
            opts.asr = asr;
            opts.faces = faces;
            opts.bridge = bridge;
            let report = run_scenario(&sc, &opts)?;
            if let Some(p) = emit_log {
                let mut f = std::io::BufWriter::new(std::fs::File::create(&p)?);
                for ev in &report.events {
                    serde_json::to_writer(&mut f, ev)?;
                    f.write_all(b"\n")?;
                }
                f.flush()?;
            }
            for r in &report.results {
                let step = r.step.map(|s| format!("step {s:>3}")).unwrap_or_else(|| "invariant".into());
                let mark = if r.passed { "PASS" } else { "FAIL" };
                println!("{mark} {step} {}{}", r.description, if r.detail.is_empty() { String::new() } else { format!(" ({})", r.detail) });
            }
            let failed = report.results.iter().filter(|r| !r.passed).count();
            println!("{} expectations, {failed} failed", report.results.len());
            return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Cmd::GenFixtures { out } => {
            let a = generate_demo_assets(&out)?;
            println!("wrote demo bundle to {}", a.dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn localize(map: &Path, log: &Path, seed: u64, particles: usize, start: Option<Pose2D>) -> Result<()> {
    let grid = load_map(map)?;
    let records = read_log(log)?;
    let start = match start.or_else(|| records.iter().find_map(|r| r.truth)) {
        Some(p) => p,
        None => bail!("no --start given and the log has no ground truth"),
    };
    let cfg = FilterConfig {
        particles,
        ..FilterConfig::default()
    };
    let mut pf = ParticleFilter::new(&grid, cfg, start, seed)?;
    let mut last_truth = None;
    for r in &records {
        if let (Some(d), Some(scan)) = (&r.odom_delta, &r.scan) {
            let est = pf.step(d, scan);
            let p = est.pose;
            println!("{:.2} {:.3} {:.3} {:.3}", r.t, p.x, p.y, p.theta);
        }
        if r.truth.is_some() {
            last_truth = r.truth;
        }
    }
    if let Some(t) = last_truth {
        let e = pf.estimate().pose;
        let dth = greeter::geom::normalize_angle(e.theta - t.theta);
        println!("final error xy {:.3} m theta {:.3} rad", (e.x - t.x).hypot(e.y - t.y), dth.abs());
    }
    Ok(())
}

fn park() -> ! {
    loop {
        std::thread::park();
    }
}
