use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SessionEvent, SimError, World};
use crate::geom::{LaserScan, Pose2D, VelocityCommand};
use crate::localize::OdomDelta;

/// One line of the sensor/command log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmd: Option<VelocityCommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odom_delta: Option<OdomDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<LaserScan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Pose2D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<SessionEvent>,
}

pub struct LogWriter<W: Write> {
    out: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Self {
        LogWriter { out }
    }

    pub fn write(&mut self, rec: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, SimError> {
    let f = std::fs::File::open(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| SimError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SimError::Format {
            field: format!("line {}", i + 1),
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveStep {
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub omega: f64,
    pub duration: f64,
}

/// Open-loop velocity script for the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveScript {
    pub start: [f64; 3],
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub steps: Vec<DriveStep>,
}

fn default_dt() -> f64 {
    0.1
}

impl DriveScript {
    pub fn from_yaml(s: &str) -> Result<Self, SimError> {
        serde_yaml::from_str(s).map_err(|e| SimError::Format {
            field: "script".into(),
            reason: e.to_string(),
        })
    }

    pub fn start_pose(&self) -> Pose2D {
        Pose2D::new(self.start[0], self.start[1], self.start[2])
    }
}

/// Runs the script, logging one record per tick: command, noisy odometry,
/// the converted depth scan, and ground truth.
pub fn run_drive<W: Write>(world: &mut World, script: &DriveScript, log: &mut LogWriter<W>) -> Result<usize, SimError> {
    let io = |e: std::io::Error| SimError::Io {
        path: "log".into(),
        reason: e.to_string(),
    };
    let mut ticks = 0;
    for step in &script.steps {
        let cmd = VelocityCommand::new(step.vx, step.vy, step.omega);
        let n = (step.duration / script.dt).round().max(0.0) as usize;
        for _ in 0..n {
            let seen = world.bus().len();
            let out = world.step(&cmd, script.dt)?;
            log.write(&LogRecord {
                t: world.clock(),
                cmd: Some(cmd),
                odom_delta: Some(out.odom_delta),
                scan: Some(world.sense()),
                truth: Some(world.truth()),
                event: None,
            })
            .map_err(io)?;
            for ev in world.bus().history().into_iter().skip(seen) {
                log.write(&LogRecord {
                    t: ev.at,
                    event: Some(ev),
                    ..Default::default()
                })
                .map_err(io)?;
            }
            ticks += 1;
        }
    }
    Ok(ticks)
}
