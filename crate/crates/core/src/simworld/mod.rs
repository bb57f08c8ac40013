//! Deterministic simulated robot and world on a simulated clock.

mod events;
mod log;
mod map;
mod ray;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use events::{
    EventBus, EventKind, LedBlink, SessionEvent, LED_BLINK_PATTERN, LED_OFF_PATTERN,
    LED_TOGGLE_PERIOD,
};
pub use log::{read_log, run_drive, DriveScript, DriveStep, LogRecord, LogWriter};
pub use map::{
    classify, grid_from_pgm, grid_to_pgm, load_map, parse_meta, pixel_occupancy, save_map,
    MapMeta,
};
pub use ray::{raycast, raycast_scan, render_depth};

use crate::faces::{Image, CAPTURE_HEIGHT, CAPTURE_WIDTH};
use crate::geom::{normalize_angle, Cell, CellLookup, LaserScan, OccupancyGrid, Pose2D, VelocityCommand};
use crate::localize::{sample_odometry, MotionNoise, OdomDelta};
use crate::percept::{depth_to_scan, CameraIntrinsics, DepthImage, ScanConfig, SensorPose};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("map format error in `{field}`: {reason}")]
    Format { field: String, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("pose {0:?} is outside free space")]
    InvalidPose(Pose2D),
    #[error("capture {width}x{height} exceeds the native 640x480")]
    ResolutionTooHigh { width: u32, height: u32 },
    #[error("invalid step: {0}")]
    InvalidStep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub noise: MotionNoise,
    /// Radius of the body used for the collision clamp.
    pub body_radius: f64,
    pub camera: CameraIntrinsics,
    pub sensor: SensorPose,
    pub depth_width: u32,
    pub depth_height: u32,
    pub scan: ScanConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let (w, h) = (160, 12);
        WorldConfig {
            noise: MotionNoise::default(),
            body_radius: 0.0,
            camera: CameraIntrinsics::from_hfov(w, h, 1.0),
            sensor: SensorPose::new(1.15, 0.0),
            depth_width: w,
            depth_height: h,
            scan: ScanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub odom_delta: OdomDelta,
    pub halted: bool,
}

/// Simulated robot in a static map.
pub struct World {
    map: OccupancyGrid,
    truth: Pose2D,
    odom: Pose2D,
    clock: f64,
    rng: ChaCha8Rng,
    cfg: WorldConfig,
    bus: EventBus,
    led: Option<LedBlink>,
    scene: Option<(String, Image)>,
    captures: u64,
}

impl World {
    pub fn new(map: OccupancyGrid, start: Pose2D, cfg: WorldConfig, seed: u64, bus: EventBus) -> Result<Self, SimError> {
        cfg.noise
            .validate()
            .map_err(|e| SimError::InvalidStep(e.to_string()))?;
        if collides(&map, start.x, start.y, cfg.body_radius) {
            return Err(SimError::InvalidPose(start));
        }
        Ok(World {
            map,
            truth: start,
            odom: start,
            clock: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
            bus,
            led: None,
            scene: None,
            captures: 0,
        })
    }

    pub fn map(&self) -> &OccupancyGrid {
        &self.map
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn truth(&self) -> Pose2D {
        self.truth
    }

    pub fn odom(&self) -> Pose2D {
        self.odom
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn bus(&self) -> &EventBus {
        &self.bus
    }

    pub fn emit(&self, kind: EventKind) -> SessionEvent {
        self.bus.emit(self.clock, kind)
    }

    /// Places an obstacle the robot has not mapped (e.g. a person stepping in).
    pub fn add_obstacle(&mut self, x: f64, y: f64, radius: f64) {
        let r_cells = (radius / self.map.resolution()).ceil() as i64 + 1;
        if let CellLookup::Inside(c) = self.map.world_to_cell(x, y) {
            for dr in -r_cells..=r_cells {
                for dc in -r_cells..=r_cells {
                    let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
                    if !self.map.contains(col, row) {
                        continue;
                    }
                    let cell = Cell::new(col as usize, row as usize);
                    let (cx, cy) = self.map.cell_center(cell);
                    if (cx - x).hypot(cy - y) <= radius {
                        self.map.set(cell, Some(1.0));
                    }
                }
            }
        }
    }

    /// Advances the clock without motion, emitting due LED toggles.
    pub fn advance_to(&mut self, t: f64) {
        if t <= self.clock {
            return;
        }
        if let Some(led) = &mut self.led {
            for (at, lit) in led.due(t) {
                self.bus.emit(
                    at,
                    EventKind::LedState {
                        pattern: LED_BLINK_PATTERN.into(),
                        lit,
                    },
                );
            }
        }
        self.clock = t;
    }

    pub fn advance(&mut self, dt: f64) {
        self.advance_to(self.clock + dt);
    }

    pub fn led_blink_on(&mut self) {
        let mut led = LedBlink::start(self.clock);
        for (at, lit) in led.due(self.clock) {
            self.bus.emit(
                at,
                EventKind::LedState {
                    pattern: LED_BLINK_PATTERN.into(),
                    lit,
                },
            );
        }
        self.led = Some(led);
    }

    pub fn led_off(&mut self) {
        if self.led.take().is_some() {
            self.emit(EventKind::LedState {
                pattern: LED_OFF_PATTERN.into(),
                lit: false,
            });
        }
    }

    pub fn led_active(&self) -> bool {
        self.led.is_some()
    }

    pub fn say(&self, text: &str) -> SessionEvent {
        self.emit(EventKind::TtsSaid { text: text.into() })
    }

    pub fn touch_hand(&self) -> SessionEvent {
        self.emit(EventKind::HandTouched)
    }

    /// Who or what is in front of the camera.
    pub fn set_scene(&mut self, scene: Option<(String, Image)>) {
        self.scene = scene;
    }

    pub fn capture_picture(&mut self, width: u32, height: u32) -> Result<(String, Image), SimError> {
        if width > CAPTURE_WIDTH || height > CAPTURE_HEIGHT {
            ::log::warn!(
                "capture {width}x{height} rejected: above 640x480 a picture takes several seconds"
            );
            return Err(SimError::ResolutionTooHigh { width, height });
        }
        self.captures += 1;
        let (name, img) = match &self.scene {
            Some((name, img)) => (name.clone(), img.clone()),
            None => ("empty".to_string(), Image::blank(width, height)),
        };
        let image_ref = format!("capture-{:04}:{name}", self.captures);
        self.emit(EventKind::PictureTaken {
            image_ref: image_ref.clone(),
        });
        Ok((image_ref, img))
    }

    pub fn render_depth(&self) -> DepthImage {
        render_depth(
            &self.map,
            &self.truth,
            &self.cfg.camera,
            &self.cfg.sensor,
            self.cfg.depth_width,
            self.cfg.depth_height,
            self.cfg.scan.range_max,
        )
    }

    /// Depth render converted to a robot-frame scan.
    pub fn sense(&self) -> LaserScan {
        depth_to_scan(&self.render_depth(), &self.cfg.camera, &self.cfg.sensor, &self.cfg.scan)
    }

    /// Integrates `cmd` for `dt`, stopping at the last collision-free pose.
    pub fn step(&mut self, cmd: &VelocityCommand, dt: f64) -> Result<StepOutcome, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidStep(format!("dt must be > 0, got {dt}")));
        }
        let before = self.truth;
        let travel = cmd.linear_speed() * dt;
        let turn = cmd.omega.abs() * dt;
        let n = ((travel / (self.map.resolution() / 4.0)).ceil() as usize)
            .max((turn / 0.05).ceil() as usize)
            .max(1);
        let h = dt / n as f64;
        let mut halted = false;
        for _ in 0..n {
            let next = integrate(&self.truth, cmd, h);
            if collides(&self.map, next.x, next.y, self.cfg.body_radius) {
                halted = true;
                break;
            }
            self.truth = next;
        }
        let true_delta = OdomDelta::between(&before, &self.truth);
        let odom_delta = sample_odometry(&true_delta, &self.cfg.noise, &mut self.rng);
        self.odom = odom_delta.apply(&self.odom);
        self.advance(dt);
        if halted {
            self.emit(EventKind::Halted);
        }
        Ok(StepOutcome { odom_delta, halted })
    }
}

/// Exact motion under constant body-frame velocity.
pub fn integrate(p: &Pose2D, cmd: &VelocityCommand, dt: f64) -> Pose2D {
    let th0 = p.theta;
    let dth = cmd.omega * dt;
    let (s, c) = if dth.abs() < 1e-9 {
        // limits of the sin/cos integrals for small turns
        let (s0, c0) = th0.sin_cos();
        (dt * (c0 - 0.5 * dth * s0), dt * (s0 + 0.5 * dth * c0))
    } else {
        let th1 = th0 + dth;
        ((th1.sin() - th0.sin()) / cmd.omega, (th0.cos() - th1.cos()) / cmd.omega)
    };
    // s = ∫cos(θ), c = ∫sin(θ)
    Pose2D::new(
        p.x + cmd.vx * s - cmd.vy * c,
        p.y + cmd.vx * c + cmd.vy * s,
        normalize_angle(th0 + dth),
    )
}

/// Whether a disc at (x, y) overlaps an occupied cell or leaves the map.
pub fn collides(map: &OccupancyGrid, x: f64, y: f64, radius: f64) -> bool {
    let c = match map.world_to_cell(x, y) {
        CellLookup::Inside(c) => c,
        CellLookup::OutOfBounds => return true,
    };
    if map.is_occupied(c) {
        return true;
    }
    if radius <= 0.0 {
        return false;
    }
    let res = map.resolution();
    let reach = (radius / res).ceil() as i64 + 1;
    let half = res / 2.0;
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
            if !map.contains(col, row) {
                continue;
            }
            let cell = Cell::new(col as usize, row as usize);
            if !map.is_occupied(cell) {
                continue;
            }
            // distance to the cell square, in the map's rotated frame
            let (cx, cy) = map.cell_center(cell);
            let o = map.origin();
            let (lx, ly) = Pose2D::new(0.0, 0.0, -o.theta).transform_point(x - cx, y - cy);
            let dx = (lx.abs() - half).max(0.0);
            let dy = (ly.abs() - half).max(0.0);
            if dx.hypot(dy) < radius {
                return true;
            }
        }
    }
    false
}
