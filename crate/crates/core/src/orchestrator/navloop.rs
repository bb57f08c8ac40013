//! Closed-loop driving: sense, localize, plan, follow, check, step.

use serde::{Deserialize, Serialize};

use crate::geom::{Cell, OccupancyGrid, Pose2D, VelocityCommand};
use crate::localize::{OdomDelta, ParticleFilter};
use crate::navigate::{
    check_collision, inflate, next_command, plan_with, stamp_obstacles, Command, ControllerConfig, Costmap, Path,
    PlannerConfig, Safety,
};
use crate::simworld::{EventKind, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    pub planner: PlannerConfig,
    pub controller: ControllerConfig,
    pub inflation_radius: f64,
    pub inflation_decay: f64,
    /// Control period (s).
    pub dt: f64,
    /// Give up after this much simulated time.
    pub max_time: f64,
    pub max_replans: usize,
    /// Radius stamped around each blocking return.
    pub stamp_radius: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            planner: PlannerConfig::default(),
            controller: ControllerConfig::default(),
            inflation_radius: 0.8,
            inflation_decay: 3.0,
            dt: 0.1,
            max_time: 240.0,
            max_replans: 20,
            stamp_radius: 0.15,
        }
    }
}

/// Where the loop gets its pose from.
pub enum Localizer {
    Filter(Box<ParticleFilter>),
    /// Dead reckoning from the base's odometry.
    Odometry,
}

impl Localizer {
    fn estimate(&self, world: &World) -> Pose2D {
        match self {
            Localizer::Filter(f) => f.estimate().pose,
            Localizer::Odometry => world.odom(),
        }
    }

    fn update(&mut self, delta: &OdomDelta, world: &World) {
        if let Localizer::Filter(f) = self {
            f.step(delta, &world.sense());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum NavOutcome {
    Arrived { pose: Pose2D },
    Aborted { reason: String },
}

/// One (re)plan: where it started, what had been stamped by then, the path.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    pub from: Pose2D,
    pub stamped: Vec<Cell>,
    pub path: Path,
}

#[derive(Debug, Clone)]
pub struct NavReport {
    pub outcome: NavOutcome,
    pub plans: Vec<PlanRecord>,
    pub halts: usize,
    pub ticks: usize,
    pub final_truth: Pose2D,
    pub final_estimate: Pose2D,
    /// Navigation map with every stamped obstacle.
    pub nav_map: OccupancyGrid,
}

impl NavReport {
    pub fn arrived(&self) -> bool {
        matches!(self.outcome, NavOutcome::Arrived { .. })
    }
}

fn costmap(map: &OccupancyGrid, cfg: &NavConfig) -> Costmap {
    inflate(map, cfg.inflation_radius, cfg.inflation_decay)
}

/// Drives toward `goal` until arrival or abort. `on_tick` runs before every
/// control cycle (tests use it to drop obstacles mid-route).
pub fn navigation_loop(
    goal: Pose2D,
    place: Option<&str>,
    world: &mut World,
    localizer: &mut Localizer,
    base_map: &OccupancyGrid,
    cfg: &NavConfig,
    on_tick: &mut dyn FnMut(&mut World, usize),
) -> NavReport {
    world.emit(EventKind::NavGoal {
        pose: goal,
        place: place.map(str::to_string),
    });
    let mut nav_map = base_map.clone();
    let mut stamped: Vec<Cell> = Vec::new();
    let mut plans = Vec::new();
    let mut halts = 0;
    let mut ticks = 0;
    let t0 = world.clock();
    let finish = |world: &mut World, outcome: NavOutcome, plans, halts, ticks, est, nav_map| {
        match &outcome {
            NavOutcome::Arrived { pose } => world.emit(EventKind::Arrived { pose: *pose }),
            NavOutcome::Aborted { reason } => world.emit(EventKind::Aborted { reason: reason.clone() }),
        };
        NavReport {
            outcome,
            plans,
            halts,
            ticks,
            final_truth: world.truth(),
            final_estimate: est,
            nav_map,
        }
    };

    let mut cm = costmap(&nav_map, cfg);
    let mut est = localizer.estimate(world);
    let mut path = match plan_with(&cm, &est, &goal, &cfg.planner, None) {
        Ok(p) => p,
        Err(e) => {
            return finish(world, NavOutcome::Aborted { reason: e.to_string() }, plans, halts, ticks, est, nav_map);
        }
    };
    plans.push(PlanRecord {
        from: est,
        stamped: stamped.clone(),
        path: path.clone(),
    });
    let mut scan = world.sense();
    loop {
        on_tick(world, ticks);
        if world.clock() - t0 > cfg.max_time {
            return finish(world, NavOutcome::Aborted { reason: "timed out".into() }, plans, halts, ticks, est, nav_map);
        }
        est = localizer.estimate(world);
        let cmd = match next_command(&path, &est, &cfg.controller) {
            Command::Arrived => {
                return finish(world, NavOutcome::Arrived { pose: world.truth() }, plans, halts, ticks, est, nav_map);
            }
            Command::Drive(c) => c,
        };
        let c = &cfg.controller;
        if check_collision(&scan, &cmd, cfg.dt, c.footprint_radius, c.stop_distance) == Safety::Blocked {
            halts += 1;
            world.step(&VelocityCommand::ZERO, cfg.dt).ok();
            world.emit(EventKind::Halted);
            if halts > cfg.max_replans {
                return finish(
                    world,
                    NavOutcome::Aborted { reason: "blocked: too many replans".into() },
                    plans,
                    halts,
                    ticks,
                    est,
                    nav_map,
                );
            }
            // stamp the returns near the robot, in map frame
            let near = c.footprint_radius + c.stop_distance + cmd.linear_speed() * cfg.dt;
            let pts: Vec<(f64, f64)> = scan
                .points()
                .filter(|(x, y)| x.hypot(*y) <= near + 0.5)
                .map(|(x, y)| est.transform_point(x, y))
                .collect();
            let before = nav_map.occupied_mask();
            stamp_obstacles(&mut nav_map, &pts, cfg.stamp_radius);
            for (i, (was, now)) in before.iter().zip(nav_map.occupied_mask()).enumerate() {
                if !was && now {
                    stamped.push(nav_map.cell_of_index(i));
                }
            }
            cm = costmap(&nav_map, cfg);
            path = match plan_with(&cm, &est, &goal, &cfg.planner, None) {
                Ok(p) => p,
                Err(e) => {
                    return finish(
                        world,
                        NavOutcome::Aborted { reason: format!("no route around obstacle: {e}") },
                        plans,
                        halts,
                        ticks,
                        est,
                        nav_map,
                    );
                }
            };
            plans.push(PlanRecord {
                from: est,
                stamped: stamped.clone(),
                path: path.clone(),
            });
            scan = world.sense();
            ticks += 1;
            continue;
        }
        let out = match world.step(&cmd, cfg.dt) {
            Ok(o) => o,
            Err(e) => {
                return finish(world, NavOutcome::Aborted { reason: e.to_string() }, plans, halts, ticks, est, nav_map);
            }
        };
        localizer.update(&out.odom_delta, world);
        scan = world.sense();
        ticks += 1;
    }
}
