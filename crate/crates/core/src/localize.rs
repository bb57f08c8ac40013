//! Monte-Carlo localization on a known occupancy grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::edt::obstacle_distances;
use crate::geom::{normalize_angle, CellLookup, LaserScan, OccupancyGrid, Pose2D};

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("map has no occupied cells; localization is undefined")]
    NoObstacles,
    #[error("invalid filter configuration: {0}")]
    Config(String),
}

/// Odometry increment as rotate-translate-rotate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdomDelta {
    pub trans: f64,
    pub rot1: f64,
    pub rot2: f64,
}

impl OdomDelta {
    pub const ZERO: OdomDelta = OdomDelta {
        trans: 0.0,
        rot1: 0.0,
        rot2: 0.0,
    };

    pub fn new(trans: f64, rot1: f64, rot2: f64) -> Self {
        OdomDelta { trans, rot1, rot2 }
    }

    /// Decomposes the motion from `a` to `b`. Pure rotations put the whole
    /// turn in `rot2`.
    pub fn between(a: &Pose2D, b: &Pose2D) -> Self {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let trans = dx.hypot(dy);
        let rot1 = if trans < 1e-12 {
            0.0
        } else {
            normalize_angle(dy.atan2(dx) - a.theta)
        };
        let rot2 = normalize_angle(b.theta - a.theta - rot1);
        OdomDelta { trans, rot1, rot2 }
    }

    pub fn apply(&self, p: &Pose2D) -> Pose2D {
        let heading = p.theta + self.rot1;
        Pose2D::new(
            p.x + self.trans * heading.cos(),
            p.y + self.trans * heading.sin(),
            p.theta + self.rot1 + self.rot2,
        )
    }
}

/// Odometry noise: a1 rot-from-rot, a2 rot-from-trans, a3 trans-from-trans,
/// a4 trans-from-rot. Each enters as a variance coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl MotionNoise {
    pub const ZERO: MotionNoise = MotionNoise {
        a1: 0.0,
        a2: 0.0,
        a3: 0.0,
        a4: 0.0,
    };

    pub fn validate(&self) -> Result<(), LocalizeError> {
        if [self.a1, self.a2, self.a3, self.a4]
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return Err(LocalizeError::Config(format!("noise must be >= 0: {self:?}")));
        }
        Ok(())
    }

    pub fn rot1_variance(&self, d: &OdomDelta) -> f64 {
        self.a1 * d.rot1 * d.rot1 + self.a2 * d.trans * d.trans
    }

    pub fn trans_variance(&self, d: &OdomDelta) -> f64 {
        self.a3 * d.trans * d.trans + self.a4 * (d.rot1 * d.rot1 + d.rot2 * d.rot2)
    }

    pub fn rot2_variance(&self, d: &OdomDelta) -> f64 {
        self.a1 * d.rot2 * d.rot2 + self.a2 * d.trans * d.trans
    }
}

impl Default for MotionNoise {
    fn default() -> Self {
        MotionNoise {
            a1: 0.01,
            a2: 0.01,
            a3: 0.02,
            a4: 0.01,
        }
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * variance.sqrt()
}

/// Draws one noisy version of `d`. Always consumes three normal draws.
pub fn sample_odometry<R: Rng + ?Sized>(d: &OdomDelta, noise: &MotionNoise, rng: &mut R) -> OdomDelta {
    let rot1 = d.rot1 + gauss(rng, noise.rot1_variance(d));
    let trans = d.trans + gauss(rng, noise.trans_variance(d));
    let rot2 = d.rot2 + gauss(rng, noise.rot2_variance(d));
    OdomDelta { trans, rot1, rot2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub normalized: bool,
}

impl ParticleSet {
    pub fn uniform(poses: Vec<Pose2D>) -> Self {
        let w = 1.0 / poses.len() as f64;
        ParticleSet {
            particles: poses.into_iter().map(|pose| Particle { pose, weight: w }).collect(),
            normalized: true,
        }
    }

    /// Gaussian cloud around `center`.
    pub fn gaussian<R: Rng + ?Sized>(center: &Pose2D, n: usize, sigma_xy: f64, sigma_theta: f64, rng: &mut R) -> Self {
        let poses = (0..n)
            .map(|_| {
                let dx = gauss(rng, sigma_xy * sigma_xy);
                let dy = gauss(rng, sigma_xy * sigma_xy);
                let dt = gauss(rng, sigma_theta * sigma_theta);
                Pose2D::new(center.x + dx, center.y + dy, center.theta + dt)
            })
            .collect();
        Self::uniform(poses)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Rescales weights to sum to one; an all-zero set becomes uniform.
    pub fn normalize(&mut self) {
        let s = self.weight_sum();
        let n = self.particles.len() as f64;
        for p in &mut self.particles {
            p.weight = if s > 0.0 && s.is_finite() { p.weight / s } else { 1.0 / n };
        }
        self.normalized = true;
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }
}

pub fn motion_update<R: Rng + ?Sized>(
    ps: &ParticleSet,
    delta: &OdomDelta,
    noise: &MotionNoise,
    rng: &mut R,
) -> ParticleSet {
    let particles = ps
        .particles
        .iter()
        .map(|p| Particle {
            pose: sample_odometry(delta, noise, rng).apply(&p.pose),
            weight: p.weight,
        })
        .collect();
    ParticleSet {
        particles,
        normalized: ps.normalized,
    }
}

/// Distance-to-nearest-obstacle lookup plus the beam model mixing weights.
#[derive(Debug, Clone)]
pub struct LikelihoodField {
    grid: OccupancyGrid,
    distances: Vec<f64>,
    pub sigma_hit: f64,
    pub z_hit: f64,
    pub z_rand: f64,
    pub max_range: f64,
}

pub fn build_likelihood_field(
    map: &OccupancyGrid,
    sigma_hit: f64,
    z_hit: f64,
    z_rand: f64,
    max_range: f64,
) -> Result<LikelihoodField, LocalizeError> {
    if !(sigma_hit > 0.0) || z_hit < 0.0 || z_rand < 0.0 || z_hit + z_rand > 1.0 || !(max_range > 0.0) {
        return Err(LocalizeError::Config(format!(
            "sigma_hit={sigma_hit} z_hit={z_hit} z_rand={z_rand} max_range={max_range}"
        )));
    }
    let distances = obstacle_distances(map).ok_or(LocalizeError::NoObstacles)?;
    Ok(LikelihoodField {
        grid: map.clone(),
        distances,
        sigma_hit,
        z_hit,
        z_rand,
        max_range,
    })
}

impl LikelihoodField {
    /// Field distance at a world point; `None` outside the map.
    pub fn distance_at(&self, x: f64, y: f64) -> Option<f64> {
        match self.grid.world_to_cell(x, y) {
            CellLookup::Inside(c) => Some(self.distances[self.grid.index(c)]),
            CellLookup::OutOfBounds => None,
        }
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn beam_likelihood(&self, x: f64, y: f64) -> f64 {
        let rand = self.z_rand / self.max_range;
        match self.distance_at(x, y) {
            Some(d) => self.z_hit * (-d * d / (2.0 * self.sigma_hit * self.sigma_hit)).exp() + rand,
            None => rand,
        }
    }
}

/// Weights every particle by the product of per-beam likelihoods over every
/// `beam_stride`-th finite beam, then normalizes. Products are accumulated in
/// log space.
pub fn measurement_update(
    ps: &ParticleSet,
    scan: &LaserScan,
    field: &LikelihoodField,
    beam_stride: usize,
) -> ParticleSet {
    let stride = beam_stride.max(1);
    let beams: Vec<(f64, f64)> = scan
        .returns()
        .step_by(stride)
        .map(|(b, r)| (r * b.cos(), r * b.sin()))
        .collect();
    if beams.is_empty() {
        return ps.clone();
    }
    let logs: Vec<f64> = ps
        .particles
        .iter()
        .map(|p| {
            let prior = p.weight.ln();
            prior
                + beams
                    .iter()
                    .map(|&(bx, by)| {
                        let (x, y) = p.pose.transform_point(bx, by);
                        field.beam_likelihood(x, y).ln()
                    })
                    .sum::<f64>()
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = ParticleSet {
        particles: ps
            .particles
            .iter()
            .zip(&logs)
            .map(|(p, l)| Particle {
                pose: p.pose,
                weight: if top.is_finite() { (l - top).exp() } else { 0.0 },
            })
            .collect(),
        normalized: false,
    };
    out.normalize();
    out
}

/// Systematic resampling indices for `n_out` draws from `weights` (summing to
/// one) with the single offset `u` in `[0, 1/n_out)`.
pub fn systematic_indices(weights: &[f64], n_out: usize, u: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_out);
    let mut i = 0;
    let mut cum = weights[0];
    for m in 0..n_out {
        let pos = u + m as f64 / n_out as f64;
        while pos >= cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

/// Low-variance resampling to the same size with uniform weights.
pub fn resample<R: Rng + ?Sized>(ps: &ParticleSet, rng: &mut R) -> ParticleSet {
    let n = ps.particles.len();
    let weights: Vec<f64> = ps.particles.iter().map(|p| p.weight).collect();
    let u = rng.random::<f64>() / n as f64;
    let poses = systematic_indices(&weights, n, u)
        .into_iter()
        .map(|i| ps.particles[i].pose)
        .collect();
    ParticleSet::uniform(poses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose2D,
    /// Covariance over (x, y, theta), angular deviations wrapped.
    pub covariance: [[f64; 3]; 3],
}

pub fn estimate_pose(ps: &ParticleSet) -> PoseEstimate {
    let (mut x, mut y, mut s, mut c, mut wsum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &ps.particles {
        x += p.weight * p.pose.x;
        y += p.weight * p.pose.y;
        s += p.weight * p.pose.theta.sin();
        c += p.weight * p.pose.theta.cos();
        wsum += p.weight;
    }
    let (x, y) = (x / wsum, y / wsum);
    let theta = s.atan2(c);
    let mut cov = [[0.0; 3]; 3];
    for p in &ps.particles {
        let d = [p.pose.x - x, p.pose.y - y, normalize_angle(p.pose.theta - theta)];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += p.weight * d[i] * d[j];
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= wsum;
        }
    }
    PoseEstimate {
        pose: Pose2D::new(x, y, theta),
        covariance: cov,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub particles: usize,
    pub noise: MotionNoise,
    pub sigma_hit: f64,
    pub z_hit: f64,
    pub z_rand: f64,
    pub max_range: f64,
    pub beam_stride: usize,
    pub init_sigma_xy: f64,
    pub init_sigma_theta: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            particles: 500,
            noise: MotionNoise::default(),
            sigma_hit: 0.2,
            z_hit: 0.95,
            z_rand: 0.05,
            max_range: 8.0,
            beam_stride: 2,
            init_sigma_xy: 0.25,
            init_sigma_theta: 0.2,
        }
    }
}

/// Particle filter stepped by odometry and scans.
pub struct ParticleFilter {
    cfg: FilterConfig,
    field: LikelihoodField,
    set: ParticleSet,
    rng: ChaCha8Rng,
    resamples: usize,
}

impl ParticleFilter {
    pub fn new(map: &OccupancyGrid, cfg: FilterConfig, initial: Pose2D, seed: u64) -> Result<Self, LocalizeError> {
        if cfg.particles == 0 {
            return Err(LocalizeError::Config("need at least one particle".into()));
        }
        cfg.noise.validate()?;
        let field = build_likelihood_field(map, cfg.sigma_hit, cfg.z_hit, cfg.z_rand, cfg.max_range)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = ParticleSet::gaussian(&initial, cfg.particles, cfg.init_sigma_xy, cfg.init_sigma_theta, &mut rng);
        Ok(ParticleFilter {
            cfg,
            field,
            set,
            rng,
            resamples: 0,
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.set
    }

    pub fn field(&self) -> &LikelihoodField {
        &self.field
    }

    pub fn resample_count(&self) -> usize {
        self.resamples
    }

    pub fn predict(&mut self, delta: &OdomDelta) {
        self.set = motion_update(&self.set, delta, &self.cfg.noise, &mut self.rng);
    }

    /// Weights by the scan, then resamples if the effective sample size fell
    /// below half the particle count.
    pub fn correct(&mut self, scan: &LaserScan) {
        self.set = measurement_update(&self.set, scan, &self.field, self.cfg.beam_stride);
        if self.set.effective_sample_size() < self.set.len() as f64 / 2.0 {
            self.set = resample(&self.set, &mut self.rng);
            self.resamples += 1;
        }
    }

    pub fn step(&mut self, delta: &OdomDelta, scan: &LaserScan) -> PoseEstimate {
        self.predict(delta);
        self.correct(scan);
        self.estimate()
    }

    pub fn estimate(&self) -> PoseEstimate {
        estimate_pose(&self.set)
    }
}
