//! Depth image -> 3D points -> floor-referenced points -> planar laser scan.
//!
//! Camera frame: z forward, x right, y down. Robot/world frame: x forward,
//! y left, z up; heights are measured from the floor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{beam_count, LaserScan, Pose2D};
use crate::pgm;

#[derive(Debug, thiserror::Error)]
pub enum PerceptError {
    #[error("invalid depth image: {0}")]
    Image(String),
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("invalid scan config: {0}")]
    Config(String),
}

/// Depths in meters, row-major. 0 or NaN means no return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub depths: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, depths: Vec<f64>) -> Result<Self, PerceptError> {
        if depths.len() != width as usize * height as usize {
            return Err(PerceptError::Image(format!(
                "{} depths for {width}x{height}",
                depths.len()
            )));
        }
        if depths.iter().any(|d| d.is_infinite() || *d < 0.0) {
            return Err(PerceptError::Image("negative or infinite depth".into()));
        }
        Ok(DepthImage {
            width,
            height,
            depths,
        })
    }

    pub fn depth(&self, u: u32, v: u32) -> Option<f64> {
        let z = self.depths[(v * self.width + u) as usize];
        (z > 0.0).then_some(z)
    }

    /// 16-bit PGM, one millimeter per count, 0 = no return.
    pub fn from_pgm_mm(bytes: &[u8]) -> Result<Self, PerceptError> {
        let (w, h, mm) = pgm::decode_u16(bytes).map_err(|e| PerceptError::Image(e.to_string()))?;
        DepthImage::new(w, h, mm.into_iter().map(|v| v as f64 / 1000.0).collect())
    }

    pub fn to_pgm_mm(&self) -> Vec<u8> {
        let mm: Vec<u16> = self
            .depths
            .iter()
            .map(|d| {
                if d.is_nan() || *d <= 0.0 {
                    0
                } else {
                    (d * 1000.0).round().clamp(1.0, 65535.0) as u16
                }
            })
            .collect();
        pgm::encode_u16(self.width, self.height, &mm).expect("consistent image")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Pinhole model with the given horizontal field of view, principal point
    /// at the image center and square pixels.
    pub fn from_hfov(width: u32, height: u32, hfov: f64) -> Self {
        let fx = (width as f64 / 2.0) / (hfov / 2.0).tan();
        CameraIntrinsics {
            fx,
            fy: fx,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), PerceptError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(PerceptError::Calibration(format!("bad intrinsics {self:?}")));
        }
        Ok(())
    }
}

/// Pitch is positive when the sensor looks down. `offset` places the sensor
/// on the robot base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub height: f64,
    pub pitch: f64,
    #[serde(default = "identity")]
    pub offset: Pose2D,
}

fn identity() -> Pose2D {
    Pose2D::IDENTITY
}

impl SensorPose {
    pub fn new(height: f64, pitch: f64) -> Self {
        SensorPose {
            height,
            pitch,
            offset: Pose2D::IDENTITY,
        }
    }
}

/// Calibration sidecar shipped next to depth fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub height: f64,
    pub pitch: f64,
}

impl Calibration {
    pub fn new(k: CameraIntrinsics, sp: SensorPose) -> Self {
        Calibration {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            height: sp.height,
            pitch: sp.pitch,
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        }
    }

    pub fn sensor(&self) -> SensorPose {
        SensorPose::new(self.height, self.pitch)
    }

    pub fn load(path: &Path) -> Result<Self, PerceptError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| PerceptError::Calibration(format!("{}: {e}", path.display())))?;
        let c: Calibration =
            serde_json::from_str(&s).map_err(|e| PerceptError::Calibration(e.to_string()))?;
        c.intrinsics().validate()?;
        if !(c.height > 0.0) {
            return Err(PerceptError::Calibration("sensor height must be > 0".into()));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            angle_min: -0.5,
            angle_max: 0.5,
            angle_increment: 0.01,
            range_min: 0.1,
            range_max: 8.0,
            h_min: 0.05,
            h_max: 1.5,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), PerceptError> {
        if !(self.angle_increment > 0.0) {
            return Err(PerceptError::Config("angle_increment must be > 0".into()));
        }
        if !(self.angle_max >= self.angle_min) {
            return Err(PerceptError::Config("angle_max < angle_min".into()));
        }
        if !(self.h_min < self.h_max) {
            return Err(PerceptError::Config("h_min must be < h_max".into()));
        }
        if !(self.range_min >= 0.0 && self.range_max > self.range_min) {
            return Err(PerceptError::Config("bad range limits".into()));
        }
        Ok(())
    }

    pub fn beams(&self) -> usize {
        beam_count(self.angle_min, self.angle_max, self.angle_increment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Planar position plus height above the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorPoint {
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

pub fn depth_to_points(d: &DepthImage, k: &CameraIntrinsics) -> Vec<Point3> {
    let mut out = Vec::with_capacity(d.depths.len());
    for v in 0..d.height {
        for u in 0..d.width {
            if let Some(z) = d.depth(u, v) {
                out.push(Point3 {
                    x: (u as f64 - k.cx) * z / k.fx,
                    y: (v as f64 - k.cy) * z / k.fy,
                    z,
                });
            }
        }
    }
    out
}

pub fn transform_point(p: &Point3, sp: &SensorPose, base: &Pose2D) -> FloorPoint {
    let (s, c) = sp.pitch.sin_cos();
    let fwd = p.z * c - p.y * s;
    let left = -p.x;
    let up = -p.z * s - p.y * c;
    let (ox, oy) = sp.offset.transform_point(fwd, left);
    let (x, y) = base.transform_point(ox, oy);
    FloorPoint {
        x,
        y,
        height: sp.height + up,
    }
}

pub fn transform_points(cloud: &[Point3], sp: &SensorPose, base: &Pose2D) -> Vec<FloorPoint> {
    cloud.iter().map(|p| transform_point(p, sp, base)).collect()
}

/// Bin index for a bearing; bins are half-open `[lo, lo + inc)`.
pub fn bin_of(cfg: &ScanConfig, phi: f64) -> Option<usize> {
    let k = ((phi - cfg.angle_min) / cfg.angle_increment).floor();
    if k < 0.0 || k >= cfg.beams() as f64 {
        return None;
    }
    Some(k as usize)
}

/// Points are in the robot frame (x forward, y left).
pub fn points_to_scan(cloud: &[FloorPoint], cfg: &ScanConfig) -> LaserScan {
    let mut scan = LaserScan::empty(
        cfg.angle_min,
        cfg.angle_max,
        cfg.angle_increment,
        cfg.range_min,
        cfg.range_max,
    );
    for p in cloud {
        if p.height < cfg.h_min || p.height > cfg.h_max {
            continue;
        }
        let r = p.x.hypot(p.y);
        if r < cfg.range_min || r > cfg.range_max {
            continue;
        }
        if let Some(k) = bin_of(cfg, p.y.atan2(p.x)) {
            let slot = &mut scan.ranges[k];
            if slot.is_none_or(|cur| r < cur) {
                *slot = Some(r);
            }
        }
    }
    scan
}

/// Full pipeline into the robot frame.
pub fn depth_to_scan(
    d: &DepthImage,
    k: &CameraIntrinsics,
    sp: &SensorPose,
    cfg: &ScanConfig,
) -> LaserScan {
    let cloud = transform_points(&depth_to_points(d, k), sp, &Pose2D::IDENTITY);
    points_to_scan(&cloud, cfg)
}
