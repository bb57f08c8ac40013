//! Planar poses, occupancy grids, laser scans and velocity commands shared by
//! perception, localization, navigation and the simulator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`. `-π` maps to `+π`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = a.rem_euclid(two_pi);
    if r > PI {
        r - two_pi
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub const IDENTITY: Pose2D = Pose2D {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// Rigid-body composition `self ⊕ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D {
            x: self.x + c * other.x - s * other.y,
            y: self.y + s * other.x + c * other.y,
            theta: normalize_angle(self.theta + other.theta),
        }
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D {
            x: -c * self.x - s * self.y,
            y: s * self.x - c * self.y,
            theta: normalize_angle(-self.theta),
        }
    }

    /// Maps a point given in this pose's frame into the parent frame.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Free-function form of [`Pose2D::compose`].
pub fn compose(a: &Pose2D, b: &Pose2D) -> Pose2D {
    a.compose(b)
}

pub fn invert(p: &Pose2D) -> Pose2D {
    p.inverse()
}

/// Column/row of a grid cell. Row 0 is the bottom of the map (smallest y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Cell { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLookup {
    Inside(Cell),
    OutOfBounds,
}

impl CellLookup {
    pub fn cell(self) -> Option<Cell> {
        match self {
            CellLookup::Inside(c) => Some(c),
            CellLookup::OutOfBounds => None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("cell count {actual} does not match {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("occupancy value {0} outside [0, 1]")]
    BadOccupancy(f64),
}

/// Occupancy values above this are obstacles.
pub const OCCUPIED_ABOVE: f64 = 0.5;

/// Row-major occupancy grid. `None` marks unknown cells.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2D,
    cells: Vec<Option<f64>>,
}

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2D,
        cells: Vec<Option<f64>>,
    ) -> Result<Self, GridError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GridError::BadResolution(resolution));
        }
        if cells.len() != width * height {
            return Err(GridError::SizeMismatch {
                width,
                height,
                actual: cells.len(),
            });
        }
        if let Some(v) = cells
            .iter()
            .flatten()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(GridError::BadOccupancy(*v));
        }
        Ok(OccupancyGrid {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    /// All-free grid.
    pub fn empty(width: usize, height: usize, resolution: f64, origin: Pose2D) -> Self {
        Self::new(width, height, resolution, origin, vec![Some(0.0); width * height])
            .expect("valid empty grid")
    }

    /// Builds a grid from a boolean obstacle mask (row-major, row 0 at the bottom).
    pub fn from_mask(width: usize, height: usize, resolution: f64, mask: &[bool]) -> Self {
        let cells = mask
            .iter()
            .map(|&o| Some(if o { 1.0 } else { 0.0 }))
            .collect();
        Self::new(width, height, resolution, Pose2D::IDENTITY, cells).expect("valid mask grid")
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    pub fn origin(&self) -> Pose2D {
        self.origin
    }
    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_of_index(&self, i: usize) -> Cell {
        Cell::new(i % self.width, i / self.width)
    }

    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn get(&self, c: Cell) -> Option<f64> {
        self.cells[self.index(c)]
    }

    pub fn set(&mut self, c: Cell, v: Option<f64>) {
        let i = self.index(c);
        self.cells[i] = v;
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        matches!(self.get(c), Some(v) if v > OCCUPIED_ABOVE)
    }

    pub fn occupied_mask(&self) -> Vec<bool> {
        self.cells
            .iter()
            .map(|v| matches!(v, Some(p) if *p > OCCUPIED_ABOVE))
            .collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied_mask().iter().filter(|&&o| o).count()
    }

    /// Map-frame point to grid-frame coordinates (meters from the cell (0,0) corner).
    fn to_grid_frame(&self, x: f64, y: f64) -> (f64, f64) {
        if self.origin.theta == 0.0 {
            (x - self.origin.x, y - self.origin.y)
        } else {
            let (s, c) = self.origin.theta.sin_cos();
            let (dx, dy) = (x - self.origin.x, y - self.origin.y);
            (c * dx + s * dy, -s * dx + c * dy)
        }
    }

    /// Cell containing a map-frame point. Cells are half-open `[k·res, (k+1)·res)`.
    pub fn world_to_cell(&self, x: f64, y: f64) -> CellLookup {
        let (gx, gy) = self.to_grid_frame(x, y);
        let col = (gx / self.resolution).floor();
        let row = (gy / self.resolution).floor();
        if !col.is_finite() || !row.is_finite() {
            return CellLookup::OutOfBounds;
        }
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return CellLookup::OutOfBounds;
        }
        CellLookup::Inside(Cell::new(col as usize, row as usize))
    }

    pub fn pose_to_cell(&self, p: &Pose2D) -> CellLookup {
        self.world_to_cell(p.x, p.y)
    }

    /// Map-frame center of a cell.
    pub fn cell_center(&self, c: Cell) -> (f64, f64) {
        let gx = (c.col as f64 + 0.5) * self.resolution;
        let gy = (c.row as f64 + 0.5) * self.resolution;
        self.origin.transform_point(gx, gy)
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }
    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }
}

/// Planar range scan. `None` entries are beams with no return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub ranges: Vec<Option<f64>>,
}

/// Number of beams for an angular span; tolerant of the span being a
/// floating-point hair short of an exact multiple of the increment.
pub fn beam_count(angle_min: f64, angle_max: f64, increment: f64) -> usize {
    ((angle_max - angle_min) / increment + 1e-9).floor() as usize + 1
}

impl LaserScan {
    pub fn empty(
        angle_min: f64,
        angle_max: f64,
        angle_increment: f64,
        range_min: f64,
        range_max: f64,
    ) -> Self {
        let n = beam_count(angle_min, angle_max, angle_increment);
        LaserScan {
            angle_min,
            angle_max,
            angle_increment,
            range_min,
            range_max,
            ranges: vec![None; n],
        }
    }

    pub fn bearing(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }

    /// Finite returns as `(bearing, range)`.
    pub fn returns(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ranges
            .iter()
            .enumerate()
            .filter_map(move |(i, r)| r.map(|r| (self.bearing(i), r)))
    }

    /// Finite returns as robot-frame points.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.returns().map(|(b, r)| (r * b.cos(), r * b.sin()))
    }

    pub fn is_valid(&self) -> bool {
        self.angle_increment > 0.0
            && self.ranges.len()
                == beam_count(self.angle_min, self.angle_max, self.angle_increment)
            && self
                .ranges
                .iter()
                .flatten()
                .all(|r| *r >= self.range_min && *r <= self.range_max)
    }
}

/// Holonomic body-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        VelocityCommand { vx, vy, omega }
    }

    pub fn linear_speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Scales (vx, vy) down to `v_max` and clamps omega to `±omega_max`.
    pub fn clamped(&self, v_max: f64, omega_max: f64) -> Self {
        let speed = self.linear_speed();
        let k = if speed > v_max && speed > 0.0 {
            v_max / speed
        } else {
            1.0
        };
        VelocityCommand {
            vx: self.vx * k,
            vy: self.vy * k,
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}
