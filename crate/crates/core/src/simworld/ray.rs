use super::SimError;
use crate::geom::{Cell, CellLookup, LaserScan, OccupancyGrid, Pose2D};
use crate::percept::{CameraIntrinsics, DepthImage, ScanConfig, SensorPose};

/// Distance along a planar ray to the first occupied cell boundary, by grid
/// traversal. `Ok(None)` when the ray leaves the map or exceeds `max_range`.
/// Unknown cells count as free.
pub fn raycast(
    map: &OccupancyGrid,
    from: &Pose2D,
    bearing: f64,
    max_range: f64,
) -> Result<Option<f64>, SimError> {
    let start = match map.world_to_cell(from.x, from.y) {
        CellLookup::Inside(c) => c,
        CellLookup::OutOfBounds => return Err(SimError::InvalidPose(*from)),
    };
    if map.is_occupied(start) {
        return Err(SimError::InvalidPose(*from));
    }
    // work in grid-local cell units
    let o = map.origin();
    let local = o.inverse().compose(&Pose2D::new(from.x, from.y, bearing));
    let res = map.resolution();
    let (px, py) = (local.x / res, local.y / res);
    let (dx, dy) = (local.theta.cos(), local.theta.sin());
    let (mut cx, mut cy) = (start.col as i64, start.row as i64);
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let delta_x = if dx != 0.0 { (1.0 / dx).abs() } else { f64::INFINITY };
    let delta_y = if dy != 0.0 { (1.0 / dy).abs() } else { f64::INFINITY };
    let mut t_x = if dx > 0.0 {
        (cx as f64 + 1.0 - px) / dx
    } else if dx < 0.0 {
        (cx as f64 - px) / dx
    } else {
        f64::INFINITY
    };
    let mut t_y = if dy > 0.0 {
        (cy as f64 + 1.0 - py) / dy
    } else if dy < 0.0 {
        (cy as f64 - py) / dy
    } else {
        f64::INFINITY
    };
    let limit = max_range / res;
    loop {
        let t = if t_x < t_y {
            cx += step_x;
            let t = t_x;
            t_x += delta_x;
            t
        } else {
            cy += step_y;
            let t = t_y;
            t_y += delta_y;
            t
        };
        if t > limit {
            return Ok(None);
        }
        if !map.contains(cx, cy) {
            return Ok(None);
        }
        if map.is_occupied(Cell::new(cx as usize, cy as usize)) {
            return Ok(Some(t * res));
        }
    }
}

/// Direct ground-truth scan: one ray per beam at its bin's lower bearing.
pub fn raycast_scan(map: &OccupancyGrid, pose: &Pose2D, cfg: &ScanConfig) -> LaserScan {
    let mut scan = LaserScan::empty(
        cfg.angle_min,
        cfg.angle_max,
        cfg.angle_increment,
        cfg.range_min,
        cfg.range_max,
    );
    for i in 0..scan.ranges.len() {
        let b = scan.bearing(i);
        scan.ranges[i] = raycast(map, pose, pose.theta + b, cfg.range_max)
            .ok()
            .flatten()
            .filter(|r| *r >= cfg.range_min);
    }
    scan
}

/// 2.5D depth render: walls are infinitely tall, the floor is at height 0.
/// Every pixel ray is intersected with the wall its planar projection hits
/// and with the floor; the nearer hit within `max_range` (planar) wins.
pub fn render_depth(
    map: &OccupancyGrid,
    pose: &Pose2D,
    k: &CameraIntrinsics,
    sp: &SensorPose,
    width: u32,
    height: u32,
    max_range: f64,
) -> DepthImage {
    let sensor = pose.compose(&sp.offset);
    let (s, c) = sp.pitch.sin_cos();
    let mut depths = vec![0.0; (width * height) as usize];
    for v in 0..height {
        let yn = (v as f64 - k.cy) / k.fy;
        for u in 0..width {
            let xn = (u as f64 - k.cx) / k.fx;
            // ray (xn, yn, 1) in camera axes -> body forward/left/up
            let fwd = c - yn * s;
            let left = -xn;
            let up = -s - yn * c;
            let planar = fwd.hypot(left);
            let mut best = f64::INFINITY;
            if planar > 1e-12 {
                let bearing = sensor.theta + left.atan2(fwd);
                if let Ok(Some(r)) = raycast(map, &sensor, bearing, max_range) {
                    best = r / planar;
                }
            }
            if up < 0.0 {
                let t = sp.height / -up;
                if t * planar <= max_range && t < best {
                    best = t;
                }
            }
            if best.is_finite() {
                depths[(v * width + u) as usize] = best;
            }
        }
    }
    DepthImage {
        width,
        height,
        depths,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percept::depth_to_scan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// 10x10 m room at 0.05 m, wall on the outer ring of cells.
    fn room() -> OccupancyGrid {
        let n = 200;
        let mask: Vec<bool> = (0..n * n)
            .map(|i| {
                let (x, y) = (i % n, i / n);
                x == 0 || y == 0 || x == n - 1 || y == n - 1 || (x >= 120 && x < 130 && y >= 40 && y < 90)
            })
            .collect();
        OccupancyGrid::from_mask(n, n, 0.05, &mask)
    }

    fn march(map: &OccupancyGrid, from: &Pose2D, bearing: f64, max_range: f64) -> Option<f64> {
        let mut d = 0.0;
        while d <= max_range {
            let (x, y) = (from.x + d * bearing.cos(), from.y + d * bearing.sin());
            match map.world_to_cell(x, y) {
                CellLookup::OutOfBounds => return None,
                CellLookup::Inside(c) if map.is_occupied(c) => return Some(d),
                _ => {}
            }
            d += 0.001;
        }
        None
    }

    #[test]
    fn wall_ahead_and_open_map() {
        let map = room();
        // wall cell column 199 starts at x = 9.95
        let r = raycast(&map, &Pose2D::new(6.95, 2.0, 0.0), 0.0, 10.0).unwrap().unwrap();
        assert!((r - 3.0).abs() <= 0.025);
        let open = OccupancyGrid::from_mask(20, 20, 0.5, &[false; 400]);
        assert_eq!(raycast(&open, &Pose2D::new(1.0, 1.0, 0.0), 0.3, 100.0).unwrap(), None);
        assert_eq!(raycast(&map, &Pose2D::new(1.0, 1.0, 0.0), 0.0, 2.0).unwrap(), None);
        assert!(matches!(
            raycast(&map, &Pose2D::new(0.01, 0.01, 0.0), 0.0, 2.0),
            Err(SimError::InvalidPose(_))
        ));
    }

    #[test]
    fn axis_aligned_rays_are_exact() {
        let map = room();
        let p = Pose2D::new(5.0, 5.0, 0.0);
        assert!((raycast(&map, &p, 0.0, 20.0).unwrap().unwrap() - 4.95).abs() < 1e-9);
        assert!((raycast(&map, &p, PI, 20.0).unwrap().unwrap() - 4.95).abs() < 1e-9);
        assert!((raycast(&map, &p, FRAC_PI_2, 20.0).unwrap().unwrap() - 4.95).abs() < 1e-9);
        assert!((raycast(&map, &p, -FRAC_PI_2, 20.0).unwrap().unwrap() - 4.95).abs() < 1e-9);
    }

    #[test]
    fn random_rays_match_fine_marching() {
        let map = room();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let diag = 0.05 * 2f64.sqrt();
        let mut checked = 0;
        while checked < 100 {
            let from = Pose2D::new(rng.random_range(0.1..9.9), rng.random_range(0.1..9.9), 0.0);
            if let CellLookup::Inside(c) = map.world_to_cell(from.x, from.y) {
                if map.is_occupied(c) {
                    continue;
                }
            }
            let b = rng.random_range(-PI..PI);
            let got = raycast(&map, &from, b, 8.0).unwrap();
            let exp = march(&map, &from, b, 8.0);
            match (got, exp) {
                (Some(g), Some(e)) => assert!((g - e).abs() <= diag, "{g} vs {e}"),
                (None, None) => {}
                (g, e) if (g.unwrap_or(8.0) - e.unwrap_or(8.0)).abs() <= diag => {}
                (g, e) => panic!("{g:?} vs {e:?}"),
            }
            checked += 1;
        }
    }

    #[test]
    fn fronto_parallel_wall() {
        let map = room();
        let k = CameraIntrinsics::from_hfov(65, 49, 1.0);
        let d = render_depth(&map, &Pose2D::new(7.95, 5.0, 0.0), &k, &SensorPose::new(1.2, 0.0), 65, 49, 8.0);
        for u in 0..65 {
            assert!((d.depth(u, 24).unwrap() - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn looking_straight_down() {
        let map = room();
        let k = CameraIntrinsics::from_hfov(21, 21, 0.5);
        let d = render_depth(&map, &Pose2D::new(5.0, 5.0, 0.0), &k, &SensorPose::new(1.2, FRAC_PI_2), 21, 21, 8.0);
        assert!((d.depth(10, 10).unwrap() - 1.2).abs() < 1e-9);
        // off-center pixels see the floor at the same camera depth
        assert!((d.depth(0, 3).unwrap() - 1.2).abs() < 1e-9);
    }

    #[test]
    fn render_then_convert_matches_raycast() {
        let map = room();
        let k = CameraIntrinsics::from_hfov(320, 60, 1.0);
        let sp = SensorPose::new(1.1, 0.1);
        let cfg = ScanConfig {
            angle_increment: 0.02,
            ..ScanConfig::default()
        };
        let diag = 0.05 * 2f64.sqrt();
        for pose in [Pose2D::new(3.0, 3.0, 0.2), Pose2D::new(8.0, 7.0, 0.6), Pose2D::new(4.0, 6.5, -0.7)] {
            let d = render_depth(&map, &pose, &k, &sp, 320, 60, cfg.range_max);
            let scan = depth_to_scan(&d, &k, &sp, &cfg);
            let truth = raycast_scan(&map, &pose, &cfg);
            let mut compared = 0;
            for (i, r) in scan.ranges.iter().enumerate() {
                if let Some(r) = r {
                    // the truth ray at this bin's bearings, min over the bin
                    let lo = pose.theta + scan.bearing(i);
                    let best = (0..=20)
                        .filter_map(|j| raycast(&map, &pose, lo + cfg.angle_increment * j as f64 / 20.0, cfg.range_max).unwrap())
                        .fold(f64::INFINITY, f64::min);
                    assert!((r - best).abs() <= diag, "bin {i}: {r} vs {best}");
                    compared += 1;
                }
            }
            assert!(compared > 20, "{pose:?}: {compared}");
            assert!(truth.ranges.iter().flatten().count() > 20);
        }
    }
}
