#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::PathBuf;

use greeter::geom::{Cell, OccupancyGrid};

pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/demo")
}

/// Closed room with one-cell walls.
pub fn room(w: usize, h: usize, res: f64) -> OccupancyGrid {
    let mask: Vec<bool> = (0..w * h)
        .map(|i| {
            let (c, r) = (i % w, i / w);
            c == 0 || r == 0 || c == w - 1 || r == h - 1
        })
        .collect();
    OccupancyGrid::from_mask(w, h, res, &mask)
}

/// Array-scan Dijkstra over raw cell costs (255 = lethal). Eight-connected
/// moves may not pass between two lethal cells.
pub fn dijkstra_cost(costs: &[u8], w: usize, h: usize, s: Cell, g: Cell, penalty: f64) -> Option<f64> {
    let lethal = |x: i64, y: i64| costs[(y as usize) * w + x as usize] == 255;
    let mut dist = vec![f64::INFINITY; w * h];
    let mut done = vec![false; w * h];
    dist[s.row * w + s.col] = 0.0;
    loop {
        let mut u = None;
        for i in 0..w * h {
            if !done[i] && dist[i].is_finite() && u.is_none_or(|j: usize| dist[i] < dist[j]) {
                u = Some(i);
            }
        }
        let Some(u) = u else { break };
        done[u] = true;
        let (x, y) = ((u % w) as i64, (u / w) as i64);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || lethal(nx, ny) {
                    continue;
                }
                if dx != 0 && dy != 0 && (lethal(x + dx, y) || lethal(x, y + dy)) {
                    continue;
                }
                let v = (ny as usize) * w + nx as usize;
                let len = if dx != 0 && dy != 0 { 2f64.sqrt() } else { 1.0 };
                let wgt = len * (1.0 + (costs[u] as f64 + costs[v] as f64) / 2.0 / 253.0 * penalty);
                if dist[u] + wgt < dist[v] {
                    dist[v] = dist[u] + wgt;
                }
            }
        }
    }
    let d = dist[g.row * w + g.col];
    d.is_finite().then_some(d)
}

/// Four-connected hop count avoiding lethal cells.
pub fn bfs_hops(costs: &[u8], w: usize, h: usize, s: Cell, g: Cell) -> Option<usize> {
    let mut seen = vec![usize::MAX; w * h];
    let mut q = VecDeque::new();
    seen[s.row * w + s.col] = 0;
    q.push_back((s.col as i64, s.row as i64));
    while let Some((x, y)) = q.pop_front() {
        let d = seen[y as usize * w + x as usize];
        for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let v = ny as usize * w + nx as usize;
            if costs[v] == 255 || seen[v] != usize::MAX {
                continue;
            }
            seen[v] = d + 1;
            q.push_back((nx, ny));
        }
    }
    let d = seen[g.row * w + g.col];
    (d != usize::MAX).then_some(d)
}
