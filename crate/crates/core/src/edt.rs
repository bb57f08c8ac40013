//! Exact Euclidean distance transform over cell centers (Meijster et al.),
//! on squared integer cell distances so results are exact.

use crate::geom::OccupancyGrid;

/// Squared distance in cells from every cell to the nearest `true` cell.
/// `None` when there are no seeds at all.
pub fn squared_distances(width: usize, height: usize, seeds: &[bool]) -> Option<Vec<u64>> {
    assert_eq!(seeds.len(), width * height);
    if !seeds.iter().any(|&s| s) {
        return None;
    }
    let inf = (width + height) as u64 + 1;
    // column pass: vertical distance to nearest seed in the same column
    let mut g = vec![0u64; width * height];
    for x in 0..width {
        g[x] = if seeds[x] { 0 } else { inf };
        for y in 1..height {
            let i = y * width + x;
            g[i] = if seeds[i] { 0 } else { g[i - width].saturating_add(1).min(inf) };
        }
        for y in (0..height.saturating_sub(1)).rev() {
            let i = y * width + x;
            if g[i + width] < g[i] {
                g[i] = g[i + width] + 1;
            }
        }
    }
    // row pass: lower envelope of parabolas
    let mut out = vec![0u64; width * height];
    let mut s = vec![0usize; width];
    let mut t = vec![0i64; width];
    for y in 0..height {
        let row = &g[y * width..(y + 1) * width];
        let f = |x: usize, i: usize| -> i64 {
            let d = x as i64 - i as i64;
            d * d + (row[i] * row[i]) as i64
        };
        // Sep(i,u) = (u² − i² + g(u)² − g(i)²) div (2(u − i))
        let sep = |i: usize, u: usize| -> i64 {
            let (gi, gu) = ((row[i] * row[i]) as i64, (row[u] * row[u]) as i64);
            let (i, u) = (i as i64, u as i64);
            (u * u - i * i + gu - gi).div_euclid(2 * (u - i))
        };
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..width {
            while q >= 0 && f(t[q as usize] as usize, s[q as usize]) > f(t[q as usize] as usize, u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let w = 1 + sep(s[q as usize], u);
                if w < width as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = w;
                }
            }
        }
        for u in (0..width).rev() {
            out[y * width + u] = f(u, s[q as usize]) as u64;
            if u as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }
    Some(out)
}

/// Distance in meters from each cell center to the nearest occupied cell
/// center. `None` for a map without obstacles.
pub fn obstacle_distances(grid: &OccupancyGrid) -> Option<Vec<f64>> {
    let sq = squared_distances(grid.width(), grid.height(), &grid.occupied_mask())?;
    let res = grid.resolution();
    Some(sq.into_iter().map(|d| (d as f64).sqrt() * res).collect())
}
