#![allow(dead_code)]

use mpkm_core::model::normalize;
use mpkm_core::PointSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in `[0, side]^d`, normalized.
pub fn uniform(n: usize, d: usize, side: f64, seed: u64) -> PointSet {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen::<f64>() * side).collect()).collect();
    normalize(&PointSet::from_rows(&rows).unwrap()).unwrap().0
}

/// `k` groups of `per` points with spread `spread` around centers placed
/// `sep` apart on the first axis, normalized.
pub fn planted(k: usize, per: usize, sep: f64, spread: f64, d: usize, seed: u64) -> PointSet {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..k * per)
        .map(|i| {
            let center = (i / per) as f64 * sep;
            (0..d).map(|a| if a == 0 { center } else { 0.0 } + r.gen::<f64>() * spread).collect()
        })
        .collect();
    normalize(&PointSet::from_rows(&rows).unwrap()).unwrap().0
}

/// Points on a line at the given coordinates, unnormalized.
pub fn line(xs: &[f64]) -> PointSet {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    PointSet::from_rows(&rows).unwrap()
}

/// Largest `r` with `Σ [r² − cost]^+ ≤ lambda`, by bisection on `r²`.
pub fn radius_by_bisection(costs: &[f64], lambda: f64) -> f64 {
    let pay = |r2: f64| costs.iter().map(|c| (r2 - c).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, lambda + costs.iter().cloned().fold(0.0, f64::max) + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pay(mid) <= lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.sqrt()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Hop distances from `src` by plain BFS over adjacency lists.
pub fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = std::collections::VecDeque::from([src]);
    dist[src] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Random graph `G(n, p)` as adjacency lists.
pub fn gnp(n: usize, p: f64, seed: u64) -> Vec<Vec<usize>> {
    let mut r = rng(seed);
    let mut adj = vec![Vec::new(); n];
    for u in 0..n {
        for v in u + 1..n {
            if r.gen::<f64>() < p {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    adj
}

/// Random geometric graph on the unit square with connection radius `radius`.
pub fn geometric(n: usize, radius: f64, seed: u64) -> Vec<Vec<usize>> {
    let mut r = rng(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (r.gen(), r.gen())).collect();
    let mut adj = vec![Vec::new(); n];
    for u in 0..n {
        for v in u + 1..n {
            let (dx, dy) = (pts[u].0 - pts[v].0, pts[u].1 - pts[v].1);
            if dx * dx + dy * dy <= radius * radius {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    adj
}

/// Two-level clusters: `supers` groups spaced `outer` apart, each holding two
/// subgroups spaced `inner` apart, each of `per` points at unit spacing.
/// Normalized.
pub fn hierarchical(supers: usize, per: usize, outer: f64, inner: f64) -> PointSet {
    let mut rows = Vec::new();
    for s in 0..supers {
        for sub in 0..2 {
            for j in 0..per {
                let jitter = (s * 7 + sub * 3 + j) as f64 * 0.37 % 1.0;
                rows.push(vec![s as f64 * outer + sub as f64 * inner + j as f64, jitter]);
            }
        }
    }
    normalize(&PointSet::from_rows(&rows).unwrap()).unwrap().0
}
