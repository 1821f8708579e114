//! Multi-scale LSH spanner with 2-hop distance and ball queries.
//!
//! For each scale `D_i = 2^i` and each hash repetition the points are rotated
//! at random, projected to at most [`MAX_AXES`] axes and bucketed by a
//! randomly shifted grid of cell width `grid_cell · D_i`. Every bucket
//! becomes a star around its lowest id. Candidate edges longer than
//! `far_factor · D_i` are dropped and the rest get weight `D_i / 4`, so every
//! path satisfies `dist ≤ 4 · far_factor · d_G`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sq_dist, PointSet};
use crate::rng;

pub const MAX_AXES: usize = 12;
/// Exact mode stores no edges but still refuses dense instances beyond this.
pub const EXACT_MODE_GUARD: usize = 5000;

#[derive(Clone, Debug, Serialize)]
pub struct LshParams {
    /// Hash repetitions per scale.
    pub repetitions: usize,
    /// Grid cell width as a multiple of the scale.
    pub grid_cell: f64,
    /// Candidate edges longer than `far_factor · D` are discarded.
    pub far_factor: f64,
    pub rotation_seed: u64,
    /// Collision rate of pairs at distance `D` (filled by [`calibrate`]).
    pub p1: Option<f64>,
    /// Collision rate of pairs at distance `far_factor · D`.
    pub p2: Option<f64>,
}

impl LshParams {
    pub const DEFAULT_REPETITIONS: usize = 3;
    pub const DEFAULT_GRID_CELL: f64 = 4.0;

    /// Defaults for dimension `d`: the far filter is set to the diameter of a
    /// grid cell, so no bucket-mate of the hub is ever discarded.
    pub fn new(d: usize, rotation_seed: u64) -> Self {
        let axes = d.clamp(1, MAX_AXES) as f64;
        let grid_cell = Self::DEFAULT_GRID_CELL;
        Self {
            repetitions: Self::DEFAULT_REPETITIONS,
            grid_cell,
            far_factor: grid_cell * axes.sqrt(),
            rotation_seed,
            p1: None,
            p2: None,
        }
    }

    pub fn with_repetitions(mut self, repetitions: usize) -> Self {
        self.repetitions = repetitions;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::input("at least one hash repetition is required"));
        }
        if !(self.grid_cell > 0.0) || !(self.far_factor >= 1.0) {
            return Err(Error::input("grid_cell must be positive and far_factor at least 1"));
        }
        Ok(())
    }
}

/// One grid hash: `axes` orthonormal directions and a shift per axis.
struct GridHash {
    rows: Vec<Vec<f64>>,
    shift: Vec<f64>,
    width: f64,
}

impl GridHash {
    fn sample(d: usize, width: f64, seed: u64, tags: &[u64]) -> Self {
        let mut rng = rng::keyed_rng(seed, tags);
        let gauss = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let q = gauss.qr().q();
        let axes = d.min(MAX_AXES);
        let rows = (0..axes).map(|a| q.column(a).iter().copied().collect()).collect();
        let shift = (0..axes).map(|_| rng.gen::<f64>()).collect();
        Self { rows, shift, width }
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        self.rows
            .iter()
            .zip(&self.shift)
            .map(|(r, s)| {
                let proj: f64 = r.iter().zip(p).map(|(a, b)| a * b).sum();
                (proj / self.width + s).floor() as i64
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleGraph {
    pub scale_d: f64,
    pub edges: Vec<(usize, usize)>,
    /// Star edges discarded by the far filter.
    pub filtered: usize,
}

fn scale_tags(scale_d: f64, rep: usize) -> [u64; 3] {
    [rng::tag::SPANNER, scale_d.to_bits(), rep as u64]
}

/// Bucket stars for one scale over all repetitions.
pub fn build_scale_graph(points: &PointSet, scale_d: f64, params: &LshParams) -> Result<ScaleGraph> {
    params.validate()?;
    let limit = params.far_factor * scale_d;
    let limit2 = limit * limit;
    let mut edges = Vec::new();
    let mut filtered = 0;
    for rep in 0..params.repetitions {
        let hash = GridHash::sample(points.dim(), params.grid_cell * scale_d, params.rotation_seed, &scale_tags(scale_d, rep));
        let mut buckets: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for (id, p) in points.iter().enumerate() {
            buckets.entry(hash.key(p)).or_default().push(id);
        }
        for members in buckets.values() {
            let hub = members[0];
            for &y in &members[1..] {
                if sq_dist(points.point(hub), points.point(y)) <= limit2 {
                    edges.push((hub, y));
                } else {
                    filtered += 1;
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(ScaleGraph { scale_d, edges, filtered })
}

/// Collision rates of a fresh hash on pairs at distance `1` and at
/// `far_factor`, measured on `samples` random pairs each.
pub fn calibrate(params: &LshParams, d: usize, samples: usize, seed: u64) -> LshParams {
    let mut rng = rng::keyed_rng(seed, &[rng::tag::CALIBRATION]);
    let mut rate = |dist: f64| {
        let mut hits = 0;
        for s in 0..samples {
            let hash = GridHash::sample(d, params.grid_cell, seed, &[rng::tag::CALIBRATION, dist.to_bits(), s as u64]);
            let x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect();
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + dist * u / norm).collect();
            if hash.key(&x) == hash.key(&y) {
                hits += 1;
            }
        }
        hits as f64 / samples.max(1) as f64
    };
    let p1 = rate(1.0);
    let p2 = rate(params.far_factor);
    LshParams { p1: Some(p1), p2: Some(p2), ..params.clone() }
}

#[derive(Clone, Debug)]
enum Backing {
    Sparse(Vec<Vec<(usize, f64)>>),
    /// Complete graph with true distances, evaluated on demand.
    Complete(PointSet),
}

#[derive(Clone, Debug)]
pub struct SpannerGraph {
    n: usize,
    backing: Backing,
    gamma_eff: f64,
    edge_count: usize,
    epsilon: f64,
    params: Option<LshParams>,
    /// Edges contributed by each scale before cross-scale deduplication.
    pub scale_edges: Vec<(f64, usize)>,
}

/// Scale exponents `0 ..= ⌈log2 Δ⌉ + 1`.
pub fn scale_range(diameter: f64) -> std::ops::RangeInclusive<i32> {
    let top = if diameter > 1.0 { diameter.log2().ceil() as i32 } else { 0 };
    0..=top + 1
}

pub fn build_spanner(points: &PointSet, epsilon: f64, params: &LshParams) -> Result<SpannerGraph> {
    build_spanner_within(points, epsilon, params, (points.len() as f64).powf(1.0 + epsilon))
}

/// [`build_spanner`] with an explicit edge budget, for spanners over a
/// subset whose edges count against the budget of the full point set.
pub fn build_spanner_within(points: &PointSet, epsilon: f64, params: &LshParams, budget: f64) -> Result<SpannerGraph> {
    params.validate()?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::input(format!("ε must lie in (0, 1], got {epsilon}")));
    }
    let n = points.len();
    let diameter = points.diameter().unwrap_or_else(|| points.pairwise_extremes().1);
    let scales: Vec<i32> = scale_range(diameter).collect();
    let graphs: Vec<ScaleGraph> = scales
        .par_iter()
        .map(|&i| build_scale_graph(points, 2f64.powi(i), params))
        .collect::<Result<_>>()?;
    let mut all: Vec<(usize, usize, f64)> = graphs
        .iter()
        .flat_map(|g| g.edges.iter().map(move |&(u, v)| (u.min(v), u.max(v), g.scale_d / 4.0)))
        .collect();
    all.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    all.dedup_by(|later, first| later.0 == first.0 && later.1 == first.1);
    if all.len() as f64 > budget {
        let per_scale: Vec<String> = graphs.iter().map(|g| format!("D={}: {}", g.scale_d, g.edges.len())).collect();
        return Err(Error::Build(format!(
            "{} edges exceed the budget of {budget:.0} (n = {n}, ε = {epsilon}); per scale: {}",
            all.len(),
            per_scale.join(", ")
        )));
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in &all {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    adj.iter_mut().for_each(|a| a.sort_by_key(|e| e.0));
    Ok(SpannerGraph {
        n,
        backing: Backing::Sparse(adj),
        gamma_eff: 4.0 * params.far_factor,
        edge_count: all.len(),
        epsilon,
        params: Some(params.clone()),
        scale_edges: graphs.iter().map(|g| (g.scale_d, g.edges.len())).collect(),
    })
}

/// Complete graph with exact distances; 2-hop distances equal true distances.
pub fn exact_mode_spanner(points: &PointSet) -> Result<SpannerGraph> {
    let n = points.len();
    if n > EXACT_MODE_GUARD {
        return Err(Error::Guard(format!("exact mode supports at most {EXACT_MODE_GUARD} points, got {n}")));
    }
    Ok(SpannerGraph {
        n,
        backing: Backing::Complete(points.clone()),
        gamma_eff: 1.0,
        edge_count: n * n.saturating_sub(1) / 2,
        epsilon: 1.0,
        params: None,
        scale_edges: Vec::new(),
    })
}

/// Build a graph from an explicit weighted edge list (used for tests and
/// per-class dependency graphs).
pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], gamma_eff: f64) -> SpannerGraph {
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(u, v, w) in edges {
        if u != v {
            let e = best.entry((u.min(v), u.max(v))).or_insert(w);
            *e = e.min(w);
        }
    }
    let mut adj = vec![Vec::new(); n];
    for (&(u, v), &w) in &best {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    adj.iter_mut().for_each(|a| a.sort_by_key(|e| e.0));
    SpannerGraph {
        n,
        backing: Backing::Sparse(adj),
        gamma_eff,
        edge_count: best.len(),
        epsilon: 1.0,
        params: None,
        scale_edges: Vec::new(),
    }
}

impl SpannerGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma_eff(&self) -> f64 {
        self.gamma_eff
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn params(&self) -> Option<&LshParams> {
        self.params.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.backing, Backing::Complete(_))
    }

    pub fn degree(&self, u: usize) -> usize {
        match &self.backing {
            Backing::Sparse(adj) => adj[u].len(),
            Backing::Complete(_) => self.n - 1,
        }
    }

    pub fn neighbors(&self, u: usize) -> Vec<(usize, f64)> {
        match &self.backing {
            Backing::Sparse(adj) => adj[u].clone(),
            Backing::Complete(p) => (0..self.n).filter(|&v| v != u).map(|v| (v, p.dist(u, v))).collect(),
        }
    }

    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        if u == v {
            return None;
        }
        match &self.backing {
            Backing::Sparse(adj) => adj[u].binary_search_by_key(&v, |e| e.0).ok().map(|i| adj[u][i].1),
            Backing::Complete(p) => Some(p.dist(u, v)),
        }
    }

    /// Canonical `(u < v, weight)` list sorted by endpoints.
    pub fn weighted_edges(&self) -> Vec<(usize, usize, f64)> {
        match &self.backing {
            Backing::Sparse(adj) => adj
                .iter()
                .enumerate()
                .flat_map(|(u, a)| a.iter().filter(move |e| e.0 > u).map(move |&(v, w)| (u, v, w)))
                .collect(),
            Backing::Complete(p) => (0..self.n)
                .flat_map(|u| (u + 1..self.n).map(move |v| (u, v, p.dist(u, v))))
                .collect(),
        }
    }

    /// Unweighted adjacency lists (sorted).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|u| self.neighbors(u).into_iter().map(|e| e.0).collect()).collect()
    }

    /// Shortest path of at most two hops; infinite when none exists.
    pub fn two_hop_distance(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        match &self.backing {
            Backing::Complete(p) => p.dist(x, y),
            Backing::Sparse(adj) => {
                let mut best = self.edge_weight(x, y).unwrap_or(f64::INFINITY);
                // merge the two sorted neighbour lists
                let (a, b) = (&adj[x], &adj[y]);
                let (mut i, mut j) = (0, 0);
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            best = best.min(a[i].1 + b[j].1);
                            i += 1;
                            j += 1;
                        }
                    }
                }
                best
            }
        }
    }

    /// All nodes within 2-hop distance `radius` of `x`, with that distance,
    /// sorted by (distance, id). Includes `x` at distance 0.
    pub fn two_hop_ball(&self, x: usize, radius: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = match &self.backing {
            Backing::Complete(p) => (0..self.n).map(|y| (y, p.dist(x, y))).filter(|e| e.1 <= radius).collect(),
            Backing::Sparse(adj) => {
                let mut cand = vec![(x, 0.0)];
                for &(z, w1) in &adj[x] {
                    if w1 > radius {
                        continue;
                    }
                    cand.push((z, w1));
                    for &(y, w2) in &adj[z] {
                        if w1 + w2 <= radius {
                            cand.push((y, w1 + w2));
                        }
                    }
                }
                cand.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                cand.dedup_by_key(|e| e.0);
                cand
            }
        };
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// `B⁺(x, r)` restricted to nodes accepted by `keep`, as sorted ids.
    pub fn ball_plus(&self, x: usize, radius: f64, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        let mut ids: Vec<usize> = self.two_hop_ball(x, radius).into_iter().map(|e| e.0).filter(|&y| keep(y)).collect();
        ids.sort_unstable();
        ids
    }

    /// Weighted shortest-path distances from `x` (Dijkstra).
    pub fn shortest_paths(&self, x: usize) -> Vec<f64> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let mut dist = vec![f64::INFINITY; self.n];
        dist[x] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push((Reverse(OrdF64(0.0)), x));
        while let Some((Reverse(OrdF64(d)), u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (v, w) in self.neighbors(u) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push((Reverse(OrdF64(nd)), v));
                }
            }
        }
        dist
    }

    /// Whether the pair is covered in the form required of the spanner: a
    /// direct edge of weight at most `dist/2` or a 2-path of total at most `dist`.
    pub fn covers_pair(&self, x: usize, y: usize, dist: f64) -> bool {
        if x == y {
            return true;
        }
        if let Some(w) = self.edge_weight(x, y) {
            if w <= dist / 2.0 {
                return true;
            }
        }
        match &self.backing {
            Backing::Complete(_) => true,
            Backing::Sparse(adj) => {
                let (a, b) = (&adj[x], &adj[y]);
                let (mut i, mut j) = (0, 0);
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            if a[i].1 + b[j].1 <= dist {
                                return true;
                            }
                            i += 1;
                            j += 1;
                        }
                    }
                }
                false
            }
        }
    }

    /// Edge list as CSV `u,v,weight` after one comment line with the build parameters.
    pub fn export_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (seed, reps) = self.params.as_ref().map_or((0, 0), |p| (p.rotation_seed, p.repetitions));
        writeln!(
            w,
            "# n={} epsilon={} gamma_eff={} rotation_seed={} repetitions={}",
            self.n, self.epsilon, self.gamma_eff, seed, reps
        )?;
        writeln!(w, "u,v,weight")?;
        for (u, v, wt) in self.weighted_edges() {
            writeln!(w, "{u},{v},{wt:?}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Fraction of `pairs` not covered in the spanner form.
pub fn coverage_miss_rate(g: &SpannerGraph, points: &PointSet, pairs: &[(usize, usize)]) -> f64 {
    let misses = pairs.iter().filter(|&&(x, y)| !g.covers_pair(x, y, points.dist(x, y))).count();
    misses as f64 / pairs.len().max(1) as f64
}
