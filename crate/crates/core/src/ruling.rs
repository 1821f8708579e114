//! Symmetry breaking on unweighted graphs: Luby marking, MIS, sparsified
//! ruling sets and weighted cover sets.
//!
//! Round charges: building `G^t[X]` explicitly costs `t` rounds, a marking
//! step 2 (degree exchange and marks), a Luby MIS iteration 2 (priorities
//! and removal notices), removing nodes within `h` hops of a set `h`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mpc::Cluster;
use crate::rng;

/// Constant `c` in the marking probability `c · ln n / d̂`.
pub const MARK_CONST: f64 = 4.0;
/// Constant in the per-class iteration count `⌈c · log2(1/ε)⌉` of the cover set.
pub const COVER_ITER_CONST: f64 = 4.0;
/// Hop radius, as a multiple of `t`, that counts as covered.
pub const COVER_RADIUS_FACTOR: usize = 5;
/// Cover radius of the inner ruling set in hops of `G^t[M]`.
pub const INNER_RADIUS: usize = 2;

pub const UNREACHED: usize = usize::MAX;

/// Simple undirected graph given by sorted adjacency lists.
#[derive(Clone, Debug, Default)]
pub struct GraphView {
    adj: Vec<Vec<usize>>,
}

impl GraphView {
    pub fn from_adjacency(mut adj: Vec<Vec<usize>>) -> Self {
        for (u, list) in adj.iter_mut().enumerate() {
            list.retain(|&v| v != u);
            list.sort_unstable();
            list.dedup();
        }
        Self { adj }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        Self::from_adjacency(adj)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adj
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Hop distance from the nearest source, capped at `limit` (beyond is [`UNREACHED`]).
    pub fn distances_from(&self, sources: &[usize], limit: usize) -> Vec<usize> {
        let mut dist = vec![UNREACHED; self.len()];
        let mut frontier: Vec<usize> = Vec::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                frontier.push(s);
            }
        }
        let mut depth = 0;
        while !frontier.is_empty() && depth < limit {
            depth += 1;
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &self.adj[u] {
                    if dist[v] == UNREACHED {
                        dist[v] = depth;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        dist
    }

    /// `G^t[nodes]`, indexed by position in `nodes`.
    pub fn power_induced(&self, nodes: &[usize], t: usize) -> GraphView {
        let mut pos = vec![UNREACHED; self.len()];
        for (i, &v) in nodes.iter().enumerate() {
            pos[v] = i;
        }
        let adj = nodes
            .iter()
            .map(|&v| {
                let dist = self.bounded_bfs(v, t);
                dist.into_iter().filter(|&(u, _)| pos[u] != UNREACHED && u != v).map(|(u, _)| pos[u]).collect()
            })
            .collect();
        GraphView::from_adjacency(adj)
    }

    /// Nodes within `t` hops of `src` with their distance.
    fn bounded_bfs(&self, src: usize, t: usize) -> Vec<(usize, usize)> {
        let mut seen = std::collections::HashMap::new();
        seen.insert(src, 0);
        let mut frontier = vec![src];
        let mut out = vec![(src, 0)];
        for depth in 1..=t {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &self.adj[u] {
                    if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(v) {
                        e.insert(depth);
                        next.push(v);
                        out.push((v, depth));
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        out
    }

    /// Subgraph induced by `nodes`, indexed by position in `nodes`.
    pub fn induced(&self, nodes: &[usize]) -> GraphView {
        self.power_induced(nodes, 1)
    }
}

/// Whether `set` has pairwise hop distance greater than `t`.
pub fn is_independent_at_power(g: &GraphView, set: &[usize], t: usize) -> bool {
    let mut member = vec![false; g.len()];
    set.iter().for_each(|&v| member[v] = true);
    set.iter().all(|&s| g.bounded_bfs(s, t).iter().all(|&(u, d)| d == 0 || !member[u]))
}

/// Mark every node independently with probability `min(1, c · ln n / d̂(v))`.
/// Requires `max(deg, 1) ≤ d̂ ≤ 2 · max(deg, 1)`.
pub fn luby_cover_step(h: &GraphView, d_hat: &[f64], seed: u64) -> Result<Vec<usize>> {
    let n = h.len();
    if d_hat.len() != n {
        return Err(Error::input("degree estimates do not match the graph"));
    }
    for (v, &d) in d_hat.iter().enumerate() {
        let deg = h.degree(v).max(1) as f64;
        if !(d >= deg && d <= 2.0 * deg) {
            return Err(Error::input(format!("degree estimate {d} for node {v} outside [{deg}, {}]", 2.0 * deg)));
        }
    }
    let logn = (n.max(2) as f64).ln();
    Ok((0..n)
        .filter(|&v| {
            let p = (MARK_CONST * logn / d_hat[v]).min(1.0);
            rng::keyed_unit(seed, &[rng::tag::LUBY, v as u64]) < p
        })
        .collect())
}

fn exact_degrees(h: &GraphView) -> Vec<f64> {
    (0..h.len()).map(|v| h.degree(v).max(1) as f64).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MisResult {
    pub members: Vec<usize>,
    pub iterations: usize,
}

/// Luby's algorithm with random priorities; ties in priority broken by id.
pub fn mis(h: &GraphView, seed: u64) -> MisResult {
    let n = h.len();
    let mut alive = vec![true; n];
    let mut members = Vec::new();
    let mut iterations = 0;
    let mut remaining = n;
    while remaining > 0 {
        iterations += 1;
        let prio: Vec<f64> = (0..n).map(|v| rng::keyed_unit(seed, &[rng::tag::MIS, iterations as u64, v as u64])).collect();
        let beats = |a: usize, b: usize| (prio[a], a) < (prio[b], b);
        let join: Vec<usize> = (0..n)
            .filter(|&v| alive[v] && h.neighbors(v).iter().all(|&u| !alive[u] || beats(v, u)))
            .collect();
        for &v in &join {
            members.push(v);
            for &u in h.neighbors(v).iter().chain(std::iter::once(&v)) {
                if alive[u] {
                    alive[u] = false;
                    remaining -= 1;
                }
            }
        }
    }
    members.sort_unstable();
    MisResult { members, iterations }
}

fn mis_charged(cluster: &mut Cluster, h: &GraphView, seed: u64) -> Result<MisResult> {
    cluster.hold(2 * h.edge_count() + h.len(), 1)?;
    let res = mis(h, seed);
    cluster.charge(2 * res.iterations as u64);
    Ok(res)
}

#[derive(Clone, Debug, Serialize)]
pub struct RulingSet {
    pub members: Vec<usize>,
    /// Largest distance, in hops of `G^t`, from a node of `U` to the set.
    pub b_out: usize,
    pub phases: usize,
    /// Maximum degree of `G^t[U_p]` after each phase.
    pub residual_max_degree: Vec<usize>,
    /// Size of `U` after each phase.
    pub residual_size: Vec<usize>,
}

/// Independent set of `G^t[M]` covering `M` within [`INNER_RADIUS`] hops:
/// iterated marking with removal, then a completion pass on the residual.
fn inner_ruling(cluster: &mut Cluster, k: &GraphView, seed: u64) -> Result<Vec<usize>> {
    let n = k.len();
    let logn = (cluster.config().n.max(2) as f64).log2();
    let iters = (logn.log2().max(1.0).log2().max(0.0)).ceil() as usize + 3;
    let mut in_r: Vec<bool> = vec![true; n];
    let mut chosen: Vec<usize> = Vec::new();
    for it in 0..iters {
        let rest: Vec<usize> = (0..n).filter(|&v| in_r[v]).collect();
        if rest.is_empty() {
            break;
        }
        let sub = k.induced(&rest);
        let marked = luby_cover_step(&sub, &exact_degrees(&sub), rng::derive(seed, &[it as u64, 0]))?;
        cluster.charge(2);
        let marked_ids: Vec<usize> = marked.iter().map(|&i| rest[i]).collect();
        let mis_sub = k.induced(&marked_ids);
        let picked = mis_charged(cluster, &mis_sub, rng::derive(seed, &[it as u64, 1]))?;
        let picked_ids: Vec<usize> = picked.members.iter().map(|&i| marked_ids[i]).collect();
        let dist = k.distances_from(&picked_ids, INNER_RADIUS);
        cluster.charge(INNER_RADIUS as u64);
        for v in 0..n {
            if dist[v] != UNREACHED {
                in_r[v] = false;
            }
        }
        chosen.extend(picked_ids);
    }
    let residual: Vec<usize> = (0..n).filter(|&v| in_r[v]).collect();
    if !residual.is_empty() {
        let sub = k.induced(&residual);
        let words = 2 * sub.edge_count() + sub.len();
        if words <= cluster.config().machine_capacity() {
            // gather on one machine, greedy by id, scatter back
            cluster.exchange(words, 1)?;
            cluster.charge(1);
            let mut taken = vec![false; sub.len()];
            for v in 0..sub.len() {
                if !sub.neighbors(v).iter().any(|&u| taken[u]) {
                    taken[v] = true;
                    chosen.push(residual[v]);
                }
            }
        } else {
            let picked = mis_charged(cluster, &sub, rng::derive(seed, &[u64::MAX]))?;
            chosen.extend(picked.members.iter().map(|&i| residual[i]));
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Ruling set of `G^t[U]`: independent in `G^t`, every node of `U` within
/// `b_out` hops of `G^t`. Runs `⌈1/ε⌉` phases; phase `p` samples nodes with
/// probability `c · ln n / n^{1−εp}`, materialises the sampled power graph,
/// solves it with the inner routine and drops all nodes it covers.
pub fn ruling_set_2b(cluster: &mut Cluster, g: &GraphView, u_set: &[usize], t: usize, epsilon: f64, seed: u64) -> Result<RulingSet> {
    if t < 2 {
        return Err(Error::input(format!("ruling sets need t ≥ 2, got {t}")));
    }
    let sigma = cluster.config().sigma;
    if !(epsilon > 0.0 && epsilon < sigma / 2.0) {
        return Err(Error::input(format!("ε must lie in (0, σ/2) = (0, {}), got {epsilon}", sigma / 2.0)));
    }
    ruling_set_unchecked(cluster, g, u_set, t, epsilon, seed)
}

fn ruling_set_unchecked(cluster: &mut Cluster, g: &GraphView, u_set: &[usize], t: usize, epsilon: f64, seed: u64) -> Result<RulingSet> {
    let n = g.len();
    let logn = (n.max(2) as f64).ln();
    let phases = (1.0 / epsilon).ceil() as usize;
    let mut in_u = vec![false; n];
    u_set.iter().for_each(|&u| in_u[u] = true);
    let mut members: Vec<usize> = Vec::new();
    let mut residual_max_degree = Vec::with_capacity(phases);
    let mut residual_size = Vec::with_capacity(phases);
    for p in 1..=phases {
        let rest: Vec<usize> = (0..n).filter(|&v| in_u[v]).collect();
        if rest.is_empty() {
            residual_max_degree.push(0);
            residual_size.push(0);
            continue;
        }
        let prob = if p == phases { 1.0 } else { (MARK_CONST * logn / (n as f64).powf(1.0 - epsilon * p as f64)).min(1.0) };
        let marked: Vec<usize> =
            rest.iter().copied().filter(|&v| rng::keyed_unit(seed, &[rng::tag::RULING, p as u64, v as u64]) < prob).collect();
        let k = g.power_induced(&marked, t);
        cluster.hold(2 * k.edge_count() + k.len(), 1)?;
        cluster.charge(t as u64);
        let picked_pos = inner_ruling(cluster, &k, rng::derive(seed, &[rng::tag::RULING, p as u64]))?;
        let picked: Vec<usize> = picked_pos.iter().map(|&i| marked[i]).collect();
        let reach = t * (INNER_RADIUS + 1);
        let dist = g.distances_from(&picked, reach);
        cluster.charge(reach as u64);
        for v in 0..n {
            if dist[v] != UNREACHED {
                in_u[v] = false;
            }
        }
        members.extend(picked);
        let rest: Vec<usize> = (0..n).filter(|&v| in_u[v]).collect();
        let residual = g.power_induced(&rest, t);
        residual_max_degree.push((0..residual.len()).map(|v| residual.degree(v)).max().unwrap_or(0));
        residual_size.push(rest.len());
    }
    members.sort_unstable();
    let dist = g.distances_from(&members, usize::MAX);
    let b_out = u_set.iter().map(|&u| dist[u].div_ceil(t)).max().unwrap_or(0);
    Ok(RulingSet { members, b_out, phases, residual_max_degree, residual_size })
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverSet {
    pub members: Vec<usize>,
    /// Every node lies within `t · b_cover` hops of the set.
    pub b_cover: usize,
    pub total_weight: f64,
    /// Weight of nodes with no member within `5t` hops.
    pub uncovered_weight: f64,
    /// Members added by the ruling-set patch.
    pub patched: usize,
}

impl CoverSet {
    pub fn uncovered_fraction(&self) -> f64 {
        if self.total_weight > 0.0 {
            self.uncovered_weight / self.total_weight
        } else {
            0.0
        }
    }
}

/// Weighted cover set: independent in `G^t`, leaves at most an `ε` fraction
/// of the weight farther than `5t` hops, and covers every node within
/// `t · b_cover` hops. Nodes of weight zero belong to no weight class but
/// are still covered by the final patch.
pub fn weighted_cover_set(cluster: &mut Cluster, g: &GraphView, weights: &[f64], t: usize, epsilon: f64, seed: u64) -> Result<CoverSet> {
    let n = g.len();
    if t == 0 {
        return Err(Error::input("cover sets need t ≥ 1"));
    }
    if weights.len() != n {
        return Err(Error::input("weights do not match the graph"));
    }
    if let Some(v) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::input(format!("weight of node {v} is not a finite nonnegative real")));
    }
    let min_pos = weights.iter().copied().filter(|&w| w > 0.0).fold(f64::INFINITY, f64::min);
    let mut classes: std::collections::BTreeMap<i64, Vec<usize>> = std::collections::BTreeMap::new();
    for (v, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            classes.entry((w / min_pos).log2().floor() as i64).or_default().push(v);
        }
    }
    let iters = if epsilon >= 1.0 { 1 } else { (COVER_ITER_CONST * (1.0 / epsilon).log2()).ceil() as usize };
    let mut marked_all: Vec<usize> = Vec::new();
    let mut class_rounds = 0u64;
    for (&cls, nodes) in &classes {
        let h = g.power_induced(nodes, 2 * t);
        cluster.hold(2 * h.edge_count() + h.len(), 1)?;
        let mut rounds = 2 * t as u64;
        let mut alive = vec![true; nodes.len()];
        for it in 0..iters {
            let rest: Vec<usize> = (0..nodes.len()).filter(|&i| alive[i]).collect();
            if rest.is_empty() {
                break;
            }
            let sub = h.induced(&rest);
            let key = rng::derive(seed, &[rng::tag::COVER, cls as u64, it as u64]);
            let marked: Vec<usize> = luby_cover_step(&sub, &exact_degrees(&sub), key)?.into_iter().map(|i| nodes[rest[i]]).collect();
            let dist = g.distances_from(&marked, 4 * t);
            for (i, &v) in nodes.iter().enumerate() {
                if dist[v] != UNREACHED {
                    alive[i] = false;
                }
            }
            marked_all.extend(marked);
            rounds += 2 + 4 * t as u64;
        }
        // classes run in parallel
        class_rounds = class_rounds.max(rounds);
    }
    cluster.charge(class_rounds);
    marked_all.sort_unstable();
    marked_all.dedup();
    let power = g.power_induced(&marked_all, t);
    cluster.charge(t as u64);
    let first = mis_charged(cluster, &power, rng::derive(seed, &[rng::tag::COVER, u64::MAX]))?;
    let mut members: Vec<usize> = first.members.iter().map(|&i| marked_all[i]).collect();
    let radius = COVER_RADIUS_FACTOR * t;
    let dist = g.distances_from(&members, radius);
    cluster.charge(radius as u64);
    let uncovered: Vec<usize> = (0..n).filter(|&v| dist[v] == UNREACHED).collect();
    let mut patched = 0;
    if !uncovered.is_empty() {
        let eps = cluster.config().sigma / 4.0;
        let patch = ruling_set_unchecked(cluster, g, &uncovered, t, eps, rng::derive(seed, &[rng::tag::COVER, u64::MAX - 1]))?;
        patched = patch.members.len();
        members.extend(patch.members);
    }
    members.sort_unstable();
    let dist = g.distances_from(&members, usize::MAX);
    let b_cover = dist.iter().filter(|&&d| d != UNREACHED).map(|d| d.div_ceil(t)).max().unwrap_or(0);
    let total_weight: f64 = weights.iter().sum();
    let uncovered_weight: f64 = (0..n).filter(|&v| dist[v] > radius).map(|v| weights[v]).sum();
    Ok(CoverSet { members, b_cover, total_weight, uncovered_weight, patched })
}
