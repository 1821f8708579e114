//! Parallel primal-dual facility location.
//!
//! The pipeline runs seven phases on a simulated cluster:
//! radii, initial duals, problematic clients, approximately paid facilities,
//! a sparse base graph for the dependency graph, clustering around cover-set
//! centers, and opening one facility per cluster. Every phase charges the
//! [`RoundLedger`] of its cluster.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{build_spanner, build_spanner_within, exact_mode_spanner, LshParams, SpannerGraph};
use crate::model::{ConstantTable, FlInstance, PointSet, REL_TOL};
use crate::mpc::{group_aggregate, Cluster, ClusterConfig, KeyedRecords, RoundLedger, SumSketch};
use crate::oracles;
use crate::rng;
use crate::ruling::{weighted_cover_set, CoverSet, GraphView, COVER_RADIUS_FACTOR, UNREACHED};

/// Hop parameter of the cover set: centers end up at least `t + 1 = 7`
/// hops apart in the base graph.
pub const COVER_HOPS: usize = 6;
/// Accuracy of the ball-size sketch used for radii: `b ≤ b̃ ≤ 1.5 b`.
pub const RADIUS_SKETCH_EPSILON: f64 = 0.5;
pub const MAX_RESEEDS: usize = 8;
pub const MAX_SEARCH_DOUBLINGS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Complete graph with exact distances; unbounded global memory.
    Exact,
    /// Hash-based sparse spanner.
    Lsh,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "lsh" => Ok(Mode::Lsh),
            other => Err(Error::input(format!("unknown mode {other:?}, expected exact or lsh"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlConfig {
    pub mode: Mode,
    pub sigma: f64,
    /// Spanner sparsity and global memory exponent.
    pub epsilon: f64,
    pub constants: ConstantTable,
    pub seed: u64,
    pub lsh: Option<LshParams>,
}

impl FlConfig {
    pub fn new(mode: Mode, constants: ConstantTable) -> Self {
        Self { mode, sigma: 0.5, epsilon: 0.4, constants, seed: 0, lsh: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Searches for nearby paid facilities may widen their radius unless the
    /// run is exact with constants in the proven regime.
    pub fn allows_retries(&self) -> bool {
        self.mode == Mode::Lsh || !self.constants.theory_valid
    }

    pub fn lsh_params(&self, dim: usize) -> LshParams {
        self.lsh.clone().unwrap_or_else(|| LshParams::new(dim, rng::derive(self.seed, &[rng::tag::SPANNER])))
    }

    pub fn cluster_config(&self, n: usize) -> Result<ClusterConfig> {
        let mut cfg = ClusterConfig::new(n, self.sigma, self.epsilon)?;
        if self.mode == Mode::Exact {
            cfg.budget_slack = f64::INFINITY;
        }
        Ok(cfg)
    }
}

/// Graph over the sites of an instance for the configured mode.
pub fn build_graph(points: &PointSet, config: &FlConfig) -> Result<SpannerGraph> {
    match config.mode {
        Mode::Exact => exact_mode_spanner(points),
        Mode::Lsh => build_spanner(points, config.epsilon, &config.lsh_params(points.dim())),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DualState {
    /// Estimated radii `r̂_f`.
    pub radii_hat: Vec<f64>,
    /// Radii behind the dual levels: exact in exact mode, `radii_hat` otherwise.
    pub radii: Vec<f64>,
    /// `α⁺_c = min_f max(r_f², 4^{ℓ⁺_f})`.
    pub alpha_plus: Vec<f64>,
    pub alpha0: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub problematic: Vec<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DependencyBase {
    /// Facility ids of the approximately paid set; graph nodes are positions here.
    pub nodes: Vec<usize>,
    #[serde(skip)]
    pub graph: GraphView,
    /// Radius classes as (exponent, positions).
    pub classes: Vec<(i32, Vec<usize>)>,
}

impl DependencyBase {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.graph.len())
            .flat_map(|u| self.graph.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (self.nodes[u], self.nodes[v])))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Clustering {
    /// Cluster centers as facility ids.
    pub centers: Vec<usize>,
    /// Per base-graph node: its center (facility id) and hop distance to it.
    pub center_of: Vec<usize>,
    pub depth: Vec<usize>,
    /// Per client: the chosen nearby paid facility `f_c`.
    pub client_facility: Vec<usize>,
    /// Per client: the center of its cluster.
    pub client_center: Vec<usize>,
    /// Clients whose `f_c` lies within `5t` hops of its center.
    pub near: Vec<bool>,
    /// Facility weights `Σ α_{c,0}` over clients choosing them, per base-graph node.
    pub weights: Vec<f64>,
    pub cover: CoverSet,
    /// `(A − A⁺)/A`.
    pub weight_gap: f64,
    pub weight_gap_bound: f64,
    pub reseeds: usize,
    pub search_retries: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlSolution {
    pub lambda: f64,
    pub opened: Vec<usize>,
    /// Opened facility of every client.
    pub assign: Vec<usize>,
    pub connection_cost: f64,
    pub duals: DualState,
    pub paid: Vec<usize>,
    pub dependency: DependencyBase,
    pub clustering: Clustering,
    pub constants: ConstantTable,
    pub mode: Mode,
    pub gamma_eff: f64,
    pub ledger: RoundLedger,
}

impl FlSolution {
    pub fn objective(&self) -> f64 {
        self.connection_cost + self.opened.len() as f64 * self.lambda
    }

    /// Facility ids of every cluster, keyed by center.
    pub fn cluster_facilities(&self) -> std::collections::BTreeMap<usize, Vec<usize>> {
        let mut out: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
        for (pos, &f) in self.dependency.nodes.iter().enumerate() {
            out.entry(self.clustering.center_of[pos]).or_default().push(f);
        }
        out
    }
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// One 1-hop exchange per hop over every directed edge.
fn charge_hops(cluster: &mut Cluster, g: &SpannerGraph, hops: usize, record_words: usize, copies: usize) -> Result<()> {
    for _ in 0..hops {
        cluster.exchange(2 * g.edge_count() * copies, record_words)?;
    }
    Ok(())
}

/// Step I: `r̂_f = 2^{ℓ̂}` with `ℓ̂` the largest scale at which the sketched
/// count of clients in the 2-hop ball of radius `2^ℓ`, times `4^ℓ`, stays
/// within λ. Facilities that reach no client get `+∞`.
pub fn step1_radii(cluster: &mut Cluster, inst: &FlInstance, g: &SpannerGraph, seed: u64) -> Result<Vec<f64>> {
    let nc = inst.num_clients();
    let lambda = inst.lambda();
    let sketch = SumSketch::new(g.n(), RADIUS_SKETCH_EPSILON)?;
    let reps = sketch.reps();
    let top = ((lambda + inst.diameter().powi(2)).sqrt().log2().ceil() as i32) + 1;
    let bottom = -(((1.5 * nc as f64).log2() / 2.0).ceil() as i32) - 1;
    let scales = (top - bottom + 1) as usize;

    // (scale, repetition) units run in parallel as far as the global budget allows
    cluster.hold(nc * reps, 1)?;
    let per_unit = 2 * g.edge_count().max(1);
    let units = scales * reps;
    let budget = cluster.config().global_budget_words();
    let batch = (budget / per_unit).clamp(1, units);
    for _ in 0..units.div_ceil(batch) {
        cluster.exchange(per_unit * batch, 1)?;
        cluster.exchange(per_unit * batch, 1)?;
    }

    let draws: Vec<Vec<f64>> = (0..nc).into_par_iter().map(|c| sketch.draws(seed, inst.client_site(c), 1.0)).collect();
    let radius_top = pow2(top);
    Ok((0..inst.num_facilities())
        .into_par_iter()
        .map(|f| {
            let ball: Vec<(usize, f64)> = g
                .two_hop_ball(inst.facility_site(f), radius_top)
                .into_iter()
                .filter_map(|(site, d)| inst.client_at(site).map(|c| (c, d)))
                .collect();
            if ball.is_empty() {
                return f64::INFINITY;
            }
            let mut mins = vec![f64::INFINITY; reps];
            let mut idx = 0;
            let mut best = bottom;
            for ell in bottom..=top {
                while idx < ball.len() && ball[idx].1 <= pow2(ell) {
                    for (m, d) in mins.iter_mut().zip(&draws[ball[idx].0]) {
                        *m = m.min(*d);
                    }
                    idx += 1;
                }
                let estimate = if idx == 0 { 0.0 } else { sketch.estimate(&mins) };
                if estimate * 4f64.powi(ell) <= lambda {
                    best = ell;
                } else {
                    break;
                }
            }
            pow2(best)
        })
        .collect())
}

/// Exact radii by a per-facility sort and prefix scan (one sort and one
/// aggregation on the cluster).
pub fn exact_radii_on_cluster(cluster: &mut Cluster, inst: &FlInstance) -> Result<Vec<f64>> {
    let pairs = inst.num_clients() * inst.num_facilities();
    cluster.hold(pairs, 2)?;
    cluster.charge(1);
    cluster.charge(3);
    Ok((0..inst.num_facilities()).into_par_iter().map(|f| oracles::exact_radius(inst, inst.lambda(), f)).collect())
}

/// Step II: `α⁺_c = min_f max(r_f², 4^{ℓ⁺_f})` with `ℓ⁺_f` the smallest
/// nonnegative scale whose 2-hop ball around `c` contains `f`, and
/// `α_{c,0} = α⁺_c / (8Γ²)`.
pub fn step2_alpha0(cluster: &mut Cluster, inst: &FlInstance, g: &SpannerGraph, radii: &[f64], ct: &ConstantTable) -> Result<(Vec<f64>, Vec<f64>)> {
    let scales = crate::graph::scale_range(inst.diameter()).count();
    charge_hops(cluster, g, 2, 2, scales)?;
    let alpha_plus: Vec<f64> = (0..inst.num_clients())
        .into_par_iter()
        .map(|c| {
            g.two_hop_ball(inst.client_site(c), f64::INFINITY)
                .into_iter()
                .filter_map(|(site, d)| inst.facility_at(site).map(|f| (f, d)))
                .map(|(f, d)| {
                    let ell = if d > 1.0 { d.log2().ceil() } else { 0.0 };
                    (radii[f] * radii[f]).max(4f64.powf(ell))
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    if let Some(c) = alpha_plus.iter().position(|a| !a.is_finite()) {
        return Err(Error::input(format!("client {c} reaches no facility with a finite radius")));
    }
    let scale = 8.0 * ct.gamma * ct.gamma;
    let alpha0 = alpha_plus.iter().map(|a| a / scale).collect();
    Ok((alpha_plus, alpha0))
}

/// Step III: flag `c` when some client within 2-hop distance
/// `γ1 · Γ_G · √α⁺_c` has `α_{c',0} ≤ α_{c,0}/Q`. Returns the flags and
/// the upper duals.
pub fn step3_problematic(
    cluster: &mut Cluster,
    inst: &FlInstance,
    g: &SpannerGraph,
    alpha_plus: &[f64],
    alpha0: &[f64],
    ct: &ConstantTable,
) -> Result<(Vec<bool>, Vec<f64>)> {
    charge_hops(cluster, g, 2, 2, 1)?;
    let reach = ct.gamma1 * g.gamma_eff();
    let flags: Vec<bool> = (0..inst.num_clients())
        .into_par_iter()
        .map(|c| {
            let limit = alpha0[c] / ct.q;
            g.two_hop_ball(inst.client_site(c), reach * alpha_plus[c].sqrt())
                .into_iter()
                .filter_map(|(site, _)| inst.client_at(site))
                .any(|other| alpha0[other] <= limit)
        })
        .collect();
    let alpha1 = alpha0.iter().zip(&flags).map(|(&a, &p)| if p { a } else { ct.c_a * a }).collect();
    Ok((flags, alpha1))
}

/// Step IV: facilities whose estimated payment
/// `Σ_c [(κ/Γ_G²)·α_{c,1} − d₂(c,f)²]^+` reaches λ. Each client emits its
/// terms over its 2-hop ball and the terms are summed per facility.
pub fn step4_paid(cluster: &mut Cluster, inst: &FlInstance, g: &SpannerGraph, duals: &DualState, ct: &ConstantTable) -> Result<Vec<usize>> {
    let scale = ct.kappa / (g.gamma_eff() * g.gamma_eff());
    charge_hops(cluster, g, 2, 2, 1)?;
    let terms: Vec<Vec<(u64, f64)>> = (0..inst.num_clients())
        .into_par_iter()
        .map(|c| {
            let level = scale * duals.alpha1[c];
            g.two_hop_ball(inst.client_site(c), level.sqrt())
                .into_iter()
                .filter_map(|(site, d)| inst.facility_at(site).map(|f| (f as u64, level - d * d)))
                .filter(|e| e.1 > 0.0)
                .collect()
        })
        .collect();
    let records: Vec<(u64, f64)> = terms.into_iter().flatten().collect();
    let data = KeyedRecords::new(cluster, records)?;
    let sums = group_aggregate(cluster, &data, |a, b| a + b)?;
    let mut paid: Vec<usize> = data
        .records()
        .iter()
        .zip(&sums)
        .filter(|(_, &s)| s >= inst.lambda())
        .map(|((f, _), _)| *f as usize)
        .collect();
    paid.sort_unstable();
    paid.dedup();
    Ok(paid)
}

/// Radius classes `{f : 2^i ≤ r̂_f ≤ 2^{i+1}·C_R·ζ}` over the positions of `s`.
pub fn radius_classes(s: &[usize], radii_hat: &[f64], ct: &ConstantTable) -> Vec<(i32, Vec<usize>)> {
    let stretch = 2.0 * ct.c_r * ct.zeta;
    let mut classes: std::collections::BTreeMap<i32, Vec<usize>> = std::collections::BTreeMap::new();
    for (pos, &f) in s.iter().enumerate() {
        let r = radii_hat[f];
        if !r.is_finite() {
            continue;
        }
        let lo = (r / stretch).log2().ceil() as i32;
        let hi = r.log2().floor() as i32;
        for i in lo..=hi {
            if pow2(i) <= r && r <= pow2(i + 1) * ct.c_r * ct.zeta {
                classes.entry(i).or_default().push(pos);
            }
        }
    }
    classes.into_iter().collect()
}

/// Step V: per radius class, a distance graph over the class (exact when the
/// mode is exact or the class fits one machine, a spanner otherwise); pairs
/// joined by an edge of weight at most `2^{i+2}·√(κρ)·C_R²·ζ` form the base graph.
pub fn step5_dependency(
    cluster: &mut Cluster,
    inst: &FlInstance,
    s: &[usize],
    radii_hat: &[f64],
    ct: &ConstantTable,
    config: &FlConfig,
) -> Result<DependencyBase> {
    let classes = radius_classes(s, radii_hat, ct);
    let base = 4.0 * (ct.kappa * ct.rho).sqrt() * ct.c_r * ct.c_r * ct.zeta;
    let capacity = cluster.config().machine_capacity();
    let edge_budget = (inst.sites().len() as f64).powf(1.0 + config.epsilon);
    // per class: kept base edges and the number of spanner edges stored
    let per_class: Vec<(Vec<(usize, usize)>, usize)> = classes
        .par_iter()
        .map(|(i, members)| {
            let threshold = pow2(*i) * base;
            if members.len() < 2 {
                return Ok((Vec::new(), 0));
            }
            let ids: Vec<usize> = members.iter().map(|&p| inst.facility_site(s[p])).collect();
            let points = inst.sites().subset(&ids);
            let (local, stored): (Vec<(usize, usize, f64)>, usize) = if config.mode == Mode::Exact || members.len() <= capacity {
                let pairs = (0..members.len())
                    .flat_map(|a| (a + 1..members.len()).map(move |b| (a, b)))
                    .map(|(a, b)| (a, b, points.dist(a, b)))
                    .collect();
                (pairs, 0)
            } else {
                let mut params = config.lsh_params(points.dim());
                params.rotation_seed = rng::derive(config.seed, &[rng::tag::CLASS_SPANNER, *i as u64]);
                let edges = build_spanner_within(&points, config.epsilon, &params, edge_budget)?.weighted_edges();
                let stored = edges.len();
                (edges, stored)
            };
            let kept = local.into_iter().filter(|e| e.2 <= threshold).map(|(a, b, _)| (members[a], members[b])).collect();
            Ok((kept, stored))
        })
        .collect::<Result<_>>()?;
    // classes overlap, so each facility's edges appear in O(log(C_R·ζ)) class spanners
    cluster.hold(per_class.iter().map(|c| c.1).sum(), 3)?;
    let class_words: usize = classes.iter().map(|c| c.1.len()).sum();
    cluster.hold(class_words, 2)?;
    cluster.charge(2);
    let mut edges: Vec<(usize, usize)> = per_class.into_iter().flat_map(|c| c.0).map(|(a, b)| (a.min(b), a.max(b))).collect();
    edges.sort_unstable();
    edges.dedup();
    cluster.exchange(2 * edges.len(), 2)?;
    Ok(DependencyBase { nodes: s.to_vec(), graph: GraphView::from_edges(s.len(), &edges), classes })
}

/// Step VI, first part: each client picks the paid facility of least `r̂`
/// within 2-hop distance `√(η·α_{c,0})`, doubling the radius on a miss
/// when retries are allowed. Returns the choice per client and the number
/// of doublings used.
pub fn choose_client_facilities(
    cluster: &mut Cluster,
    inst: &FlInstance,
    g: &SpannerGraph,
    duals: &DualState,
    s: &[usize],
    ct: &ConstantTable,
    allow_retries: bool,
) -> Result<(Vec<usize>, usize)> {
    let mut in_s = vec![false; inst.num_facilities()];
    s.iter().for_each(|&f| in_s[f] = true);
    let search = |c: usize, radius: f64| -> Option<usize> {
        g.two_hop_ball(inst.client_site(c), radius)
            .into_iter()
            .filter_map(|(site, _)| inst.facility_at(site))
            .filter(|&f| in_s[f])
            .min_by(|&a, &b| duals.radii_hat[a].total_cmp(&duals.radii_hat[b]).then(a.cmp(&b)))
    };
    charge_hops(cluster, g, 2, 2, 1)?;
    let first: Vec<Option<usize>> = (0..inst.num_clients()).into_par_iter().map(|c| search(c, (ct.eta * duals.alpha0[c]).sqrt())).collect();
    let mut retries = 0;
    let mut out = Vec::with_capacity(first.len());
    for (c, found) in first.into_iter().enumerate() {
        let mut found = found;
        let mut radius = (ct.eta * duals.alpha0[c]).sqrt();
        let mut doublings = 0;
        while found.is_none() {
            if !allow_retries {
                return Err(Error::Solver(format!("client {c} has no approximately paid facility within {radius}")));
            }
            if doublings == MAX_SEARCH_DOUBLINGS {
                return Err(Error::Solver(format!("client {c} reaches no approximately paid facility")));
            }
            radius *= 2.0;
            doublings += 1;
            found = search(c, radius);
        }
        retries = retries.max(doublings);
        out.push(found.expect("loop exits with a facility"));
    }
    // retries run in lockstep across clients
    for _ in 0..retries {
        charge_hops(cluster, g, 2, 2, 1)?;
    }
    Ok((out, retries))
}

/// Multi-source BFS: the first center to reach a node claims it; within a
/// layer the lowest center id wins.
fn assign_to_centers(graph: &GraphView, centers: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = graph.len();
    let mut owner = vec![UNREACHED; n];
    let mut depth = vec![UNREACHED; n];
    let mut frontier: Vec<usize> = centers.to_vec();
    for &c in centers {
        owner[c] = c;
        depth[c] = 0;
    }
    let mut level = 0;
    while !frontier.is_empty() {
        level += 1;
        let mut next: Vec<usize> = Vec::new();
        for &u in &frontier {
            for &v in graph.neighbors(u) {
                if depth[v] == UNREACHED || (depth[v] == level && owner[u] < owner[v]) {
                    if depth[v] == UNREACHED {
                        next.push(v);
                    }
                    depth[v] = level;
                    owner[v] = owner[u];
                }
            }
        }
        frontier = next;
    }
    (owner, depth)
}

/// Step VI: weights, cover-set centers, clusters and the near/far split.
/// A run whose far weight exceeds the bound is redrawn with a fresh seed.
pub fn step6_cluster(
    cluster: &mut Cluster,
    inst: &FlInstance,
    g: &SpannerGraph,
    duals: &DualState,
    dep: &DependencyBase,
    ct: &ConstantTable,
    allow_retries: bool,
    seed: u64,
) -> Result<Clustering> {
    let s = &dep.nodes;
    let (client_facility, search_retries) = choose_client_facilities(cluster, inst, g, duals, s, ct, allow_retries)?;
    let mut pos = vec![UNREACHED; inst.num_facilities()];
    s.iter().enumerate().for_each(|(p, &f)| pos[f] = p);

    let records: Vec<(u64, f64)> = client_facility.iter().enumerate().map(|(c, &f)| (f as u64, duals.alpha0[c])).collect();
    let data = KeyedRecords::new(cluster, records)?;
    let sums = group_aggregate(cluster, &data, |a, b| a + b)?;
    let mut weights = vec![0.0; s.len()];
    for ((f, _), w) in data.records().iter().zip(&sums) {
        weights[pos[*f as usize]] = *w;
    }

    let n = inst.sites().len();
    let bound = (1.0 / (n.max(3) as f64).ln()).min(0.5);
    let total: f64 = duals.alpha0.iter().sum();
    let radius = COVER_RADIUS_FACTOR * COVER_HOPS;
    let mut reseeds = 0;
    loop {
        let key = rng::derive(seed, &[rng::tag::RESEED, reseeds as u64]);
        let cover = weighted_cover_set(cluster, &dep.graph, &weights, COVER_HOPS, bound, key)?;
        let (owner, depth) = assign_to_centers(&dep.graph, &cover.members);
        if let Some(p) = depth.iter().position(|&d| d == UNREACHED) {
            return Err(Error::Solver(format!("facility {} is not reached from any center", s[p])));
        }
        cluster.charge(*depth.iter().max().unwrap_or(&0) as u64);
        let far: f64 = client_facility.iter().enumerate().filter(|(_, &f)| depth[pos[f]] > radius).map(|(c, _)| duals.alpha0[c]).sum();
        let gap = if total > 0.0 { far / total } else { 0.0 };
        if gap <= bound {
            let center_of: Vec<usize> = owner.iter().map(|&o| s[o]).collect();
            let client_center = client_facility.iter().map(|&f| center_of[pos[f]]).collect();
            let near = client_facility.iter().map(|&f| depth[pos[f]] <= radius).collect();
            return Ok(Clustering {
                centers: cover.members.iter().map(|&p| s[p]).collect(),
                center_of,
                depth,
                client_facility,
                client_center,
                near,
                weights,
                cover,
                weight_gap: gap,
                weight_gap_bound: bound,
                reseeds,
                search_retries,
            });
        }
        reseeds += 1;
        if reseeds > MAX_RESEEDS {
            return Err(Error::Solver(format!("far weight fraction {gap} above {bound} after {MAX_RESEEDS} reseeds")));
        }
    }
}

/// Step VII: per cluster, the centroid of its clients and the cluster
/// facility closest to it (ties by id). Clusters without clients open
/// nothing. Returns the opened facilities and the assignment.
pub fn step7_open(cluster: &mut Cluster, inst: &FlInstance, dep: &DependencyBase, clustering: &Clustering) -> Result<(Vec<usize>, Vec<usize>)> {
    let dim = inst.sites().dim();
    let records: Vec<(u64, Vec<f64>)> = (0..inst.num_clients())
        .map(|c| {
            let mut payload = inst.client_point(c).to_vec();
            payload.push(1.0);
            (clustering.client_center[c] as u64, payload)
        })
        .collect();
    let data = KeyedRecords::new(cluster, records)?;
    let sums = group_aggregate(cluster, &data, |a, b| a.iter().zip(b).map(|(x, y)| x + y).collect())?;
    let mut centroid: std::collections::BTreeMap<usize, Vec<f64>> = std::collections::BTreeMap::new();
    for ((key, _), s) in data.records().iter().zip(&sums) {
        centroid.entry(*key as usize).or_insert_with(|| s[..dim].iter().map(|x| x / s[dim]).collect());
    }

    let candidates: Vec<(u64, (f64, u64))> = dep
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(p, &f)| {
            let center = clustering.center_of[p];
            centroid.get(&center).map(|mu| {
                let d2: f64 = inst.facility_point(f).iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                (center as u64, (d2, f as u64))
            })
        })
        .collect();
    let data = KeyedRecords::new(cluster, candidates)?;
    let best = group_aggregate(cluster, &data, |a, b| if (a.0, a.1) <= (b.0, b.1) { *a } else { *b })?;
    let mut open_of: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for ((key, _), b) in data.records().iter().zip(&best) {
        open_of.insert(*key as usize, b.1 as usize);
    }
    cluster.exchange(inst.num_clients(), 2)?;
    let assign: Vec<usize> = clustering.client_center.iter().map(|c| open_of[c]).collect();
    let mut opened: Vec<usize> = open_of.into_values().collect();
    opened.sort_unstable();
    Ok((opened, assign))
}

/// Solve on a prebuilt graph over the instance sites. The graph build is not
/// charged here.
pub fn solve_fl_on(inst: &FlInstance, g: &SpannerGraph, config: &FlConfig) -> Result<FlSolution> {
    if g.n() != inst.sites().len() {
        return Err(Error::input("graph does not match the instance sites"));
    }
    let ct = &config.constants;
    let mut cluster = Cluster::new(config.cluster_config(g.n())?);
    let seed = config.seed;

    cluster.set_phase("radii");
    let radii_hat = step1_radii(&mut cluster, inst, g, rng::derive(seed, &[1]))?;
    if let Some(f) = radii_hat.iter().position(|r| !r.is_finite()) {
        return Err(Error::input(format!("facility {f} reaches no client")));
    }
    let radii = match config.mode {
        Mode::Exact => exact_radii_on_cluster(&mut cluster, inst)?,
        Mode::Lsh => radii_hat.clone(),
    };

    cluster.set_phase("duals");
    let (alpha_plus, alpha0) = step2_alpha0(&mut cluster, inst, g, &radii, ct)?;

    cluster.set_phase("problematic");
    let (problematic, alpha1) = step3_problematic(&mut cluster, inst, g, &alpha_plus, &alpha0, ct)?;
    let duals = DualState { radii_hat, radii, alpha_plus, alpha0, alpha1, problematic };

    cluster.set_phase("paid");
    let paid = step4_paid(&mut cluster, inst, g, &duals, ct)?;
    if paid.is_empty() {
        return Err(Error::Solver("no facility is approximately paid".into()));
    }

    cluster.set_phase("dependency");
    let dependency = step5_dependency(&mut cluster, inst, &paid, &duals.radii_hat, ct, config)?;

    cluster.set_phase("clustering");
    let clustering = step6_cluster(&mut cluster, inst, g, &duals, &dependency, ct, config.allows_retries(), rng::derive(seed, &[6]))?;

    cluster.set_phase("opening");
    let (opened, assign) = step7_open(&mut cluster, inst, &dependency, &clustering)?;

    Ok(FlSolution {
        lambda: inst.lambda(),
        connection_cost: inst.connection_cost(&assign),
        opened,
        assign,
        duals,
        paid,
        dependency,
        clustering,
        constants: ct.clone(),
        mode: config.mode,
        gamma_eff: g.gamma_eff(),
        ledger: cluster.into_ledger(),
    })
}

/// Build the graph for the configured mode and solve.
pub fn solve_fl(inst: &FlInstance, config: &FlConfig) -> Result<FlSolution> {
    let g = build_graph(inst.sites(), config)?;
    let mut sol = solve_fl_on(inst, &g, config)?;
    *sol.ledger.rounds_by_phase.entry("spanner".into()).or_default() += 2;
    Ok(sol)
}

/// Dual solution built by raising, around each center, the duals of the
/// clients that κ-approximately contribute to it until some facility of its
/// closed neighbourhood in the dependency graph is exactly paid.
#[derive(Clone, Debug, Serialize)]
pub struct LmpCertificate {
    pub alpha: Vec<f64>,
    /// Dense `β[c][f]`.
    pub beta: Vec<Vec<f64>>,
    /// `(center, ξ, facility opened for it)`.
    pub centers: Vec<(usize, f64, usize)>,
    pub kappa: f64,
}

impl LmpCertificate {
    pub fn opened(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.centers.iter().map(|e| e.2).collect();
        out.sort_unstable();
        out
    }
}

/// Least `ξ ∈ [0, 1]` with `base + Σ_i [a_i + ξ·b_i]^+ ≥ λ`, where every
/// `b_i ≥ 0`. `None` when even `ξ = 1` falls short.
pub fn hinge_root(base: f64, terms: &[(f64, f64)], lambda: f64) -> Option<f64> {
    let value = |xi: f64| base + terms.iter().map(|&(a, b)| (a + xi * b).max(0.0)).sum::<f64>();
    if value(0.0) >= lambda {
        return Some(0.0);
    }
    if value(1.0) < lambda * (1.0 - REL_TOL) {
        return None;
    }
    let mut cuts: Vec<f64> = terms.iter().filter(|t| t.1 > 0.0).map(|&(a, b)| -a / b).filter(|&x| x > 0.0 && x < 1.0).collect();
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    let mut lo = 0.0;
    for &hi in &cuts {
        if value(hi) >= lambda {
            // linear on [lo, hi]: the slope is the sum of the active b_i
            let mid = 0.5 * (lo + hi);
            let slope: f64 = terms.iter().filter(|&&(a, b)| a + mid * b > 0.0).map(|t| t.1).sum();
            let xi = if slope > 0.0 { lo + (lambda - value(lo)) / slope } else { hi };
            return Some(xi.clamp(lo, hi));
        }
        lo = hi;
    }
    Some(1.0)
}

/// Sequential certificate oracle over a solved instance. Uses the true
/// dependency graph over the paid set.
pub fn lmp_dual_oracle(inst: &FlInstance, sol: &FlSolution) -> Result<LmpCertificate> {
    let kappa = sol.constants.kappa;
    let duals = &sol.duals;
    let (nc, nf) = (inst.num_clients(), inst.num_facilities());
    let s = &sol.paid;
    let h = oracles::dependency_graph(inst, &duals.alpha1, kappa, s);
    let mut pos = vec![UNREACHED; nf];
    s.iter().enumerate().for_each(|(p, &f)| pos[f] = p);

    let mut alpha = duals.alpha0.clone();
    let mut owner: Vec<Option<usize>> = vec![None; nc];
    let mut centers = Vec::new();
    for &center in &sol.clustering.centers {
        let contributors: Vec<usize> = (0..nc).filter(|&c| kappa * duals.alpha1[c] > inst.cost(c, center)).collect();
        for &c in &contributors {
            if let Some(other) = owner[c] {
                return Err(Error::Certificate(format!("client {c} contributes to centers {other} and {center}")));
            }
            owner[c] = Some(center);
        }
        let mut in_cf = vec![false; nc];
        contributors.iter().for_each(|&c| in_cf[c] = true);
        let mut hood: Vec<usize> = std::iter::once(center).chain(h[pos[center]].iter().map(|&p| s[p])).collect();
        hood.sort_unstable();
        let mut best: Option<(f64, usize)> = None;
        for &f in &hood {
            let base: f64 = (0..nc).filter(|&c| !in_cf[c]).map(|c| (duals.alpha0[c] - inst.cost(c, f)).max(0.0)).sum();
            let terms: Vec<(f64, f64)> = contributors
                .iter()
                .map(|&c| (duals.alpha0[c] - inst.cost(c, f), kappa * duals.alpha1[c] - duals.alpha0[c]))
                .collect();
            if let Some(xi) = hinge_root(base, &terms, inst.lambda()) {
                if best.map_or(true, |b| xi < b.0) {
                    best = Some((xi, f));
                }
            }
        }
        let (xi, open) = best.ok_or_else(|| Error::Certificate(format!("no facility around center {center} is paid at ξ = 1")))?;
        for &c in &contributors {
            alpha[c] = duals.alpha0[c] + xi * (kappa * duals.alpha1[c] - duals.alpha0[c]);
        }
        centers.push((center, xi, open));
    }
    let beta = (0..nc).map(|c| (0..nf).map(|f| (alpha[c] - inst.cost(c, f)).max(0.0)).collect()).collect();
    Ok(LmpCertificate { alpha, beta, centers, kappa })
}

#[derive(Clone, Debug, Serialize)]
pub struct LmpReport {
    pub alpha_nonnegative: bool,
    pub beta_nonnegative: bool,
    /// `α_c − β_cf ≤ cost(c,f)` and `β_cf = [α_c − cost(c,f)]^+`.
    pub hinge_consistent: bool,
    /// Every facility's payment `Σ_c β_cf ≤ λ(1 + 1e-9)`.
    pub payments_within_lambda: bool,
    pub max_payment_ratio: f64,
    /// Each certificate-opened facility is paid exactly λ.
    pub opened_exactly_paid: bool,
    /// `α_{c,0} ≤ α_c ≤ κ·α_{c,1}`.
    pub dual_bounds: bool,
    /// No client pays positively toward two certificate-opened facilities.
    pub single_contribution: bool,
    /// The same count against the facilities the solution opened.
    pub max_contributions_to_opened: usize,
    pub dual_objective: f64,
    /// `Σ α_c − |F′|·λ`.
    pub lmp_denominator: f64,
    pub denominator_ok: bool,
    pub lambda_emp: f64,
}

impl LmpReport {
    pub fn passed(&self) -> bool {
        self.alpha_nonnegative
            && self.beta_nonnegative
            && self.hinge_consistent
            && self.payments_within_lambda
            && self.opened_exactly_paid
            && self.dual_bounds
            && self.single_contribution
            && self.denominator_ok
    }
}

pub fn verify_lmp(inst: &FlInstance, sol: &FlSolution, cert: &LmpCertificate) -> LmpReport {
    let (nc, nf) = (inst.num_clients(), inst.num_facilities());
    let lambda = inst.lambda();
    let tol = |x: f64| REL_TOL * x.abs().max(1.0);
    let beta = |c: usize, f: usize| cert.beta.get(c).and_then(|row| row.get(f)).copied().unwrap_or(0.0);
    let alpha_nonnegative = cert.alpha.len() == nc && cert.alpha.iter().all(|&a| a >= 0.0);
    let beta_nonnegative = (0..nc).all(|c| (0..nf).all(|f| beta(c, f) >= 0.0));
    let hinge_consistent = (0..nc).all(|c| {
        (0..nf).all(|f| {
            let hinge = (cert.alpha[c] - inst.cost(c, f)).max(0.0);
            cert.alpha[c] - beta(c, f) <= inst.cost(c, f) + tol(cert.alpha[c]) && (beta(c, f) - hinge).abs() <= tol(hinge)
        })
    });
    let payment = |f: usize| (0..nc).map(|c| beta(c, f)).sum::<f64>();
    let max_payment_ratio = (0..nf).map(|f| payment(f) / lambda).fold(0.0, f64::max);
    let payments_within_lambda = max_payment_ratio <= 1.0 + REL_TOL;
    let opened = cert.opened();
    let opened_exactly_paid = opened.iter().all(|&f| (payment(f) - lambda).abs() <= REL_TOL * lambda);
    let dual_bounds = (0..nc).all(|c| {
        let (lo, hi) = (sol.duals.alpha0[c], cert.kappa * sol.duals.alpha1[c]);
        cert.alpha[c] >= lo - tol(lo) && cert.alpha[c] <= hi + tol(hi)
    });
    let positive = |c: usize, set: &[usize]| set.iter().filter(|&&f| beta(c, f) > tol(cert.alpha[c])).count();
    let single_contribution = (0..nc).all(|c| positive(c, &opened) <= 1);
    let max_contributions_to_opened = (0..nc).map(|c| positive(c, &sol.opened)).max().unwrap_or(0);
    let dual_objective: f64 = cert.alpha.iter().sum();
    let lmp_denominator = dual_objective - sol.opened.len() as f64 * lambda;
    let denominator_ok = lmp_denominator >= -REL_TOL * dual_objective;
    let lambda_emp = if lmp_denominator > 0.0 { sol.connection_cost / lmp_denominator } else { f64::INFINITY };
    LmpReport {
        alpha_nonnegative,
        beta_nonnegative,
        hinge_consistent,
        payments_within_lambda,
        max_payment_ratio,
        opened_exactly_paid,
        dual_bounds,
        single_contribution,
        max_contributions_to_opened,
        dual_objective,
        lmp_denominator,
        denominator_ok,
        lambda_emp,
    }
}
