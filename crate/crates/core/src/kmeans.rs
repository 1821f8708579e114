//! k-means through facility location: a λ bracket over a geometric grid,
//! a nearest-neighbour matching between the two bracket solutions, and a
//! randomized rounding to exactly `k` centers repeated `⌈c_rep·log₂ n⌉` times.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::facility::{build_graph, solve_fl_on, FlConfig, FlSolution, LmpCertificate};
use crate::graph::SpannerGraph;
use crate::model::{FlInstance, KMeansInstance, PointSet, REL_TOL};
use crate::mpc::{group_aggregate, Cluster, KeyedRecords, RoundLedger, SumSketch};
use crate::rng;

#[derive(Clone, Debug, Serialize)]
pub struct KMeansConfig {
    pub fl: FlConfig,
    /// Repetition factor: `⌈c_rep · log₂ n⌉` roundings.
    pub c_rep: f64,
}

impl KMeansConfig {
    pub fn new(fl: FlConfig) -> Self {
        Self { fl, c_rep: 2.0 }
    }

    pub fn repetitions(&self, n: usize) -> usize {
        ((self.c_rep * (n.max(2) as f64).log2()).ceil() as usize).max(1)
    }
}

/// Two adjacent grid opening costs `λ2 ≤ λ1 ≤ 2λ2` whose solutions open
/// `k1 ≤ k ≤ k2` facilities.
#[derive(Clone, Debug)]
pub struct LambdaBracket {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sol1: FlSolution,
    pub sol2: FlSolution,
    pub k1: usize,
    pub k2: usize,
}

impl LambdaBracket {
    pub fn holds_for(&self, k: usize) -> bool {
        self.lambda2 <= self.lambda1 && self.lambda1 <= 2.0 * self.lambda2 && self.k1 <= k && k <= self.k2
    }

    /// `(a, b)` with `a + b = 1` and `a·k1 + b·k2 = k`.
    pub fn weights(&self, k: usize) -> (f64, f64) {
        let span = (self.k2 - self.k1) as f64;
        ((self.k2 - k) as f64 / span, (k - self.k1) as f64 / span)
    }
}

#[derive(Clone, Debug)]
pub enum LambdaSearch {
    Exact { lambda: f64, solution: FlSolution },
    Bracket(LambdaBracket),
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaTrace {
    /// `(λ, facilities opened)` over the grid; `None` for failed runs.
    pub runs: Vec<(f64, Option<usize>)>,
    /// Runs that ended in a solver error, with the message.
    pub failures: Vec<(f64, String)>,
}

/// Grid `λ = 2^i` for `i ∈ [0, ⌈log₂(n·Δ²)⌉]`.
pub fn lambda_grid(points: &PointSet) -> Vec<f64> {
    let diam = points.diameter().unwrap_or_else(|| points.pairwise_extremes().1);
    let top = ((points.len() as f64 * diam * diam).max(1.0).log2().ceil()) as i32;
    (0..=top).map(|i| 2f64.powi(i)).collect()
}

/// Solve facility location over the grid on a shared graph, then pick an
/// exact hit or the tightest adjacent bracket.
pub fn search_lambda(km: &KMeansInstance, g: &SpannerGraph, config: &KMeansConfig) -> Result<(LambdaSearch, LambdaTrace, RoundLedger)> {
    let k = km.k;
    let grid = lambda_grid(&km.points);
    let base = FlInstance::colocated(&km.points, 1.0)?;
    let runs: Vec<Result<FlSolution>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let inst = base.with_lambda(lambda)?;
            let fl = FlConfig { seed: rng::derive(config.fl.seed, &[i as u64]), ..config.fl.clone() };
            solve_fl_on(&inst, g, &fl)
        })
        .collect();
    let mut ledger = RoundLedger::default();
    let mut sols: Vec<Option<FlSolution>> = Vec::with_capacity(runs.len());
    let mut failures = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(sol) => {
                ledger.merge_parallel(&sol.ledger);
                sols.push(Some(sol));
            }
            Err(e) if e.is_solver() => {
                failures.push((grid[i], e.to_string()));
                sols.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let counts: Vec<Option<usize>> = sols.iter().map(|s| s.as_ref().map(|s| s.opened.len())).collect();
    let trace = LambdaTrace { runs: grid.iter().copied().zip(counts.iter().copied()).collect(), failures };

    if let Some(i) = counts.iter().position(|&c| c == Some(k)) {
        let solution = sols[i].take().expect("successful run");
        return Ok((LambdaSearch::Exact { lambda: grid[i], solution }, trace, ledger));
    }
    // adjacent pairs (λ2 = 2^i, λ1 = 2^{i+1}) with k1 ≤ k ≤ k2, tightest first
    let best = (0..grid.len().saturating_sub(1))
        .filter_map(|i| match (counts[i], counts[i + 1]) {
            (Some(k2), Some(k1)) if k1 <= k && k <= k2 => Some((k2 - k1, i)),
            _ => None,
        })
        .min();
    let Some((_, i)) = best else {
        return Err(Error::Solver(format!("no λ bracket for k = {k}; trace {:?}", trace.runs)));
    };
    let bracket = LambdaBracket {
        lambda1: grid[i + 1],
        lambda2: grid[i],
        k1: counts[i + 1].expect("successful run"),
        k2: counts[i].expect("successful run"),
        sol1: sols[i + 1].take().expect("successful run"),
        sol2: sols[i].take().expect("successful run"),
    };
    Ok((LambdaSearch::Bracket(bracket), trace, ledger))
}

/// `F₂′`: the nearest `F₂` facility (by 2-hop distance) of every `F₁`
/// facility, padded to `k1` from the lowest remaining `F₂` ids.
#[derive(Clone, Debug, Serialize)]
pub struct Matching {
    pub members: Vec<usize>,
    /// `f₂′(f)` for every `f ∈ F₁`.
    pub partner: BTreeMap<usize, usize>,
    /// `F₁` facilities with no `F₂` facility within two hops, matched by a linear scan.
    pub scan_fallbacks: usize,
}

pub fn select_f2prime(cluster: &mut Cluster, bracket: &LambdaBracket, inst: &FlInstance, g: &SpannerGraph) -> Result<Matching> {
    let f2: BTreeSet<usize> = bracket.sol2.opened.iter().copied().collect();
    if f2.len() < bracket.k1 {
        return Err(Error::Solver(format!("|F₂| = {} below k1 = {}", f2.len(), bracket.k1)));
    }
    cluster.exchange(2 * g.edge_count(), 2)?;
    cluster.exchange(2 * g.edge_count(), 2)?;
    let mut scan_fallbacks = 0;
    let mut partner = BTreeMap::new();
    for &f in &bracket.sol1.opened {
        let near = g.two_hop_ball(inst.facility_site(f), f64::INFINITY).into_iter().find_map(|(site, _)| inst.facility_at(site).filter(|x| f2.contains(x)));
        let chosen = near.unwrap_or_else(|| {
            scan_fallbacks += 1;
            *f2.iter().min_by(|&&a, &&b| inst.sites().dist(inst.facility_site(f), inst.facility_site(a)).total_cmp(&inst.sites().dist(inst.facility_site(f), inst.facility_site(b))).then(a.cmp(&b))).expect("F₂ is nonempty")
        });
        partner.insert(f, chosen);
    }
    let mut members: BTreeSet<usize> = partner.values().copied().collect();
    // padding: lowest residual ids
    let mut pad = f2.iter().filter(|f| !members.contains(f)).copied().collect::<Vec<_>>().into_iter();
    while members.len() < bracket.k1 {
        members.insert(pad.next().expect("|F₂| ≥ k1"));
    }
    cluster.charge(1);
    Ok(Matching { members: members.into_iter().collect(), partner, scan_fallbacks })
}

/// One outcome of the rounding.
#[derive(Clone, Debug, Serialize)]
pub struct Rounding {
    pub centers: Vec<usize>,
    /// Serving center of every client under the three-case rule.
    pub phi: Vec<usize>,
    pub took_first: bool,
    /// The `k − k1` facilities drawn from `F₂ ∖ F₂′`.
    pub sampled: Vec<usize>,
    /// Centers added because `F₁` and the sample overlapped.
    pub padded: Vec<usize>,
}

/// `F₂ ∖ F₂′` in id order.
pub fn residual(bracket: &LambdaBracket, matching: &Matching) -> Vec<usize> {
    let taken: BTreeSet<usize> = matching.members.iter().copied().collect();
    let mut out: Vec<usize> = bracket.sol2.opened.iter().copied().filter(|f| !taken.contains(f)).collect();
    out.sort_unstable();
    out
}

/// The rounding for a fixed coin and sample.
pub fn round_with(bracket: &LambdaBracket, matching: &Matching, k: usize, take_first: bool, sampled: &[usize], num_points: usize) -> Result<Rounding> {
    if !(bracket.k1 < k && k < bracket.k2) {
        return Err(Error::input(format!("rounding needs k1 < k < k2, got {} < {k} < {}", bracket.k1, bracket.k2)));
    }
    let in_f2prime: BTreeSet<usize> = matching.members.iter().copied().collect();
    let in_sample: BTreeSet<usize> = sampled.iter().copied().collect();
    let base: &[usize] = if take_first { &bracket.sol1.opened } else { &matching.members };
    let mut centers: BTreeSet<usize> = base.iter().chain(sampled).copied().collect();
    let mut padded = Vec::new();
    let mut extra = (0..num_points).filter(|p| !centers.contains(p)).collect::<Vec<_>>().into_iter();
    while centers.len() < k {
        let p = extra.next().ok_or_else(|| Error::Solver("not enough points to pad the center set".into()))?;
        centers.insert(p);
        padded.push(p);
    }
    let phi = bracket
        .sol1
        .assign
        .iter()
        .zip(&bracket.sol2.assign)
        .map(|(&first, &second)| {
            if in_f2prime.contains(&second) {
                if take_first { first } else { second }
            } else if in_sample.contains(&second) {
                second
            } else if take_first {
                first
            } else {
                matching.partner[&first]
            }
        })
        .collect();
    Ok(Rounding { centers: centers.into_iter().collect(), phi, took_first: take_first, sampled: sampled.to_vec(), padded })
}

/// Draws the coin (`F₁` with probability `a`) and a uniform `(k − k1)`-subset
/// of the residual facilities.
pub fn randomized_round(bracket: &LambdaBracket, matching: &Matching, k: usize, seed: u64, num_points: usize) -> Result<Rounding> {
    if !(bracket.k1 < k && k < bracket.k2) {
        return Err(Error::input(format!("rounding needs k1 < k < k2, got {} < {k} < {}", bracket.k1, bracket.k2)));
    }
    let (a, _) = bracket.weights(k);
    let take_first = rng::keyed_unit(seed, &[rng::tag::ROUNDING, 0]) < a;
    let pool = residual(bracket, matching);
    let count = k - bracket.k1;
    if pool.len() < count {
        return Err(Error::Solver(format!("residual set of {} cannot supply {count} centers", pool.len())));
    }
    let mut rng = rng::keyed_rng(seed, &[rng::tag::ROUNDING, 1]);
    let mut sampled: Vec<usize> = sample(&mut rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
    sampled.sort_unstable();
    round_with(bracket, matching, k, take_first, &sampled, num_points)
}

/// Sum of squared distances to the nearest center.
pub fn evaluate_cost(points: &PointSet, centers: &[usize]) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::input("center set is empty"));
    }
    Ok((0..points.len()).into_par_iter().map(|p| centers.iter().map(|&z| points.cost(p, z)).fold(f64::INFINITY, f64::min)).sum())
}

/// Cost from 2-hop nearest-center distances, summed with a sum sketch.
/// Within a factor `Γ_G²·(1 + ε)` of [`evaluate_cost`] with high probability.
pub fn evaluate_cost_approx(cluster: &mut Cluster, g: &SpannerGraph, centers: &[usize], epsilon: f64, seed: u64) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::input("center set is empty"));
    }
    let is_center: BTreeSet<usize> = centers.iter().copied().collect();
    cluster.exchange(2 * g.edge_count(), 2)?;
    cluster.exchange(2 * g.edge_count(), 2)?;
    let nearest: Vec<f64> = (0..g.n())
        .into_par_iter()
        .map(|p| g.two_hop_ball(p, f64::INFINITY).into_iter().find(|(x, _)| is_center.contains(x)).map_or(f64::INFINITY, |e| e.1))
        .collect();
    if let Some(p) = nearest.iter().position(|d| !d.is_finite()) {
        return Err(Error::Solver(format!("point {p} has no center within two hops")));
    }
    let sketch = SumSketch::new(g.n(), epsilon)?;
    let records: Vec<(u64, f64)> = nearest
        .iter()
        .enumerate()
        .flat_map(|(p, d)| sketch.draws(seed, p, d * d).into_iter().enumerate().map(|(r, x)| (r as u64, x)))
        .filter(|e| e.1.is_finite())
        .collect();
    if records.is_empty() {
        return Ok(0.0);
    }
    let data = KeyedRecords::new(cluster, records)?;
    let mins = group_aggregate(cluster, &data, |a, b| a.min(*b))?;
    let mut per_rep = vec![f64::INFINITY; sketch.reps()];
    for ((r, _), m) in data.records().iter().zip(&mins) {
        per_rep[*r as usize] = *m;
    }
    Ok(sketch.estimate(&per_rep))
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketSummary {
    pub lambda1: f64,
    pub lambda2: f64,
    pub k1: usize,
    pub k2: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RepetitionReport {
    pub cost: f64,
    /// Cost of the rule-based assignment, at least `cost`.
    pub phi_cost: f64,
    pub took_first: bool,
    pub padded: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct KMeansSolution {
    pub k: usize,
    pub centers: Vec<usize>,
    pub phi: Vec<usize>,
    pub total_cost: f64,
    pub exact_lambda: Option<f64>,
    pub bracket: Option<BracketSummary>,
    pub trace: LambdaTrace,
    pub repetitions: Vec<RepetitionReport>,
    pub chosen_repetition: Option<usize>,
    pub scan_fallbacks: usize,
    pub ledger: RoundLedger,
}

fn assignment_cost(points: &PointSet, phi: &[usize]) -> f64 {
    phi.iter().enumerate().map(|(c, &z)| points.cost(c, z)).sum()
}

pub fn solve_kmeans(km: &KMeansInstance, config: &KMeansConfig) -> Result<KMeansSolution> {
    let n = km.points.len();
    let k = km.k;
    if k == n {
        let centers: Vec<usize> = (0..n).collect();
        return Ok(KMeansSolution {
            k,
            phi: centers.clone(),
            centers,
            total_cost: 0.0,
            exact_lambda: None,
            bracket: None,
            trace: LambdaTrace { runs: Vec::new(), failures: Vec::new() },
            repetitions: Vec::new(),
            chosen_repetition: None,
            scan_fallbacks: 0,
            ledger: RoundLedger::default(),
        });
    }
    let g = build_graph(&km.points, &config.fl)?;
    let (search, trace, mut ledger) = search_lambda(km, &g, config)?;
    *ledger.rounds_by_phase.entry("spanner".into()).or_default() += 2;
    match search {
        LambdaSearch::Exact { lambda, solution } => {
            let total_cost = evaluate_cost(&km.points, &solution.opened)?;
            Ok(KMeansSolution {
                k,
                centers: solution.opened.clone(),
                phi: solution.assign.clone(),
                total_cost,
                exact_lambda: Some(lambda),
                bracket: None,
                trace,
                repetitions: Vec::new(),
                chosen_repetition: None,
                scan_fallbacks: 0,
                ledger,
            })
        }
        LambdaSearch::Bracket(bracket) => {
            let mut cluster = Cluster::new(config.fl.cluster_config(n)?);
            cluster.set_phase("matching");
            let inst = FlInstance::colocated(&km.points, bracket.lambda2)?;
            let matching = select_f2prime(&mut cluster, &bracket, &inst, &g)?;
            cluster.set_phase("rounding");
            let reps = config.repetitions(n);
            let roundings: Vec<Rounding> = (0..reps)
                .into_par_iter()
                .map(|r| randomized_round(&bracket, &matching, k, rng::derive(config.fl.seed, &[rng::tag::ROUNDING, r as u64]), n))
                .collect::<Result<_>>()?;
            // coin broadcast, sampling, and the assignment rule in parallel over repetitions
            cluster.charge(3);
            cluster.set_phase("evaluation");
            cluster.hold(n * reps, 2)?;
            cluster.charge(4);
            let reports: Vec<RepetitionReport> = roundings
                .iter()
                .map(|r| {
                    Ok(RepetitionReport {
                        cost: evaluate_cost(&km.points, &r.centers)?,
                        phi_cost: assignment_cost(&km.points, &r.phi),
                        took_first: r.took_first,
                        padded: r.padded.len(),
                    })
                })
                .collect::<Result<_>>()?;
            let best = (0..reps).min_by(|&x, &y| reports[x].cost.total_cmp(&reports[y].cost).then(x.cmp(&y))).expect("at least one repetition");
            ledger.merge_sequential(&cluster.into_ledger());
            let (a, b) = bracket.weights(k);
            Ok(KMeansSolution {
                k,
                centers: roundings[best].centers.clone(),
                phi: roundings[best].phi.clone(),
                total_cost: reports[best].cost,
                exact_lambda: None,
                bracket: Some(BracketSummary { lambda1: bracket.lambda1, lambda2: bracket.lambda2, k1: bracket.k1, k2: bracket.k2, a, b }),
                trace,
                repetitions: reports,
                chosen_repetition: Some(best),
                scan_fallbacks: matching.scan_fallbacks,
                ledger,
            })
        }
    }
}

/// Whether `(λ2/λ1)·α` stays within payment `λ2` at every facility.
pub fn rescaled_duals_feasible(inst: &FlInstance, cert: &LmpCertificate, lambda1: f64, lambda2: f64) -> bool {
    let scale = lambda2 / lambda1;
    (0..inst.num_facilities()).all(|f| {
        let pay: f64 = cert.alpha.iter().enumerate().map(|(c, &a)| (scale * a - inst.cost(c, f)).max(0.0)).sum();
        pay <= lambda2 * (1.0 + REL_TOL)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexCombinationReport {
    /// `Σ_f x_cf ≥ 1` for every client.
    pub coverage: bool,
    /// `x_cf ≤ y_f`.
    pub within_open: bool,
    /// `Σ_f y_f ≤ k`.
    pub budget: bool,
    /// `Σ_c [α_c − cost]^+ ≤ λ2` at every facility.
    pub payments: bool,
    pub fractional_cost: f64,
    pub dual_value: f64,
}

impl ConvexCombinationReport {
    pub fn passed(&self) -> bool {
        self.coverage && self.within_open && self.budget && self.payments
    }
}

/// Mixes the two integral bracket solutions and their certificates with
/// weights `(a, b)`; the first certificate is rescaled by `λ2/λ1`.
pub fn convex_combination_report(
    inst: &FlInstance,
    bracket: &LambdaBracket,
    cert1: &LmpCertificate,
    cert2: &LmpCertificate,
    k: usize,
) -> ConvexCombinationReport {
    let (a, b) = bracket.weights(k);
    let (nc, nf) = (inst.num_clients(), inst.num_facilities());
    let indicator = |set: &[usize]| {
        let mut v = vec![0.0; nf];
        set.iter().for_each(|&f| v[f] = 1.0);
        v
    };
    let (y1, y2) = (indicator(&bracket.sol1.opened), indicator(&bracket.sol2.opened));
    let y: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
    let x = |c: usize, f: usize| a * f64::from(u8::from(bracket.sol1.assign[c] == f)) + b * f64::from(u8::from(bracket.sol2.assign[c] == f));
    let coverage = (0..nc).all(|c| (0..nf).map(|f| x(c, f)).sum::<f64>() >= 1.0 - REL_TOL);
    let within_open = (0..nc).all(|c| (0..nf).all(|f| x(c, f) <= y[f] + REL_TOL));
    let budget = y.iter().sum::<f64>() <= k as f64 * (1.0 + REL_TOL);
    let scale = bracket.lambda2 / bracket.lambda1;
    let alpha: Vec<f64> = cert1.alpha.iter().zip(&cert2.alpha).map(|(p, q)| a * scale * p + b * q).collect();
    let payments = (0..nf).all(|f| {
        let pay: f64 = alpha.iter().enumerate().map(|(c, &al)| (al - inst.cost(c, f)).max(0.0)).sum();
        pay <= bracket.lambda2 * (1.0 + REL_TOL)
    });
    let fractional_cost = (0..nc).map(|c| a * inst.cost(c, bracket.sol1.assign[c]) + b * inst.cost(c, bracket.sol2.assign[c])).sum();
    let dual_value = alpha.iter().sum::<f64>() - bracket.lambda2 * k as f64;
    ConvexCombinationReport { coverage, within_open, budget, payments, fractional_cost, dual_value }
}
