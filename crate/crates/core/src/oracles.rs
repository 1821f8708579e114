//! Sequential ground truth: exact radii and dual levels, brute-force optima,
//! the classic sequential primal-dual baseline and a k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{FlInstance, KMeansInstance, PointSet};
use crate::rng;

pub const FL_OPT_MAX_FACILITIES: usize = 18;
pub const KMEANS_OPT_MAX_SUBSETS: u128 = 2_000_000;

/// Largest `r` with `Σ [r² − cost]^+ ≤ lambda`, from the sorted breakpoints.
/// Infinite when `costs` is empty.
pub fn radius_from_costs(costs: &[f64], lambda: f64) -> f64 {
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    for (j, &c) in sorted.iter().enumerate() {
        prefix += c;
        let m = (j + 1) as f64;
        let r2 = (lambda + prefix) / m;
        let next = sorted.get(j + 1).copied().unwrap_or(f64::INFINITY);
        if r2 <= next {
            return r2.max(c).sqrt();
        }
    }
    f64::INFINITY
}

/// Exact radius of facility `f` at opening cost `lambda`.
pub fn exact_radius(inst: &FlInstance, lambda: f64, f: usize) -> f64 {
    let costs: Vec<f64> = (0..inst.num_clients()).map(|c| inst.cost(c, f)).collect();
    radius_from_costs(&costs, lambda)
}

pub fn exact_radii(inst: &FlInstance) -> Vec<f64> {
    (0..inst.num_facilities()).map(|f| exact_radius(inst, inst.lambda(), f)).collect()
}

/// `min_f max(r_f², cost(c, f))`.
pub fn exact_alpha_star(inst: &FlInstance, radii: &[f64], c: usize) -> f64 {
    (0..inst.num_facilities()).map(|f| (radii[f] * radii[f]).max(inst.cost(c, f))).fold(f64::INFINITY, f64::min)
}

/// `Σ_c [alpha_c − cost(c, f)]^+`.
pub fn payment(inst: &FlInstance, alpha: &[f64], f: usize) -> f64 {
    alpha.iter().enumerate().map(|(c, &a)| (a - inst.cost(c, f)).max(0.0)).sum()
}

/// Facilities whose payment under `scale · alpha` reaches λ.
pub fn paid_facilities(inst: &FlInstance, alpha: &[f64], scale: f64) -> Vec<usize> {
    let scaled: Vec<f64> = alpha.iter().map(|a| a * scale).collect();
    (0..inst.num_facilities()).filter(|&f| payment(inst, &scaled, f) >= inst.lambda()).collect()
}

/// Dependency graph over the facility subset `s`: two facilities are
/// adjacent when some client has `kappa · alpha1_c` above both costs.
/// Returned as adjacency lists indexed by position in `s`.
pub fn dependency_graph(inst: &FlInstance, alpha1: &[f64], kappa: f64, s: &[usize]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); s.len()];
    let contrib: Vec<Vec<usize>> = (0..inst.num_clients())
        .map(|c| (0..s.len()).filter(|&i| kappa * alpha1[c] > inst.cost(c, s[i])).collect())
        .collect();
    let mut edge = vec![false; s.len() * s.len()];
    for list in &contrib {
        for (a, &i) in list.iter().enumerate() {
            for &j in &list[a + 1..] {
                edge[i * s.len() + j] = true;
                edge[j * s.len() + i] = true;
            }
        }
    }
    for i in 0..s.len() {
        for j in 0..s.len() {
            if edge[i * s.len() + j] {
                adj[i].push(j);
            }
        }
    }
    adj
}

/// Hop distances from `src` in an unweighted graph (`usize::MAX` if unreachable).
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

/// Optimal facility location value and an optimal open set, by enumeration.
pub fn bruteforce_fl_opt(inst: &FlInstance) -> Result<(f64, Vec<usize>)> {
    let nf = inst.num_facilities();
    if nf > FL_OPT_MAX_FACILITIES {
        return Err(Error::Guard(format!("{nf} facilities exceed the enumeration limit {FL_OPT_MAX_FACILITIES}")));
    }
    let costs: Vec<Vec<f64>> = (0..inst.num_clients()).map(|c| (0..nf).map(|f| inst.cost(c, f)).collect()).collect();
    let mut best = (f64::INFINITY, 0u32);
    for mask in 1u32..(1 << nf) {
        let open = mask.count_ones() as f64 * inst.lambda();
        let conn: f64 = costs
            .iter()
            .map(|row| (0..nf).filter(|f| mask >> f & 1 == 1).map(|f| row[f]).fold(f64::INFINITY, f64::min))
            .sum();
        if open + conn < best.0 {
            best = (open + conn, mask);
        }
    }
    let set = (0..nf).filter(|f| best.1 >> f & 1 == 1).collect();
    Ok((best.0, set))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Sum of squared distances from every point to its nearest center.
pub fn kmeans_cost(points: &PointSet, centers: &[usize]) -> f64 {
    (0..points.len())
        .map(|p| centers.iter().map(|&z| points.cost(p, z)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Optimal discrete k-means value and centers, by enumeration of k-subsets.
pub fn bruteforce_kmeans_opt(km: &KMeansInstance) -> Result<(f64, Vec<usize>)> {
    let n = km.points.len();
    let k = km.k;
    let count = binomial(n, k);
    if count > KMEANS_OPT_MAX_SUBSETS {
        return Err(Error::Guard(format!("C({n}, {k}) = {count} subsets exceed {KMEANS_OPT_MAX_SUBSETS}")));
    }
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best = (f64::INFINITY, combo.clone());
    loop {
        let c = kmeans_cost(&km.points, &combo);
        if c < best.0 {
            best = (c, combo.clone());
        }
        // next combination in lexicographic order
        let Some(i) = (0..k).rev().find(|&i| combo[i] != i + n - k) else { break };
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
    Ok(best)
}

/// Output of the sequential primal-dual baseline.
#[derive(Clone, Debug)]
pub struct JvSolution {
    pub alpha: Vec<f64>,
    /// Facilities that reached full payment during the growth phase, with the time they did.
    pub temp_open: Vec<(usize, f64)>,
    pub opened: Vec<usize>,
    pub assign: Vec<usize>,
    pub connection_cost: f64,
}

/// Earliest time `t ≥ now` at which `frozen + Σ [t − cost]^+ = lambda` over
/// the growing clients' costs.
fn payment_time(frozen: f64, growing: &mut [f64], lambda: f64, now: f64) -> f64 {
    if frozen >= lambda {
        return now;
    }
    growing.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    for (j, &c) in growing.iter().enumerate() {
        prefix += c;
        let m = (j + 1) as f64;
        let t = (lambda - frozen + prefix) / m;
        let next = growing.get(j + 1).copied().unwrap_or(f64::INFINITY);
        if t <= next {
            return t.max(c).max(now);
        }
    }
    f64::INFINITY
}

/// Event-driven sequential primal-dual algorithm: all active clients raise
/// their duals together; a facility opens temporarily once fully paid and
/// freezes every client tight to it. The final open set is a maximal
/// independent set of the conflict graph taken in facility-id order.
pub fn jv_sequential(inst: &FlInstance) -> JvSolution {
    let (nc, nf) = (inst.num_clients(), inst.num_facilities());
    let lambda = inst.lambda();
    let mut alpha = vec![f64::NAN; nc];
    let mut active = vec![true; nc];
    let mut open_time: Vec<Option<f64>> = vec![None; nf];
    let mut now = 0.0_f64;
    let tol = |t: f64| 1e-12 * t.abs().max(1.0);
    while active.iter().any(|&a| a) {
        let mut next = f64::INFINITY;
        for f in (0..nf).filter(|&f| open_time[f].is_none()) {
            let frozen: f64 = (0..nc).filter(|&c| !active[c]).map(|c| (alpha[c] - inst.cost(c, f)).max(0.0)).sum();
            let mut growing: Vec<f64> = (0..nc).filter(|&c| active[c]).map(|c| inst.cost(c, f)).collect();
            next = next.min(payment_time(frozen, &mut growing, lambda, now));
        }
        for c in (0..nc).filter(|&c| active[c]) {
            for f in (0..nf).filter(|&f| open_time[f].is_some()) {
                next = next.min(inst.cost(c, f).max(now));
            }
        }
        now = next;
        for f in 0..nf {
            if open_time[f].is_none() {
                let frozen: f64 = (0..nc)
                    .map(|c| {
                        let a = if active[c] { now } else { alpha[c] };
                        (a - inst.cost(c, f)).max(0.0)
                    })
                    .sum();
                if frozen >= lambda - tol(lambda) {
                    open_time[f] = Some(now);
                }
            }
        }
        for c in 0..nc {
            if active[c] && (0..nf).any(|f| open_time[f].is_some() && inst.cost(c, f) <= now + tol(now)) {
                active[c] = false;
                alpha[c] = now;
            }
        }
    }
    let mut temp_open: Vec<(usize, f64)> = open_time.iter().enumerate().filter_map(|(f, t)| t.map(|t| (f, t))).collect();
    temp_open.sort_by_key(|e| e.0);
    let contributes = |c: usize, f: usize| alpha[c] - inst.cost(c, f) > tol(alpha[c]);
    let mut opened: Vec<usize> = Vec::new();
    for &(f, _) in &temp_open {
        let conflict = opened.iter().any(|&g| (0..nc).any(|c| contributes(c, f) && contributes(c, g)));
        if !conflict {
            opened.push(f);
        }
    }
    let assign: Vec<usize> = (0..nc)
        .map(|c| *opened.iter().min_by(|&&a, &&b| inst.cost(c, a).total_cmp(&inst.cost(c, b)).then(a.cmp(&b))).expect("at least one facility opens"))
        .collect();
    let connection_cost = inst.connection_cost(&assign);
    JvSolution { alpha, temp_open, opened, assign, connection_cost }
}

/// k-means++ seeding over the input points.
pub fn kmeans_plus_plus(points: &PointSet, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::keyed_rng(seed, &[rng::tag::ROUNDING, u64::MAX]);
    let n = points.len();
    let mut centers = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|p| points.cost(p, centers[0])).collect();
    while centers.len() < k.min(n) {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            (0..n).find(|p| !centers.contains(p)).expect("fewer centers than points")
        } else {
            let mut x = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (p, &w) in d2.iter().enumerate() {
                if x < w {
                    pick = p;
                    break;
                }
                x -= w;
            }
            pick
        };
        centers.push(next);
        for (p, d) in d2.iter_mut().enumerate() {
            *d = d.min(points.cost(p, next));
        }
    }
    centers.sort_unstable();
    centers
}
