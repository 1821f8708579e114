//! Points, instances, the squared-distance cost and the constant table.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Relative tolerance used for comparisons against the analytic bounds.
pub const REL_TOL: f64 = 1e-9;

/// An ordered set of points in R^d. Ids are row indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    /// Largest pairwise distance, recorded by [`normalize`].
    diameter: Option<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("dimension must be at least 1"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::input(format!(
                "{} coordinates do not split into rows of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::input(format!("non-finite coordinate at index {bad}")));
        }
        Ok(Self { dim, coords, diameter: None })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::input(format!("row {i} has {} coordinates, expected {dim}", r.len())));
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, id: usize) -> &[f64] {
        &self.coords[id * self.dim..(id + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn diameter(&self) -> Option<f64> {
        self.diameter
    }

    pub fn dist(&self, a: usize, b: usize) -> f64 {
        sq_dist(self.point(a), self.point(b)).sqrt()
    }

    pub fn cost(&self, a: usize, b: usize) -> f64 {
        sq_dist(self.point(a), self.point(b))
    }

    /// Minimum and maximum distance over distinct pairs (0, 0 for fewer than two points).
    pub fn pairwise_extremes(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let c = self.cost(i, j);
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        if n < 2 {
            (0.0, 0.0)
        } else {
            (lo.sqrt(), hi.sqrt())
        }
    }

    pub fn subset(&self, ids: &[usize]) -> PointSet {
        let coords = ids.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        PointSet { dim: self.dim, coords, diameter: None }
    }

    pub fn centroid(&self, ids: &[usize]) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim];
        for &i in ids {
            for (m, x) in mu.iter_mut().zip(self.point(i)) {
                *m += x;
            }
        }
        let k = ids.len().max(1) as f64;
        mu.iter_mut().for_each(|m| *m /= k);
        mu
    }
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Squared Euclidean distance.
pub fn cost(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!("dimension mismatch: {} vs {}", x.len(), y.len())));
    }
    Ok(sq_dist(x, y))
}

/// Relaxed triangle inequality for squared distances along a path
/// `x_0, ..., x_l`: the path cost is at least `cost(x_0, x_l) / l`.
pub fn relaxed_triangle_holds(seq: &[&[f64]]) -> bool {
    let hops = seq.len().saturating_sub(1);
    if hops == 0 {
        return true;
    }
    let path: f64 = seq.windows(2).map(|w| sq_dist(w[0], w[1])).sum();
    let direct = sq_dist(seq[0], seq[hops]);
    path * (1.0 + REL_TOL) + f64::MIN_POSITIVE >= direct / hops as f64
}

/// Rescale so the minimum pairwise distance is 1. Returns the scaled set
/// (with its diameter recorded) and the scale factor applied.
pub fn normalize(points: &PointSet) -> Result<(PointSet, f64)> {
    if points.len() < 2 {
        let mut out = points.clone();
        out.diameter = Some(0.0);
        return Ok((out, 1.0));
    }
    let (min, max) = points.pairwise_extremes();
    if min == 0.0 {
        return Err(Error::input("duplicate points are not allowed"));
    }
    let scale = if (min - 1.0).abs() <= 1e-12 { 1.0 } else { 1.0 / min };
    let coords = points.coords.iter().map(|x| x * scale).collect();
    let out = PointSet { dim: points.dim, coords, diameter: Some(max * scale) };
    Ok((out, scale))
}

/// Project onto `target_dim` axes with a seeded dense ±1/√target_dim sign matrix.
pub fn project(points: &PointSet, target_dim: usize, seed: u64) -> Result<PointSet> {
    if target_dim == 0 {
        return Err(Error::input("target dimension must be at least 1"));
    }
    let d = points.dim();
    let mut rng = rng::keyed_rng(seed, &[rng::tag::PROJECTION]);
    let s = 1.0 / (target_dim as f64).sqrt();
    let matrix: Vec<f64> = (0..target_dim * d).map(|_| if rng.gen::<bool>() { s } else { -s }).collect();
    let mut coords = Vec::with_capacity(points.len() * target_dim);
    for p in points.iter() {
        for row in matrix.chunks_exact(d) {
            coords.push(row.iter().zip(p).map(|(a, b)| a * b).sum());
        }
    }
    PointSet::new(target_dim, coords)
}

/// Extreme ratios projected/original distance over all pairs.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Distortion {
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl Distortion {
    /// max_ratio / min_ratio, the usual multiplicative distortion.
    pub fn factor(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }
}

pub fn distortion(original: &PointSet, projected: &PointSet) -> Distortion {
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    for i in 0..original.len() {
        for j in i + 1..original.len() {
            let d = original.dist(i, j);
            if d > 0.0 {
                let r = projected.dist(i, j) / d;
                min_ratio = min_ratio.min(r);
                max_ratio = max_ratio.max(r);
            }
        }
    }
    if min_ratio.is_infinite() {
        min_ratio = 1.0;
        max_ratio = 1.0;
    }
    Distortion { min_ratio, max_ratio }
}

/// A facility location instance. Facilities and clients live on a shared
/// set of sites so that a facility and a client with equal coordinates are
/// the same graph node at distance exactly zero.
#[derive(Clone, Debug)]
pub struct FlInstance {
    sites: PointSet,
    facility_site: Vec<usize>,
    client_site: Vec<usize>,
    site_facility: Vec<Option<usize>>,
    site_client: Vec<Option<usize>>,
    lambda: f64,
    min_site_distance: f64,
}

fn coord_key(p: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 must merge
    p.iter().map(|x| (x + 0.0).to_bits()).collect()
}

impl FlInstance {
    pub fn new(facilities: &PointSet, clients: &PointSet, lambda: f64) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::input("at least one client is required"));
        }
        if facilities.is_empty() {
            return Err(Error::input("at least one facility is required"));
        }
        if facilities.dim() != clients.dim() {
            return Err(Error::input("facilities and clients differ in dimension"));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut coords = Vec::new();
        let mut site_facility = Vec::new();
        let mut site_client = Vec::new();
        let mut facility_site = Vec::with_capacity(facilities.len());
        for (f, p) in facilities.iter().enumerate() {
            let key = coord_key(p);
            if index.contains_key(&key) {
                return Err(Error::input(format!("duplicate facility location at facility {f}")));
            }
            index.insert(key, site_facility.len());
            facility_site.push(site_facility.len());
            site_facility.push(Some(f));
            site_client.push(None);
            coords.extend_from_slice(p);
        }
        let mut client_site = Vec::with_capacity(clients.len());
        for (c, p) in clients.iter().enumerate() {
            let key = coord_key(p);
            match index.get(&key) {
                Some(&s) if site_client[s].is_some() => {
                    return Err(Error::input(format!("duplicate client location at client {c}")));
                }
                Some(&s) => {
                    site_client[s] = Some(c);
                    client_site.push(s);
                }
                None => {
                    index.insert(key, site_facility.len());
                    client_site.push(site_facility.len());
                    site_facility.push(None);
                    site_client.push(Some(c));
                    coords.extend_from_slice(p);
                }
            }
        }
        let mut sites = PointSet::new(facilities.dim(), coords)?;
        let (min, max) = sites.pairwise_extremes();
        sites.diameter = Some(max);
        let inst = Self {
            sites,
            facility_site,
            client_site,
            site_facility,
            site_client,
            lambda: 1.0,
            min_site_distance: if min == 0.0 { f64::INFINITY } else { min },
        };
        inst.with_lambda(lambda)
    }

    /// Facilities and clients both equal to `points`.
    pub fn colocated(points: &PointSet, lambda: f64) -> Result<Self> {
        Self::new(points, points, lambda)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(Error::input(format!("opening cost must be finite and at least 1, got {lambda}")));
        }
        Ok(Self { lambda, ..self.clone() })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sites(&self) -> &PointSet {
        &self.sites
    }

    pub fn num_facilities(&self) -> usize {
        self.facility_site.len()
    }

    pub fn num_clients(&self) -> usize {
        self.client_site.len()
    }

    pub fn facility_site(&self, f: usize) -> usize {
        self.facility_site[f]
    }

    pub fn client_site(&self, c: usize) -> usize {
        self.client_site[c]
    }

    pub fn facility_at(&self, site: usize) -> Option<usize> {
        self.site_facility[site]
    }

    pub fn client_at(&self, site: usize) -> Option<usize> {
        self.site_client[site]
    }

    pub fn facility_point(&self, f: usize) -> &[f64] {
        self.sites.point(self.facility_site[f])
    }

    pub fn client_point(&self, c: usize) -> &[f64] {
        self.sites.point(self.client_site[c])
    }

    pub fn cost(&self, c: usize, f: usize) -> f64 {
        self.sites.cost(self.client_site[c], self.facility_site[f])
    }

    pub fn dist(&self, c: usize, f: usize) -> f64 {
        self.cost(c, f).sqrt()
    }

    pub fn facility_cost(&self, f: usize, g: usize) -> f64 {
        self.sites.cost(self.facility_site[f], self.facility_site[g])
    }

    pub fn client_cost(&self, c: usize, d: usize) -> f64 {
        self.sites.cost(self.client_site[c], self.client_site[d])
    }

    /// Largest site-to-site distance.
    pub fn diameter(&self) -> f64 {
        self.sites.diameter.unwrap_or(0.0)
    }

    /// Smallest distance between distinct sites (infinite with a single site).
    pub fn min_site_distance(&self) -> f64 {
        self.min_site_distance
    }

    /// Total connection cost of assigning client `c` to `assign[c]`.
    pub fn connection_cost(&self, assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(c, &f)| self.cost(c, f)).sum()
    }
}

#[derive(Clone, Debug)]
pub struct KMeansInstance {
    pub points: PointSet,
    pub k: usize,
}

impl KMeansInstance {
    pub fn new(points: PointSet, k: usize) -> Result<Self> {
        if k == 0 || k > points.len() {
            return Err(Error::input(format!("k = {k} must lie in [1, {}]", points.len())));
        }
        Ok(Self { points, k })
    }
}

/// Constants of the analysis as closed-form functions of the graph
/// approximation factor Γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantTable {
    pub gamma: f64,
    pub c_r: f64,
    pub c_d_minus: f64,
    pub c_d_plus: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub q: f64,
    pub c_a: f64,
    pub kappa: f64,
    pub eta: f64,
    pub zeta: f64,
    pub rho: f64,
    pub c_h1: f64,
    pub c_h2: f64,
    /// Γ ≥ 5, the regime in which the bounds are proved.
    pub theory_valid: bool,
}

pub fn make_constants(gamma: f64) -> Result<ConstantTable> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::input(format!("Γ must be finite and at least 1, got {gamma}")));
    }
    let g2 = gamma * gamma;
    let g4 = g2 * g2;
    let g8 = g4 * g4;
    let g12 = g8 * g4;
    let c_r = 9.0 * gamma;
    let kappa = g2;
    let zeta = 1.0 + 16.0 * std::f64::consts::SQRT_2 * gamma.powi(7);
    let rho = 128.0 * g12;
    Ok(ConstantTable {
        gamma,
        c_r,
        c_d_minus: 2.0 * g2,
        c_d_plus: 8.0 * g4,
        gamma1: 4.0 * g4,
        gamma2: 9.0 * g4,
        q: 8.0 * g4,
        c_a: 8.0 * g8,
        kappa,
        eta: 8000.0 * g12,
        zeta,
        rho,
        c_h1: 4.0 * c_r.powi(4) * zeta * zeta,
        c_h2: 12.0 * (kappa * rho).sqrt() * c_r.powi(3) * zeta * zeta,
        theory_valid: gamma >= 5.0,
    })
}

/// Relative comparison `a ≤ b` with tolerance [`REL_TOL`].
pub fn le_tol(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * b.abs().max(a.abs())
}
