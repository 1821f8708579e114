//! Seeded workloads shared by the benchmarks.

use mpkm_core::model::normalize;
use mpkm_core::PointSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` uniform points in `[0, n]^dim`, normalized.
pub fn uniform(n: usize, dim: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen::<f64>() * n as f64).collect()).collect();
    normalized(&rows)
}

/// `groups` clusters of `per` points with unit spread, `separation` apart along the first axis.
pub fn planted(groups: usize, per: usize, separation: f64, dim: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..groups * per)
        .map(|i| {
            let offset = (i / per) as f64 * separation;
            (0..dim).map(|a| if a == 0 { offset } else { 0.0 } + rng.gen::<f64>()).collect()
        })
        .collect();
    normalized(&rows)
}

fn normalized(rows: &[Vec<f64>]) -> PointSet {
    let points = PointSet::from_rows(rows).expect("rows share a dimension");
    normalize(&points).expect("continuous draws are distinct").0
}
