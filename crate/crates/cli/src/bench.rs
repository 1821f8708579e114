//! Scaling series: n against rounds, memory and cost ratio to the sequential baseline.

use clap::{Args, ValueEnum};
use mpkm_core::model::normalize;
use mpkm_core::oracles::jv_sequential;
use mpkm_core::{solve_fl, FlConfig, FlInstance, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::CommonArgs;
use crate::json::format_float;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Workload {
    /// Uniform points in a box of side n
    Uniform,
    /// Eight unit Gaussians with centers spread over a box of side 100·n
    Planted,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub suite: Workload,
    /// Comma-separated instance sizes
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Largest n for which the sequential baseline is run
    #[arg(long, default_value_t = 1024)]
    pub baseline_max: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub const HEADER: &str = "n,rounds,peak_machine_words,global_words,messages,opened,objective,baseline_objective,ratio";

pub fn workload(kind: Workload, n: usize, dim: usize, seed: u64) -> mpkm_core::Result<PointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
    let rows: Vec<Vec<f64>> = match kind {
        Workload::Uniform => (0..n).map(|_| (0..dim).map(|_| rng.gen::<f64>() * n as f64).collect()).collect(),
        Workload::Planted => {
            let noise = Normal::new(0.0, 1.0).expect("unit stddev");
            let centers: Vec<Vec<f64>> = (0..8).map(|_| (0..dim).map(|_| rng.gen::<f64>() * 100.0 * n as f64).collect()).collect();
            (0..n).map(|i| centers[i % 8].iter().map(|c| c + noise.sample(&mut rng)).collect()).collect()
        }
    };
    Ok(normalize(&PointSet::from_rows(&rows)?)?.0)
}

pub fn row(n: usize, points: &PointSet, lambda: f64, config: &FlConfig, baseline_max: usize) -> mpkm_core::Result<String> {
    let inst = FlInstance::colocated(points, lambda)?;
    let sol = solve_fl(&inst, config)?;
    let objective = sol.objective();
    let (baseline, ratio) = if n <= baseline_max {
        let jv = jv_sequential(&inst);
        let b = jv.connection_cost + jv.opened.len() as f64 * lambda;
        (format_float(b), format_float(objective / b))
    } else {
        (String::new(), String::new())
    };
    let l = &sol.ledger;
    Ok(format!(
        "{n},{},{},{},{},{},{},{baseline},{ratio}",
        l.total_rounds(),
        l.peak_machine_words,
        l.global_words,
        l.messages_sent,
        sol.opened.len(),
        format_float(objective)
    ))
}
