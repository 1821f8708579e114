use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mpkm_core::io::write_csv;
use mpkm_core::PointSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Mixture of isotropic Gaussians with uniformly drawn centers
    Gaussian,
    /// Uniform points in a box
    Uniform,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kind: Kind,
    /// Number of Gaussian components
    #[arg(long, default_value_t = 3)]
    pub centers: usize,
    /// Points per component (Gaussian) or in total (uniform)
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub stddev: f64,
    /// Side length of the box holding the centers (Gaussian) or the points (uniform)
    #[arg(long, default_value_t = 100.0)]
    pub side: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; the sidecar is written next to it with a .json extension
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Sidecar {
    pub kind: Kind,
    pub seed: u64,
    pub dim: usize,
    pub counts: Vec<usize>,
    pub stddev: Option<f64>,
    pub side: f64,
    /// Ground-truth component centers (empty for uniform data).
    pub centers: Vec<Vec<f64>>,
}

pub fn generate(args: &GenArgs) -> Result<(PointSet, Sidecar), UsageError> {
    if args.dim == 0 || args.count == 0 {
        return Err(UsageError("--dim and --count must be positive".into()));
    }
    if !(args.side > 0.0) || !args.side.is_finite() {
        return Err(UsageError(format!("--side must be positive, got {}", args.side)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let sidecar = match args.kind {
        Kind::Gaussian => {
            if args.centers == 0 {
                return Err(UsageError("--centers must be positive".into()));
            }
            if !(args.stddev > 0.0) || !args.stddev.is_finite() {
                return Err(UsageError(format!("--stddev must be positive (zero spread duplicates points), got {}", args.stddev)));
            }
            let noise = Normal::new(0.0, args.stddev).expect("positive stddev");
            let centers: Vec<Vec<f64>> =
                (0..args.centers).map(|_| (0..args.dim).map(|_| rng.gen::<f64>() * args.side).collect()).collect();
            for center in &centers {
                for _ in 0..args.count {
                    rows.push(center.iter().map(|x| x + noise.sample(&mut rng)).collect());
                }
            }
            Sidecar {
                kind: args.kind,
                seed: args.seed,
                dim: args.dim,
                counts: vec![args.count; args.centers],
                stddev: Some(args.stddev),
                side: args.side,
                centers,
            }
        }
        Kind::Uniform => {
            for _ in 0..args.count {
                rows.push((0..args.dim).map(|_| rng.gen::<f64>() * args.side).collect());
            }
            Sidecar { kind: args.kind, seed: args.seed, dim: args.dim, counts: vec![args.count], stddev: None, side: args.side, centers: Vec::new() }
        }
    };
    let mut seen = std::collections::HashSet::new();
    if !rows.iter().all(|r| seen.insert(r.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())) {
        return Err(UsageError("generated data contains duplicate points".into()));
    }
    let points = PointSet::from_rows(&rows).map_err(|e| UsageError(e.to_string()))?;
    Ok((points, sidecar))
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn write(points: &PointSet, out: &Path) -> anyhow::Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_csv(points, file)?;
    Ok(())
}
