use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mpkm_core::io::load;
use mpkm_core::model::normalize;
use mpkm_core::oracles::{bruteforce_kmeans_opt, kmeans_cost, kmeans_plus_plus};
use mpkm_core::{solve_fl, solve_kmeans, FlInstance, KMeansConfig, KMeansInstance, PointSet};
use serde::Serialize;

mod bench;
mod config;
mod gen;
mod json;
mod verify;

use config::{CommonArgs, Settings};

const EXIT_USAGE: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_ACCOUNTING: u8 = 4;
/// k-means++ restarts used for the baseline when the exact optimum is out of reach.
const BASELINE_RESTARTS: u64 = 10;

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "mpkm", version, about = "Facility location and k-means on a simulated MPC cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (CSV) with a JSON sidecar describing it
    Gen(gen::GenArgs),
    /// Solve colocated facility location with opening cost λ
    Fl {
        dataset: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve k-means through the facility location reduction
    Kmeans {
        dataset: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run property suites against a dataset; exit 3 if any check fails
    Verify {
        dataset: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        /// Suites to run (repeatable); all when omitted
        #[arg(long, value_enum)]
        suite: Vec<verify::Suite>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit a CSV series of n against rounds, memory and cost ratio
    Bench(bench::BenchArgs),
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    dataset: String,
    n: usize,
    dim: usize,
    /// Factor applied to the input so the minimum pairwise distance is 1.
    normalization_scale: f64,
    settings: &'a Settings,
    constants: mpkm_core::ConstantTable,
    result: T,
}

#[derive(Serialize)]
struct KMeansReport {
    solution: mpkm_core::KMeansSolution,
    baseline: &'static str,
    baseline_cost: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    lambda: f64,
    passed: bool,
    suites: Vec<verify::SuiteReport>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<mpkm_core::Error>() {
        Some(mpkm_core::Error::Accounting(_)) => EXIT_ACCOUNTING,
        Some(mpkm_core::Error::Build(msg)) if msg.contains("budget") => EXIT_ACCOUNTING,
        Some(mpkm_core::Error::Input(_) | mpkm_core::Error::Guard(_) | mpkm_core::Error::Csv(_)) => EXIT_USAGE,
        _ => 1,
    }
}

fn load_normalized(path: &Path) -> anyhow::Result<(PointSet, f64)> {
    let raw = load(path).map_err(|e| match e {
        mpkm_core::Error::Io(io) => anyhow::Error::new(UsageError(format!("{}: {io}", path.display()))),
        other => anyhow::Error::new(other),
    })?;
    Ok(normalize(&raw)?)
}

fn emit<T: Serialize>(value: &T, report: Option<&Path>) -> anyhow::Result<()> {
    let text = json::to_canonical(value)?;
    print!("{text}");
    if let Some(path) = report {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn envelope<'a, T: Serialize>(command: &'a str, path: &Path, points: &PointSet, scale: f64, settings: &'a Settings, result: T) -> Envelope<'a, T> {
    Envelope {
        command,
        dataset: path.display().to_string(),
        n: points.len(),
        dim: points.dim(),
        normalization_scale: scale,
        settings,
        constants: settings.constants(),
        result,
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Gen(args) => {
            let (points, sidecar) = gen::generate(&args)?;
            gen::write(&points, &args.out)?;
            std::fs::write(gen::sidecar_path(&args.out), json::to_canonical(&sidecar)?)?;
        }
        Command::Fl { dataset, lambda, common } => {
            let settings = Settings::resolve(&common)?;
            let (points, scale) = load_normalized(&dataset)?;
            let inst = FlInstance::colocated(&points, lambda)?;
            let sol = solve_fl(&inst, &settings.fl_config())?;
            emit(&envelope("fl", &dataset, &points, scale, &settings, sol), settings.report.as_deref())?;
        }
        Command::Kmeans { dataset, k, common } => {
            let settings = Settings::resolve(&common)?;
            let (points, scale) = load_normalized(&dataset)?;
            let km = KMeansInstance::new(points.clone(), k)?;
            let solution = solve_kmeans(&km, &KMeansConfig::new(settings.fl_config()))?;
            let (baseline, baseline_cost) = match bruteforce_kmeans_opt(&km) {
                Ok((opt, _)) => ("optimal", opt),
                Err(_) => {
                    let best = (0..BASELINE_RESTARTS)
                        .map(|s| kmeans_cost(&points, &kmeans_plus_plus(&points, k, settings.seed.wrapping_add(s))))
                        .fold(f64::INFINITY, f64::min);
                    ("kmeans++", best)
                }
            };
            let ratio = if baseline_cost > 0.0 { solution.total_cost / baseline_cost } else { 1.0 };
            let report = KMeansReport { solution, baseline, baseline_cost, ratio };
            emit(&envelope("kmeans", &dataset, &points, scale, &settings, report), settings.report.as_deref())?;
        }
        Command::Verify { dataset, lambda, suite, common } => {
            let settings = Settings::resolve(&common)?;
            let (points, scale) = load_normalized(&dataset)?;
            let inst = FlInstance::colocated(&points, lambda)?;
            let mut suites = if suite.is_empty() { verify::Suite::ALL.to_vec() } else { suite };
            suites.sort();
            suites.dedup();
            let mut verifier = verify::Verifier::new(&inst, settings.fl_config());
            let reports = suites.into_iter().map(|s| verifier.run(s)).collect::<mpkm_core::Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed);
            let report = VerifyReport { lambda, passed, suites: reports };
            emit(&envelope("verify", &dataset, &points, scale, &settings, report), settings.report.as_deref())?;
            if !passed {
                return Ok(ExitCode::from(EXIT_VERIFY));
            }
        }
        Command::Bench(args) => {
            let settings = Settings::resolve(&args.common)?;
            let config = settings.fl_config();
            let mut lines = vec![bench::HEADER.to_string()];
            for &n in &args.sizes {
                let points = bench::workload(args.suite, n, args.dim, settings.seed)?;
                lines.push(bench::row(n, &points, args.lambda, &config, args.baseline_max)?);
            }
            let text = lines.join("\n") + "\n";
            print!("{text}");
            if let Some(path) = &settings.report {
                std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
