use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mpkm_core::{make_constants, ConstantTable, FlConfig, Mode};
use serde::Serialize;

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Γ = 5, the regime the constants are proved for.
    Theory,
    /// Γ = 1, non-degenerate at desk scale.
    Practical,
}

impl Preset {
    fn gamma(self) -> f64 {
        match self {
            Preset::Theory => 5.0,
            Preset::Practical => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Lsh,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Lsh => Mode::Lsh,
        }
    }
}

/// Flags shared by every solver command. Each overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// key=value file, one setting per line
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Γ; overrides the preset
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub constants: Option<Preset>,
    /// Also write the JSON report to this file
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Settings {
    pub sigma: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub mode: Mode,
    pub seed: u64,
    pub constants: Preset,
    #[serde(skip)]
    pub report: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { sigma: 0.5, epsilon: 0.4, gamma: 1.0, mode: Mode::Exact, seed: 0, constants: Preset::Practical, report: None }
    }
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self, UsageError> {
        let file = match &args.config {
            Some(path) => read_config(path)?,
            None => BTreeMap::new(),
        };
        let mut s = Settings::default();
        let mut explicit_gamma = None;
        for (key, value) in &file {
            let bad = |what: &str| UsageError(format!("config key {key}: {what} {value:?}"));
            match key.as_str() {
                "sigma" => s.sigma = value.parse().map_err(|_| bad("not a number"))?,
                "epsilon" => s.epsilon = value.parse().map_err(|_| bad("not a number"))?,
                "gamma" => explicit_gamma = Some(value.parse().map_err(|_| bad("not a number"))?),
                "seed" => s.seed = value.parse().map_err(|_| bad("not an unsigned integer"))?,
                "mode" => s.mode = value.parse().map_err(|_| bad("unknown mode"))?,
                "constants" => s.constants = Preset::from_str(value, true).map_err(|_| bad("unknown preset"))?,
                "report" => s.report = Some(PathBuf::from(value)),
                _ => return Err(UsageError(format!("unknown config key {key}"))),
            }
        }
        if let Some(v) = args.sigma {
            s.sigma = v;
        }
        if let Some(v) = args.epsilon {
            s.epsilon = v;
        }
        if let Some(v) = args.mode {
            s.mode = v.into();
        }
        if let Some(v) = args.seed {
            s.seed = v;
        }
        if let Some(v) = args.constants {
            s.constants = v;
            // a preset on the command line beats a Γ from the file
            explicit_gamma = None;
        }
        if let Some(v) = args.gamma {
            explicit_gamma = Some(v);
        }
        if args.report.is_some() {
            s.report = args.report.clone();
        }
        s.gamma = explicit_gamma.unwrap_or(s.constants.gamma());
        if !(s.sigma > 0.0 && s.sigma < 1.0) {
            return Err(UsageError(format!("--sigma must lie in (0, 1), got {}", s.sigma)));
        }
        if !(s.epsilon > 0.0 && s.epsilon <= 1.0) {
            return Err(UsageError(format!("--epsilon must lie in (0, 1], got {}", s.epsilon)));
        }
        make_constants(s.gamma).map_err(|e| UsageError(e.to_string()))?;
        Ok(s)
    }

    pub fn constants(&self) -> ConstantTable {
        make_constants(self.gamma).expect("validated in resolve")
    }

    pub fn fl_config(&self) -> FlConfig {
        let mut cfg = FlConfig::new(self.mode, self.constants()).with_seed(self.seed);
        cfg.sigma = self.sigma;
        cfg.epsilon = self.epsilon;
        cfg
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, UsageError> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("{}:{}: expected key=value", path.display(), no + 1)))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}
