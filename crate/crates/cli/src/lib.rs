//! Command-line experiment driver.
//!
//! Every subcommand reads a model file, runs one experiment and writes a CSV
//! or JSON artifact. Random experiments need a seed from `--seed` or
//! `MULTIFRAG_SEED`; replica `r` always draws from stream `(seed, r)`, so
//! identical invocations give byte-identical output.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use multifrag::asymptotics::AsymptoticsError;
use multifrag::measures::{theta_lower, MeasureError, THETA_GUARD};
use multifrag::simulate::{SimError, DEFAULT_MASS_FLOOR};
use multifrag::specfile::{read_spec_file, SpecFileError};
use multifrag::spectral::SpectralError;
use multifrag::FragmentationSpec;

mod commands;
pub mod table;

pub use table::{Cell, Output, Table};

pub const SEED_ENV: &str = "MULTIFRAG_SEED";

#[derive(Debug, Parser)]
#[command(name = "multifrag", version, about = "Simulate and analyse multitype fragmentation models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check a model file and summarize it.
    Validate,
    /// Mass paths sampled at the times of --t-grid (default --t).
    Simulate,
    /// Partition paths on {1..n} at the times of --t-grid.
    Partition,
    /// Type and position (J, S) of the tagged fragment at the times of --t-grid.
    Tagged,
    /// φ, φ′, φ″, u and v over --theta-grid, plus the critical exponent.
    Spectral,
    /// Additive martingale per replica, θ from --theta-grid or --theta.
    Martingale,
    /// Law of large numbers and central limit statistics against their limits.
    Limits,
    /// Large-deviation window counts against the predicted growth.
    Ldcount,
    /// Aggregate JSON summary of the model.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    Bump,
    Sigmoid,
    Coswin,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Model file (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// 64-bit seed; falls back to MULTIFRAG_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1000)]
    pub replicas: usize,
    /// Time horizon.
    #[arg(long = "t", global = true, default_value_t = 1.0)]
    pub t: f64,
    /// Observation times `lo:hi:step` or a single value; defaults to --t.
    #[arg(long, global = true)]
    pub t_grid: Option<String>,
    /// Ground-set size for `partition`; number of uniform marks for `limits`.
    #[arg(long = "n", global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// `lo:hi:step`.
    #[arg(long, global = true)]
    pub theta_grid: Option<String>,
    #[arg(long, global = true, default_value_t = 1)]
    pub initial_type: usize,
    /// Fragments lighter than this are frozen.
    #[arg(long, global = true)]
    pub mass_floor: Option<f64>,
    /// Abort with exit code 5 beyond this many fragments in one path.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    pub max_fragments: usize,
    /// Test-function profile for `limits`.
    #[arg(long = "f", global = true, value_enum, default_value_t = ProfileKind::Bump)]
    pub f: ProfileKind,
    #[arg(long, global = true, default_value_t = 0.0)]
    pub f_center: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub f_width: f64,
    /// Restrict the test function to one type.
    #[arg(long, global = true)]
    pub f_type: Option<usize>,
    /// Window `a:b` in units of e^{−tφ′(θ)}; `b` may be `inf`.
    #[arg(long, global = true, default_value = "0.5:2")]
    pub window: String,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Usage { message: String },
    #[error("{0}")]
    Parse(SpecFileError),
    #[error("{message}")]
    Validation { message: String, violations: Vec<String> },
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Resource(String),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage {
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } | CliError::Parse(_) | CliError::Output { .. } => 2,
            CliError::Validation { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Resource(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage { .. } => "usage",
            CliError::Parse(_) => "parse",
            CliError::Validation { .. } => "validation",
            CliError::Numeric(_) => "numeric",
            CliError::Resource(_) => "resource",
            CliError::Output { .. } => "output",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Parse(SpecFileError::Parse(p)) => {
                v["line"] = json!(p.line);
                v["column"] = json!(p.column);
                v["field"] = json!(p.field);
            }
            CliError::Validation { violations, .. } => v["violations"] = json!(violations),
            _ => {}
        }
        v
    }
}

impl From<SpecFileError> for CliError {
    fn from(e: SpecFileError) -> Self {
        match e {
            SpecFileError::Validation(report) => CliError::Validation {
                message: "the model is invalid".to_string(),
                violations: report.violations.iter().map(ToString::to_string).collect(),
            },
            other => CliError::Parse(other),
        }
    }
}

fn model_error(message: String) -> CliError {
    CliError::Validation {
        violations: vec![message.clone()],
        message,
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ResourceCap(_) => CliError::Resource(e.to_string()),
            SimError::NotConservative | SimError::DistinctErosionCoefficients(_) => model_error(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::NotConservative => model_error(e.to_string()),
            MeasureError::ThetaOutOfDomain { .. } => CliError::usage(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Measure(m) => m.into(),
            SpectralError::NotIrreducible => model_error(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<AsymptoticsError> for CliError {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::InvalidWindow { .. } => CliError::usage(e.to_string()),
            AsymptoticsError::NotIrreducible => model_error(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

/// Parses `lo:hi:step` (inclusive, `lo + i·step` without accumulation) or a single number.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("grid {text:?} must be `lo:hi:step` or a number"));
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match nums[..] {
        [x] if x.is_finite() => Ok(vec![x]),
        [lo, hi, step] if lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo => {
            let count = ((hi - lo) / step + 1e-9).floor() as usize;
            if count > 1_000_000 {
                return Err(CliError::usage(format!("grid {text:?} has too many points")));
            }
            Ok((0..=count).map(|i| lo + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

/// Parses the window `a:b`.
pub fn parse_window(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::usage(format!("window {text:?} must be `a:b` with 0 <= a < b"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if a >= 0.0 && a < b {
        Ok((a, b))
    } else {
        Err(bad())
    }
}

/// Fully resolved invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub spec: FragmentationSpec,
    pub seed: Option<u64>,
    pub args: RunArgs,
    pub times: Vec<f64>,
}

impl RunConfig {
    pub fn resolve(cli: &Cli, env_seed: Option<String>) -> Result<Self, CliError> {
        let args = cli.args.clone();
        let path = args.spec.as_ref().ok_or_else(|| CliError::usage("--spec is required"))?;
        let spec = read_spec_file(path)?;
        if args.replicas == 0 {
            return Err(CliError::usage("--replicas must be at least 1"));
        }
        if !(args.t > 0.0 && args.t.is_finite()) {
            return Err(CliError::usage("--t must be positive and finite"));
        }
        let times = match &args.t_grid {
            Some(g) => parse_grid(g)?,
            None => vec![args.t],
        };
        if times.iter().any(|&t| t.is_nan() || t <= 0.0) {
            return Err(CliError::usage("observation times must be positive"));
        }
        if let Some(floor) = args.mass_floor {
            if !(0.0..1.0).contains(&floor) {
                return Err(CliError::usage("--mass-floor must lie in [0, 1)"));
            }
        }
        let lower = theta_lower(&spec);
        let mut thetas: Vec<f64> = args.theta.into_iter().collect();
        if let Some(g) = &args.theta_grid {
            thetas.extend(parse_grid(g)?);
        }
        if let Some(&bad) = thetas.iter().find(|&&th| th.is_nan() || th <= lower + THETA_GUARD) {
            return Err(CliError::usage(format!("theta {bad} is not above the lower bound {lower}")));
        }
        let seed = match args.seed {
            Some(s) => Some(s),
            None => match env_seed {
                Some(text) => Some(
                    text.trim()
                        .parse()
                        .map_err(|_| CliError::usage(format!("{SEED_ENV}={text:?} is not a 64-bit unsigned integer")))?,
                ),
                None => None,
            },
        };
        Ok(Self {
            command: cli.command,
            spec,
            seed,
            args,
            times,
        })
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::usage(format!("a seed is required: pass --seed or set {SEED_ENV}")))
    }

    pub fn mass_floor(&self) -> f64 {
        self.args.mass_floor.unwrap_or(DEFAULT_MASS_FLOOR)
    }

    pub fn t_max(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs the subcommand and returns the rendered artifact.
pub fn run(config: &RunConfig) -> Result<String, CliError> {
    let output = commands::dispatch(config)?;
    Ok(output.render(config.args.format == Format::Csv))
}

/// Full invocation: resolve, run and write to `--out` or return for stdout.
pub fn execute(cli: &Cli, env_seed: Option<String>) -> Result<Option<String>, CliError> {
    let config = RunConfig::resolve(cli, env_seed)?;
    log::info!("{:?} with seed {:?} on a {}-type model", config.command, config.seed, config.spec.k);
    let text = run(&config)?;
    match &config.args.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::Output {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
