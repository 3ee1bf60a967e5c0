//! The `plugwatt` operator tool: every pipeline stage from synthetic data to plots.

mod commands;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::run;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "plugwatt", version, about = "Plugload feedback and incentive experiment pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic experiment dataset.
    Synth(SynthArgs),
    /// Check a dataset directory against the data rules.
    Validate(ValidateArgs),
    /// Matched-pairs test of one experiment phase against the baseline.
    Analyze(AnalyzeArgs),
    /// Fit the hourly ARX model of the consumption differential.
    FitArx(FitArxArgs),
    /// Monte Carlo rollout of the controllable-demand model.
    SimulateDemand(SimulateDemandArgs),
    /// Run the HTTP service over a dataset directory.
    Serve(ServeArgs),
    /// Write plot data (CSV) and SVG renders.
    ExportPlots(ExportPlotsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with generator settings; unset keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub participants: Option<usize>,
    /// Two-phase calendar at this site (3 baseline + 1 feedback week) instead of the field calendar.
    #[arg(long)]
    pub site: Option<String>,
    /// Feedback-phase reduction for the two-phase calendar, as a fraction.
    #[arg(long, default_value_t = 0.10)]
    pub reduction: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Also write validation.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub site: String,
    /// Phase label (e.g. P3C) or kind (incentive, feedback, feedback_and_incentive).
    #[arg(long)]
    pub phase: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArxArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub site: String,
    /// Lag counts 1..=N are profiled in diagnostics.csv.
    #[arg(long, default_value_t = 6)]
    pub max_lags: usize,
    /// Lags in the reported model (site default when unset).
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long, value_parser = ["h", "h-1"])]
    pub incentive_timing: Option<String>,
    /// Chronological fraction of rows used for fitting.
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateDemandArgs {
    /// Plugload share of building demand.
    #[arg(long, default_value_t = 0.5)]
    pub fp: f64,
    /// Epochs (hours) to simulate.
    #[arg(long, default_value_t = 168)]
    pub horizon: usize,
    /// CSV `epoch,incentive_usd[,screentime_prev_s]`; unlisted epochs are zero.
    #[arg(long)]
    pub incentives: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// profile.csv with `hour,mean_kw,std_kw` (hour 1..24).
    #[arg(long, conflicts_with = "hourly_load")]
    pub profile: Option<PathBuf>,
    /// Raw `date,hour,kw` load to build the profile from.
    #[arg(long)]
    pub hourly_load: Option<PathBuf>,
    /// JSON reduction coefficients (alpha_l, beta_l, gamma_l, delta_l, sigma_xi).
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    /// Initial reduction R_0 (percent).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub r0: f64,
    /// First epoch instant (UTC).
    #[arg(long, default_value = "2016-10-17T00:00:00Z")]
    pub start: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Dataset directory (falls back to PLUGWATT_DATA_DIR).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Listen address (falls back to PLUGWATT_BIND_ADDR).
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportPlotsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub max_lags: usize,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
}

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Internal(_) => EXIT_INTERNAL,
        })
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Validation(m) => write!(f, "validation failed: {m}"),
            Failure::Internal(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Internal(e.into())
    }
}
