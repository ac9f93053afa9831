use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use herald_core::pnr::PixelModel;
use herald_core::ReadoutMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "herald", version, about = "Heralded single-photon source modeling, simulation and reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Detection probabilities and g² over a grid of mean photon numbers.
    ModelSweep(SweepArgs),
    /// Pulse-level simulation producing counts and optional time tags.
    Simulate(SimulateArgs),
    /// Photon-number distribution and g² from click counts, with Monte-Carlo errors.
    Reconstruct(ReconstructArgs),
    /// Fit pixel click probabilities to Poissonian calibration counts.
    Characterize(CharacterizeArgs),
    /// Compare the closed forms against exact enumeration over a grid.
    OracleCheck(OracleArgs),
    /// Check CSV files against the output schemas.
    Validate(ValidateArgs),
    /// Re-run a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated mean photon numbers; overrides the config grid.
    #[arg(long, value_delimiter = ',')]
    pub mu_grid: Option<Vec<f64>>,
    /// Readout modes to evaluate; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub mode: Vec<ReadoutMode>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pulses: Option<u64>,
    #[arg(long)]
    pub window_ps: Option<f64>,
    /// Also write the time-tag stream.
    #[arg(long)]
    pub timetags: bool,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReconstructArgs {
    /// Click table with columns clicks,count.
    #[arg(long)]
    pub clicks: PathBuf,
    /// Detector profile; the built-in reference detector when absent.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo iterations.
    #[arg(long, default_value_t = herald_core::presets::MONTE_CARLO_ITERATIONS)]
    pub iterations: usize,
    /// Standard deviation of the calibration mean photon number.
    #[arg(long, default_value_t = herald_core::presets::CALIBRATION_SIGMA)]
    pub sigma: f64,
    /// Nominal calibration mean photon number; defaults to the profile's.
    #[arg(long)]
    pub calibration_mu: Option<f64>,
    /// Propagate only calibration uncertainty, keeping the observed counts fixed.
    #[arg(long)]
    pub calibration_only: bool,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CharacterizeArgs {
    /// Click table recorded with Poissonian input.
    #[arg(long)]
    pub calibration: PathBuf,
    /// Mean photon number of the calibration input.
    #[arg(long)]
    pub mu: f64,
    /// Expected pixel count; checked against the click table.
    #[arg(long)]
    pub pixels: Option<usize>,
    #[arg(long, default_value_t = herald_core::presets::MAX_PHOTONS)]
    pub max_photons: usize,
    #[arg(long, default_value = "uniform")]
    pub model: PixelModel,
    #[arg(long, default_value = "detector")]
    pub name: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OracleArgs {
    /// TOML file with a [grid] table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub mu_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Perturbs one closed-form probability so the check must fail.
    #[arg(long, hide = true)]
    #[serde(default)]
    pub corrupt_formula: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Where to write the replayed outputs; `<manifest dir>/replay` by default.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
