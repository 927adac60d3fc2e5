//! `sounder`: batch front end for waveform design, sweep simulation and
//! channel analysis. Outputs are plain files (text specs, JSON, CSV and the
//! binary recording) meant for downstream plotting.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmwave_sounder::ErrorKind;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "sounder", version, about = "mm-wave MIMO channel sounder twin")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize multitone phases and report the PAPR.
    Waveform(WaveformArgs),
    /// Build the beam codebook and its azimuth patterns.
    Codebook(CodebookArgs),
    /// Run a scenario through the sounder and write a recording.
    Simulate(SimulateArgs),
    /// Derive PDP, MPC, Doppler, PAS, statistics and tracking CSVs.
    Analyze(AnalyzeArgs),
    /// Fit a path-loss model to measured or simulated LOS points.
    FitPathloss(PathLossArgs),
    /// Summarize a recording and its sidecars.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct WaveformArgs {
    #[arg(long)]
    pub tones: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Also report the filtered Zadoff-Chu baseline.
    #[arg(long)]
    pub compare_zc: bool,
}

#[derive(Args, Debug)]
pub struct CodebookArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub az_min_deg: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub az_max_deg: Option<f64>,
    #[arg(long)]
    pub az_step_deg: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub elevation_deg: Option<f64>,
    #[arg(long)]
    pub phase_step_deg: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Built-in scenario: case1, case2, case2_van, case2_car.
    #[arg(long, conflicts_with = "scene")]
    pub scenario: Option<String>,
    /// Scene JSON file.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// static-19x19x10 or dynamic-10x10.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub bursts: Option<usize>,
    /// Snapshots per burst.
    #[arg(long)]
    pub snapshots: Option<usize>,
    /// Repetitions per beam pair.
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub burst_period_s: Option<f64>,
    /// Scene time of the first burst.
    #[arg(long)]
    pub start_s: Option<f64>,
    /// shared, ideal, free-running or gps.
    #[arg(long)]
    pub clock: Option<String>,
    /// Fractional frequency offset between TX and RX references.
    #[arg(long, allow_hyphen_values = true)]
    pub clock_offset: Option<f64>,
    /// Per-capture phase jitter, degrees.
    #[arg(long)]
    pub phase_noise_deg: Option<f64>,
    /// GPS random walk, degrees per square-root second.
    #[arg(long)]
    pub random_walk_deg: Option<f64>,
    /// Disable thermal noise and ADC quantization.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long)]
    pub eirp_dbm: Option<f64>,
    /// RMS amplitude ripple of the synthetic hardware response; 0 disables it.
    #[arg(long)]
    pub ripple_db: Option<f64>,
    /// Waveform spec file; optimized phases are generated when absent.
    #[arg(long)]
    pub waveform: Option<PathBuf>,
    /// Tone count of the generated waveform.
    #[arg(long)]
    pub tones: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub recording: Option<PathBuf>,
    /// Calibration file; defaults to calibration.txt beside the recording.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// hanning or none.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub pdp: bool,
    #[arg(long)]
    pub mpc: bool,
    #[arg(long)]
    pub doppler: bool,
    #[arg(long)]
    pub pas: bool,
    #[arg(long)]
    pub stats: bool,
    #[arg(long)]
    pub tracking: bool,
}

#[derive(Args, Debug)]
pub struct PathLossArgs {
    /// CSV of distance_m,path_loss_db; a noiseless LOS set is simulated when absent.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// ci (close-in) or abg (alpha-beta-gamma).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub min_m: Option<f64>,
    #[arg(long)]
    pub max_m: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub height_m: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub recording: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Format(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Format(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Format(m) => write!(f, "format error: {m}"),
        }
    }
}

impl From<mmwave_sounder::Error> for CliError {
    fn from(e: mmwave_sounder::Error) -> Self {
        let msg = e.to_string();
        match e.kind() {
            ErrorKind::Validation => CliError::Validation(msg),
            ErrorKind::Io => CliError::Io(msg),
            ErrorKind::Format => CliError::Format(msg),
        }
    }
}

/// Global settings after merging flags over the config file.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(config.seed).unwrap_or(1),
        out: cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        config,
    };
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::Io(format!("{}: {e}", ctx.out.display())))?;
    match &cli.command {
        Command::Waveform(a) => commands::waveform(&ctx, a),
        Command::Codebook(a) => commands::codebook(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Analyze(a) => commands::analyze(&ctx, a),
        Command::FitPathloss(a) => commands::fit_pathloss(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sounder: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
