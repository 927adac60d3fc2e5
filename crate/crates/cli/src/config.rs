//! TOML run configuration. Every field is optional; command-line flags take
//! precedence over values read from the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub waveform: WaveformConfig,
    pub codebook: CodebookConfig,
    pub simulate: SimulateConfig,
    pub analyze: AnalyzeConfig,
    pub pathloss: PathLossConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    pub tones: Option<usize>,
    pub max_iters: Option<usize>,
    pub compare_zc: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub az_min_deg: Option<f64>,
    pub az_max_deg: Option<f64>,
    pub az_step_deg: Option<f64>,
    pub elevation_deg: Option<f64>,
    pub phase_step_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: Option<String>,
    pub scene: Option<PathBuf>,
    pub preset: Option<String>,
    pub bursts: Option<usize>,
    pub snapshots: Option<usize>,
    pub repetitions: Option<usize>,
    pub burst_period_s: Option<f64>,
    pub start_s: Option<f64>,
    pub clock: Option<String>,
    pub clock_offset: Option<f64>,
    pub phase_noise_deg: Option<f64>,
    pub random_walk_deg: Option<f64>,
    pub noiseless: Option<bool>,
    pub eirp_dbm: Option<f64>,
    pub ripple_db: Option<f64>,
    pub waveform: Option<PathBuf>,
    pub tones: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub recording: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub window: Option<String>,
    pub pdp: Option<bool>,
    pub mpc: Option<bool>,
    pub doppler: Option<bool>,
    pub pas: Option<bool>,
    pub stats: Option<bool>,
    pub tracking: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossConfig {
    pub points: Option<PathBuf>,
    pub model: Option<String>,
    pub min_m: Option<f64>,
    pub max_m: Option<f64>,
    pub count: Option<usize>,
    pub height_m: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }
}
