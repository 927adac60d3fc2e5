//! Back-to-back system frequency response and its removal from captures.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::ToneGrid;

/// Highest ripple harmonic across the band. Keeps the synthetic response
/// smooth on the tone grid.
const RIPPLE_HARMONICS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    Synthetic,
    MeasuredFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResponse {
    pub grid: ToneGrid,
    /// Response shared by all beam pairs.
    pub response: Vec<Complex64>,
    /// Optional per-pair override, indexed by pair.
    pub per_pair: Option<Vec<Vec<Complex64>>>,
    pub source: CalibrationSource,
}

impl CalibrationResponse {
    pub fn identity(grid: ToneGrid) -> Self {
        Self {
            grid,
            response: vec![Complex64::new(1.0, 0.0); grid.num_tones],
            per_pair: None,
            source: CalibrationSource::Synthetic,
        }
    }

    pub fn new(grid: ToneGrid, response: Vec<Complex64>, source: CalibrationSource) -> Result<Self> {
        let cal = Self {
            grid,
            response,
            per_pair: None,
            source,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |r: &[Complex64]| {
            if r.len() != self.grid.num_tones {
                return Err(Error::GridMismatch(format!(
                    "response has {} values for {} tones",
                    r.len(),
                    self.grid.num_tones
                )));
            }
            if r.iter().any(|v| !(v.norm() > 0.0) || !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::InvalidSpec("calibration response has a zero or non-finite tone".into()));
            }
            Ok(())
        };
        check(&self.response)?;
        self.per_pair.iter().flatten().try_for_each(|r| check(r))
    }

    /// Response applying to one beam pair.
    pub fn for_pair(&self, pair: usize) -> &[Complex64] {
        match &self.per_pair {
            Some(table) if pair < table.len() => &table[pair],
            _ => &self.response,
        }
    }

    /// RMS amplitude deviation from the mean level, dB.
    pub fn amplitude_rms_db(&self) -> f64 {
        let db: Vec<f64> = self.response.iter().map(|v| 20.0 * v.norm().log10()).collect();
        rms_about_mean(&db)
    }

    /// RMS phase deviation from the mean, radians.
    pub fn phase_rms_rad(&self) -> f64 {
        let ph: Vec<f64> = self.response.iter().map(|v| v.arg()).collect();
        rms_about_mean(&ph)
    }
}

fn rms_about_mean(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Smooth zero-mean random curve over `n` points scaled to an exact RMS.
fn smooth_curve(n: usize, rms: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rms == 0.0 || n == 0 {
        return vec![0.0; n];
    }
    let coeffs: Vec<(f64, f64)> = (1..=RIPPLE_HARMONICS)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(h, (a, p))| a * (2.0 * PI * (h + 1) as f64 * x / 2.0 + p).cos())
                .sum()
        })
        .collect();
    let current = rms_about_mean(&raw);
    let mean = raw.iter().sum::<f64>() / n as f64;
    if current == 0.0 {
        return vec![0.0; n];
    }
    raw.into_iter().map(|v| (v - mean) * rms / current).collect()
}

/// Random smooth system response with the given RMS amplitude ripple (dB)
/// and RMS phase deviation (rad) over the tone grid.
pub fn synthesize_system_response(grid: ToneGrid, ripple_db_rms: f64, phase_rms_rad: f64, seed: u64) -> Result<CalibrationResponse> {
    if !(ripple_db_rms >= 0.0) || !(phase_rms_rad >= 0.0) {
        return Err(Error::InvalidSpec("ripple and phase deviation must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = smooth_curve(grid.num_tones, ripple_db_rms, &mut rng);
    let phase = smooth_curve(grid.num_tones, phase_rms_rad, &mut rng);
    let response = amp
        .iter()
        .zip(&phase)
        .map(|(a, p)| Complex64::from_polar(10f64.powf(a / 20.0), *p))
        .collect();
    CalibrationResponse::new(grid, response, CalibrationSource::Synthetic)
}

/// Element-wise division of a tone-grid spectrum by the calibration response.
pub fn apply_calibration(spectrum: &[Complex64], grid: &ToneGrid, cal: &CalibrationResponse) -> Result<Vec<Complex64>> {
    apply_calibration_for_pair(spectrum, grid, cal, 0)
}

pub fn apply_calibration_for_pair(spectrum: &[Complex64], grid: &ToneGrid, cal: &CalibrationResponse, pair: usize) -> Result<Vec<Complex64>> {
    if !cal.grid.matches(grid) {
        return Err(Error::GridMismatch(format!(
            "calibration grid ({} tones from {} Hz, {} Hz spacing) differs from capture grid ({} tones from {} Hz, {} Hz spacing)",
            cal.grid.num_tones,
            cal.grid.first_tone_hz,
            cal.grid.tone_spacing_hz,
            grid.num_tones,
            grid.first_tone_hz,
            grid.tone_spacing_hz
        )));
    }
    if spectrum.len() != grid.num_tones {
        return Err(Error::GridMismatch(format!(
            "spectrum has {} values for {} tones",
            spectrum.len(),
            grid.num_tones
        )));
    }
    Ok(spectrum.iter().zip(cal.for_pair(pair)).map(|(s, r)| s / r).collect())
}
