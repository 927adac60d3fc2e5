//! Post-processing of sweep recordings: directional PDPs and their
//! projections, MPC extraction, spreads, delay-Doppler spectra, path-loss
//! fits and beam-tracking gain.
//!
//! Power quantities are linear mW unless a name ends in `_db`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationResponse;
use crate::dsp::{db_to_amp, db_to_lin, lin_to_db, median, FftPair, Window};
use crate::error::{Error, Result};
use crate::scene::free_space_path_loss_db;
use crate::sounder::{awg_tone_reference, SweepRecording};

/// Detection threshold above the noise floor.
pub const DETECTION_MARGIN_DB: f64 = 6.0;
/// Fraction of the delay axis, at its end, used to estimate the noise floor.
pub const NOISE_TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Tx,
    Rx,
}

/// Complex impulse responses of every beam pair in one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub snapshot: u32,
    /// Timestamp of the snapshot's first capture.
    pub time_s: f64,
    pub delay_bin_s: f64,
    pub tx_azimuths_deg: Vec<f64>,
    pub rx_azimuths_deg: Vec<f64>,
    /// `[tx][rx][delay]`, scaled so that `|h|²` is received power in mW.
    pub taps: Array3<Complex64>,
}

impl ImpulseResponse {
    pub fn pdp(&self) -> DirectionalPdp {
        DirectionalPdp {
            snapshot: self.snapshot,
            time_s: self.time_s,
            delay_bin_s: self.delay_bin_s,
            tx_azimuths_deg: self.tx_azimuths_deg.clone(),
            rx_azimuths_deg: self.rx_azimuths_deg.clone(),
            power: self.taps.mapv(|h| h.norm_sqr()),
        }
    }
}

/// Power per TX beam × RX beam × delay bin for one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalPdp {
    pub snapshot: u32,
    pub time_s: f64,
    pub delay_bin_s: f64,
    pub tx_azimuths_deg: Vec<f64>,
    pub rx_azimuths_deg: Vec<f64>,
    /// `[tx][rx][delay]`.
    pub power: Array3<f64>,
}

impl DirectionalPdp {
    /// Wraps a bare tensor with index-valued axes, mainly for tests.
    pub fn from_tensor(power: Array3<f64>, delay_bin_s: f64) -> Self {
        let (t, r, _) = power.dim();
        Self {
            snapshot: 0,
            time_s: 0.0,
            delay_bin_s,
            tx_azimuths_deg: (0..t).map(|i| i as f64).collect(),
            rx_azimuths_deg: (0..r).map(|i| i as f64).collect(),
            power,
        }
    }

    pub fn num_delay_bins(&self) -> usize {
        self.power.dim().2
    }

    pub fn delays_s(&self) -> Vec<f64> {
        (0..self.num_delay_bins()).map(|k| k as f64 * self.delay_bin_s).collect()
    }
}

/// Estimates the impulse response of every capture. Repetitions are
/// averaged coherently, the AGC gain, transmitted tone values and system
/// response are divided out and the window is applied across tones.
pub fn impulse_responses(recording: &SweepRecording, calibration: &CalibrationResponse, window: Window) -> Result<Vec<ImpulseResponse>> {
    recording.validate()?;
    let h = &recording.header;
    let spec = &h.waveform;
    let grid = spec.grid();
    if !calibration.grid.matches(&grid) {
        return Err(Error::GridMismatch("calibration grid differs from the recording's tone grid".into()));
    }
    calibration.validate()?;
    let n = grid.num_tones;
    let period = spec.period_len();
    let reps = h.schedule.repetitions_per_pair;
    let bins: Vec<usize> = spec.tone_bins().iter().map(|b| b.rem_euclid(period as i64) as usize).collect();
    let reference = awg_tone_reference(spec, h.receiver.awg_bits)?;
    let w = window.symmetric(n);
    let w_sum: f64 = w.iter().sum();
    let scale = (n as f64).sqrt() / w_sum;
    let fft_time = FftPair::new(period);
    let fft_delay = FftPair::new(n);
    let (nt, nr) = (h.schedule.tx_beams.len(), h.schedule.rx_beams.len());
    let delay_bin_s = 1.0 / grid.sampled_bandwidth_hz();

    let per_capture: Vec<Vec<Complex64>> = recording
        .captures
        .par_iter()
        .map(|c| {
            let mut mean = vec![Complex64::new(0.0, 0.0); period];
            for r in 0..reps {
                let mut buf: Vec<Complex64> = c.samples[r * period..(r + 1) * period]
                    .iter()
                    .map(|s| Complex64::new(s.re as f64, s.im as f64))
                    .collect();
                fft_time.forward(&mut buf);
                mean.iter_mut().zip(&buf).for_each(|(m, b)| *m += b);
            }
            let norm = 1.0 / (period as f64 * reps as f64 * db_to_amp(c.gain_db as f64));
            let cal = calibration.for_pair(c.pair as usize);
            let mut z: Vec<Complex64> = (0..n)
                .map(|k| mean[bins[k]] * norm / (reference[k] * cal[k]) * w[k])
                .collect();
            fft_delay.inverse(&mut z);
            z.iter_mut().for_each(|v| *v *= scale);
            z
        })
        .collect();

    let mut out = Vec::with_capacity(h.snapshot_count as usize);
    for snapshot in 0..h.snapshot_count {
        let mut taps = Array3::zeros((nt, nr, n));
        let mut time_s = f64::INFINITY;
        for (c, z) in recording.captures.iter().zip(&per_capture).filter(|(c, _)| c.snapshot == snapshot) {
            let (ti, ri) = h.schedule.pair_beams(c.pair as usize);
            taps.slice_mut(s![ti, ri, ..]).iter_mut().zip(z).for_each(|(t, v)| *t = *v);
            time_s = time_s.min(c.timestamp_s);
        }
        out.push(ImpulseResponse {
            snapshot,
            time_s,
            delay_bin_s,
            tx_azimuths_deg: h.tx_beam_azimuths_deg.clone(),
            rx_azimuths_deg: h.rx_beam_azimuths_deg.clone(),
            taps,
        });
    }
    Ok(out)
}

/// Directional PDP of every snapshot in a recording.
pub fn directional_pdp(recording: &SweepRecording, calibration: &CalibrationResponse, window: Window) -> Result<Vec<DirectionalPdp>> {
    Ok(impulse_responses(recording, calibration, window)?.iter().map(ImpulseResponse::pdp).collect())
}

/// Noise power gain of the tone window relative to no window,
/// `N·Σw²/(Σw)²`.
pub fn window_noise_gain(window: Window, num_tones: usize) -> f64 {
    let w = window.symmetric(num_tones);
    let sum: f64 = w.iter().sum();
    num_tones as f64 * w.iter().map(|v| v * v).sum::<f64>() / (sum * sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmniMethod {
    /// Maximum over all beam pairs per delay bin.
    #[default]
    Max,
    /// Sum over all beam pairs per delay bin.
    Sum,
}

pub fn omni_pdp(pdp: &DirectionalPdp, method: OmniMethod) -> Vec<f64> {
    let d = pdp.num_delay_bins();
    (0..d)
        .map(|k| {
            let slice = pdp.power.slice(s![.., .., k]);
            match method {
                OmniMethod::Max => slice.iter().copied().fold(0.0, f64::max),
                OmniMethod::Sum => slice.sum(),
            }
        })
        .collect()
}

/// Power angular-delay profile `[beam][delay]` of one side, maximized over
/// the other side's beams.
pub fn padp(pdp: &DirectionalPdp, side: Side) -> Array2<f64> {
    let other = match side {
        Side::Tx => Axis(1),
        Side::Rx => Axis(0),
    };
    pdp.power.fold_axis(other, 0.0, |acc, &v| acc.max(v))
}

/// Angular power spectrum `[tx][rx]`: PDP summed over delay.
pub fn pas(pdp: &DirectionalPdp) -> Array2<f64> {
    pdp.power.sum_axis(Axis(2))
}

/// PAS counting only delay bins above `floor_db + margin_db`.
pub fn pas_above(pdp: &DirectionalPdp, floor_db: f64, margin_db: f64) -> Array2<f64> {
    let thr = db_to_lin(floor_db + margin_db);
    pdp.power.fold_axis(Axis(2), 0.0, |acc, &v| if v > thr { acc + v } else { *acc })
}

/// PAS summed over the other side's beams.
pub fn pas_marginal(pas: &Array2<f64>, side: Side) -> Vec<f64> {
    let other = match side {
        Side::Tx => Axis(1),
        Side::Rx => Axis(0),
    };
    pas.sum_axis(other).to_vec()
}

/// Noise level (dB) of the max-method omni PDP: the median over the last
/// tenth of its delay axis, where no paths are expected.
pub fn noise_floor_db(pdp: &DirectionalPdp) -> Result<f64> {
    let omni = omni_pdp(pdp, OmniMethod::Max);
    let d = omni.len();
    let tail = ((d as f64 * NOISE_TAIL_FRACTION).ceil() as usize).max(1).min(d);
    let m = median(&omni[d - tail..]).ok_or_else(|| Error::Degenerate("empty PDP".into()))?;
    if !(m > 0.0) {
        return Err(Error::Degenerate("noise floor is zero".into()));
    }
    Ok(lin_to_db(m))
}

/// One extracted multipath component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcEstimate {
    pub snapshot: u32,
    pub delay_bin: usize,
    pub delay_s: f64,
    /// Position of the beam in the sweep's TX list.
    pub tx_beam: usize,
    pub rx_beam: usize,
    pub tx_azimuth_deg: f64,
    pub rx_azimuth_deg: f64,
    pub power_db: f64,
}

/// Local maxima of the tensor above `threshold` (linear). A sample is a
/// peak when it exceeds all 26 neighbours; equal neighbours only block it
/// when they come first in (delay, tx, rx) order. The delay axis is
/// circular.
pub fn find_peaks(power: &Array3<f64>, threshold: f64) -> Vec<(usize, usize, usize)> {
    let (nt, nr, nd) = power.dim();
    let mut peaks = Vec::new();
    for d in 0..nd {
        for t in 0..nt {
            for r in 0..nr {
                let v = power[[t, r, d]];
                if !(v > threshold) {
                    continue;
                }
                let mut is_peak = true;
                'scan: for dd in [-1i64, 0, 1] {
                    let d2 = (d as i64 + dd).rem_euclid(nd as i64) as usize;
                    for dt in [-1i64, 0, 1] {
                        let t2 = t as i64 + dt;
                        if t2 < 0 || t2 >= nt as i64 {
                            continue;
                        }
                        for dr in [-1i64, 0, 1] {
                            let r2 = r as i64 + dr;
                            if r2 < 0 || r2 >= nr as i64 {
                                continue;
                            }
                            let (t2, r2) = (t2 as usize, r2 as usize);
                            if (d2, t2, r2) == (d, t, r) {
                                continue;
                            }
                            let u = power[[t2, r2, d2]];
                            if u > v || (u == v && (d2, t2, r2) < (d, t, r)) {
                                is_peak = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_peak {
                    peaks.push((t, r, d));
                }
            }
        }
    }
    peaks
}

/// Peak search and per-delay-bin acceptance: the strongest peak of a bin is
/// kept, others within 10 dB of it are kept, and others within 20 dB are
/// kept only if neither beam coincides with the strongest peak's beams.
pub fn extract_mpcs(pdp: &DirectionalPdp, noise_floor_db: f64) -> Vec<MpcEstimate> {
    let threshold = db_to_lin(noise_floor_db + DETECTION_MARGIN_DB);
    let mut by_delay: BTreeMap<usize, Vec<(f64, usize, usize)>> = BTreeMap::new();
    for (t, r, d) in find_peaks(&pdp.power, threshold) {
        by_delay.entry(d).or_default().push((pdp.power[[t, r, d]], t, r));
    }
    let mut out = Vec::new();
    for (d, mut peaks) in by_delay {
        peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let (p_max, t_max, r_max) = peaks[0];
        for (k, &(p, t, r)) in peaks.iter().enumerate() {
            let accept = k == 0 || p > p_max / 10.0 || (p > p_max / 100.0 && t != t_max && r != r_max);
            if accept {
                out.push(MpcEstimate {
                    snapshot: pdp.snapshot,
                    delay_bin: d,
                    delay_s: d as f64 * pdp.delay_bin_s,
                    tx_beam: t,
                    rx_beam: r,
                    tx_azimuth_deg: pdp.tx_azimuths_deg[t],
                    rx_azimuth_deg: pdp.rx_azimuths_deg[r],
                    power_db: lin_to_db(p),
                });
            }
        }
    }
    out
}

/// RMS delay spread of the PDP bins above `floor_db + threshold_db`.
pub fn rms_delay_spread(pdp: &[f64], delay_bin_s: f64, floor_db: f64, threshold_db: f64) -> Result<f64> {
    let thr = db_to_lin(floor_db + threshold_db);
    let kept: Vec<(f64, f64)> = pdp
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > thr)
        .map(|(k, &p)| (k as f64 * delay_bin_s, p))
        .collect();
    let total: f64 = kept.iter().map(|(_, p)| p).sum();
    if kept.is_empty() || !(total > 0.0) {
        return Err(Error::Degenerate("no PDP bins above the delay-spread threshold".into()));
    }
    let mean = kept.iter().map(|(t, p)| t * p).sum::<f64>() / total;
    let var = kept.iter().map(|(t, p)| (t - mean).powi(2) * p).sum::<f64>() / total;
    Ok(var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularStats {
    pub mean_angle_deg: f64,
    pub angular_spread_deg: f64,
}

/// Power-weighted circular mean and spread. The spread is
/// `sqrt(Σp·|e^{jφ} − μ|² / Σp)` with `μ` the weighted mean phasor,
/// converted from radians to degrees.
pub fn angular_stats(angles_deg: &[f64], weights: &[f64]) -> Result<AngularStats> {
    if angles_deg.len() != weights.len() {
        return Err(Error::InvalidSpec("angle and weight lists differ in length".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidSpec("angular weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("zero total power".into()));
    }
    let phasors: Vec<Complex64> = angles_deg.iter().map(|a| Complex64::from_polar(1.0, a.to_radians())).collect();
    let mu = phasors.iter().zip(weights).map(|(e, w)| e * w).sum::<Complex64>() / total;
    let second = phasors.iter().zip(weights).map(|(e, w)| (e - mu).norm_sqr() * w).sum::<f64>() / total;
    Ok(AngularStats {
        mean_angle_deg: mu.arg().to_degrees(),
        angular_spread_deg: second.max(0.0).sqrt().to_degrees(),
    })
}

/// Beam pair used per delay bin when forming the delay-Doppler spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSelection {
    /// Sweep positions of one TX and one RX beam.
    Fixed { tx: usize, rx: usize },
    /// Strongest pair (by burst-averaged power) in each delay bin.
    PerBinMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerSpectrum {
    pub delay_bin_s: f64,
    /// Symmetric about zero; both Nyquist edges appear for even burst lengths.
    pub doppler_hz: Vec<f64>,
    /// `[delay][doppler]`, mW.
    pub power: Array2<f64>,
}

impl DelayDopplerSpectrum {
    pub fn doppler_resolution_hz(&self) -> f64 {
        self.doppler_hz.get(1).map_or(0.0, |v| v - self.doppler_hz[0])
    }

    /// Strongest cell as `(delay bin, doppler_hz, power)`. Of two equal
    /// cells the one at higher Doppler wins.
    pub fn peak(&self) -> (usize, f64, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for ((d, v), &p) in self.power.indexed_iter() {
            let tol = 1e-9 * best.2.abs();
            if p > best.2 + tol || ((p - best.2).abs() <= tol && d == best.0 && v > best.1) {
                best = (d, v, p);
            }
        }
        (best.0, self.doppler_hz[best.1], best.2)
    }

    /// Strongest Doppler cell within one delay bin.
    pub fn peak_in_delay_bin(&self, delay_bin: usize) -> (f64, f64) {
        let row = self.power.row(delay_bin);
        let mut best = (0, f64::NEG_INFINITY);
        for (v, &p) in row.iter().enumerate() {
            if p >= best.1 - 1e-9 * best.1.abs() {
                best = (v, p.max(best.1));
            }
        }
        (self.doppler_hz[best.0], best.1)
    }

    pub fn median_db(&self) -> f64 {
        lin_to_db(median(self.power.as_slice().expect("standard layout")).unwrap_or(0.0))
    }
}

/// Doppler axis for `n` snapshots at period `t`: `n + 1` points for even
/// `n` (both ±1/(2t) edges), `n` points otherwise.
pub fn doppler_axis(n: usize, period_s: f64) -> Vec<f64> {
    let res = 1.0 / (n as f64 * period_s);
    let half = (n / 2) as i64;
    (-half..=half).map(|k| k as f64 * res).collect()
}

/// Delay-Doppler spectrum of one burst: per delay bin, a DFT of the
/// impulse response across snapshots, normalized so a constant tap keeps
/// its power.
pub fn delay_doppler(burst: &[ImpulseResponse], selection: PairSelection, window: Window) -> Result<DelayDopplerSpectrum> {
    if burst.len() < 2 {
        return Err(Error::InvalidSpec("delay-Doppler needs at least two snapshots".into()));
    }
    let period = burst[1].time_s - burst[0].time_s;
    if !(period > 0.0) {
        return Err(Error::NonUniformTimestamps("snapshot times do not increase".into()));
    }
    for (k, pair) in burst.windows(2).enumerate() {
        let dt = pair[1].time_s - pair[0].time_s;
        if (dt - period).abs() > 1e-9 * period {
            return Err(Error::NonUniformTimestamps(format!(
                "snapshot {} is {dt} s after its predecessor, expected {period} s",
                k + 1
            )));
        }
    }
    let dim = burst[0].taps.dim();
    if burst.iter().any(|b| b.taps.dim() != dim) {
        return Err(Error::InvalidSpec("snapshots differ in beam or delay dimensions".into()));
    }
    let (nt, nr, nd) = dim;
    let pairs: Vec<(usize, usize)> = match selection {
        PairSelection::Fixed { tx, rx } => {
            if tx >= nt || rx >= nr {
                return Err(Error::InvalidSpec(format!("beam pair ({tx}, {rx}) outside a {nt}x{nr} sweep")));
            }
            vec![(tx, rx); nd]
        }
        PairSelection::PerBinMax => (0..nd)
            .map(|d| {
                let mut best = ((0, 0), f64::NEG_INFINITY);
                for t in 0..nt {
                    for r in 0..nr {
                        let p: f64 = burst.iter().map(|b| b.taps[[t, r, d]].norm_sqr()).sum();
                        if p > best.1 {
                            best = ((t, r), p);
                        }
                    }
                }
                best.0
            })
            .collect(),
    };
    let n = burst.len();
    let w = window.symmetric(n);
    let w_sum: f64 = w.iter().sum();
    let doppler_hz = doppler_axis(n, period);
    let t0 = burst[0].time_s;
    let kernel: Vec<Vec<Complex64>> = doppler_hz
        .iter()
        .map(|nu| {
            burst
                .iter()
                .zip(&w)
                .map(|(b, wk)| Complex64::from_polar(wk / w_sum, -2.0 * PI * (nu * (b.time_s - t0)).fract()))
                .collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..nd)
        .into_par_iter()
        .map(|d| {
            let (t, r) = pairs[d];
            kernel
                .iter()
                .map(|k| burst.iter().zip(k).map(|(b, c)| b.taps[[t, r, d]] * c).sum::<Complex64>().norm_sqr())
                .collect()
        })
        .collect();
    let mut power = Array2::zeros((nd, doppler_hz.len()));
    for (d, row) in rows.into_iter().enumerate() {
        power.row_mut(d).iter_mut().zip(row).for_each(|(p, v)| *p = v);
    }
    Ok(DelayDopplerSpectrum {
        delay_bin_s: burst[0].delay_bin_s,
        doppler_hz,
        power,
    })
}

/// Splits impulse responses into bursts of `snapshots_per_burst`.
pub fn bursts(irs: &[ImpulseResponse], snapshots_per_burst: usize) -> Vec<&[ImpulseResponse]> {
    irs.chunks(snapshots_per_burst.max(1)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PathLossModel {
    /// Free-space intercept at 1 m plus `10·n·log10(d)`.
    CloseIn { carrier_hz: f64 },
    /// `10·α·log10(d) + β + 10·γ·log10(f/1 GHz)`. With data from a single
    /// carrier the frequency term is unidentifiable and `γ` is fixed to 0.
    AlphaBetaGamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossFit {
    pub model: PathLossModel,
    /// `n` for close-in, `α` for alpha-beta-gamma.
    pub exponent: f64,
    /// FSPL at 1 m for close-in, `β` for alpha-beta-gamma, dB.
    pub intercept_db: f64,
    pub gamma: f64,
    /// Residual standard deviation with the fitted parameter count removed.
    pub shadowing_sigma_db: f64,
    pub residuals_db: Vec<f64>,
}

impl PathLossFit {
    pub fn predict_db(&self, distance_m: f64) -> f64 {
        self.intercept_db + 10.0 * self.exponent * distance_m.log10()
    }
}

/// Least-squares path-loss fit in the dB domain over `(distance_m,
/// path_loss_db)` points.
pub fn fit_path_loss(points: &[(f64, f64)], model: PathLossModel) -> Result<PathLossFit> {
    if points.iter().any(|(d, pl)| !(*d > 0.0) || !pl.is_finite()) {
        return Err(Error::InvalidSpec("distances must be positive and losses finite".into()));
    }
    let x: Vec<f64> = points.iter().map(|(d, _)| 10.0 * d.log10()).collect();
    let y: Vec<f64> = points.iter().map(|(_, pl)| *pl).collect();
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n.max(1.0);
    let sxx: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
    let distinct = sxx > 1e-12 * x.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    let (exponent, intercept_db, params) = match model {
        PathLossModel::CloseIn { carrier_hz } => {
            if points.len() < 2 || !distinct {
                return Err(Error::Degenerate("close-in fit needs at least two distinct distances".into()));
            }
            let fspl = free_space_path_loss_db(1.0, carrier_hz)?;
            let sx2: f64 = x.iter().map(|v| v * v).sum();
            let exp = x.iter().zip(&y).map(|(a, b)| a * (b - fspl)).sum::<f64>() / sx2;
            (exp, fspl, 1.0)
        }
        PathLossModel::AlphaBetaGamma => {
            if points.len() < 3 || !distinct {
                return Err(Error::Degenerate("alpha-beta-gamma fit needs at least three points at distinct distances".into()));
            }
            let y_mean = y.iter().sum::<f64>() / n;
            let alpha = x.iter().zip(&y).map(|(a, b)| (a - x_mean) * (b - y_mean)).sum::<f64>() / sxx;
            (alpha, y_mean - alpha * x_mean, 2.0)
        }
    };
    let residuals_db: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - (intercept_db + exponent * a)).collect();
    let dof = (n - params).max(1.0);
    let shadowing_sigma_db = (residuals_db.iter().map(|r| r * r).sum::<f64>() / dof).sqrt();
    Ok(PathLossFit {
        model,
        exponent,
        intercept_db,
        gamma: 0.0,
        shadowing_sigma_db,
        residuals_db,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingGain {
    /// Pair with the highest time-averaged power, `(tx, rx)` sweep positions.
    pub fixed_pair: (usize, usize),
    pub fixed_best_db: Vec<f64>,
    pub instantaneous_best_db: Vec<f64>,
    pub instantaneous_pair: Vec<(usize, usize)>,
}

impl TrackingGain {
    pub fn gain_db(&self) -> Vec<f64> {
        self.instantaneous_best_db.iter().zip(&self.fixed_best_db).map(|(i, f)| i - f).collect()
    }
}

/// Power through a fixed best pair versus the per-snapshot best pair.
pub fn beam_tracking_gain(pas_series: &[Array2<f64>]) -> Result<TrackingGain> {
    let first = pas_series.first().ok_or_else(|| Error::InvalidSpec("tracking needs at least one snapshot".into()))?;
    if pas_series.iter().any(|p| p.dim() != first.dim()) || first.is_empty() {
        return Err(Error::InvalidSpec("PAS series must share a non-empty shape".into()));
    }
    let argmax = |a: &Array2<f64>| {
        a.indexed_iter()
            .fold(((0, 0), f64::NEG_INFINITY), |best, (idx, &v)| if v > best.1 { (idx, v) } else { best })
    };
    let mut total = Array2::<f64>::zeros(first.dim());
    for p in pas_series {
        total += p;
    }
    let (fixed_pair, _) = argmax(&total);
    let mut fixed = Vec::with_capacity(pas_series.len());
    let mut inst = Vec::with_capacity(pas_series.len());
    let mut inst_pair = Vec::with_capacity(pas_series.len());
    for p in pas_series {
        let (pair, best) = argmax(p);
        fixed.push(lin_to_db(p[fixed_pair]));
        inst.push(lin_to_db(best));
        inst_pair.push(pair);
    }
    Ok(TrackingGain {
        fixed_pair,
        fixed_best_db: fixed,
        instantaneous_best_db: inst,
        instantaneous_pair: inst_pair,
    })
}
