//! Multitone sounding waveform: synthesis, crest-factor optimization and a
//! Zadoff-Chu reference signal.
//!
//! The waveform is one period (`1/Δf`) of a sum of equal-amplitude complex
//! exponentials on a regular tone grid. Only the tone phases are free; the
//! optimizer reshapes them to flatten the time-domain envelope.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{lin_to_db, FftPair};
use crate::error::{Error, Result};

/// Oversampling factor used when measuring PAPR of band-limited signals.
pub const PAPR_OVERSAMPLING: usize = 4;

const GRID_TOL: f64 = 1e-6;

/// Regularly spaced tone frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneGrid {
    pub num_tones: usize,
    pub tone_spacing_hz: f64,
    pub first_tone_hz: f64,
}

impl ToneGrid {
    pub fn frequency_hz(&self, tone: usize) -> f64 {
        self.first_tone_hz + tone as f64 * self.tone_spacing_hz
    }

    pub fn last_tone_hz(&self) -> f64 {
        self.frequency_hz(self.num_tones.saturating_sub(1))
    }

    pub fn center_hz(&self) -> f64 {
        0.5 * (self.first_tone_hz + self.last_tone_hz())
    }

    /// Bandwidth sampled by the tones, `num_tones·Δf`. Its inverse is the
    /// delay resolution of the impulse-response estimate.
    pub fn sampled_bandwidth_hz(&self) -> f64 {
        self.num_tones as f64 * self.tone_spacing_hz
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        (0..self.num_tones).map(|n| self.frequency_hz(n)).collect()
    }

    pub fn matches(&self, other: &ToneGrid) -> bool {
        let tol = 1e-9 * self.tone_spacing_hz.abs().max(1.0);
        self.num_tones == other.num_tones
            && (self.tone_spacing_hz - other.tone_spacing_hz).abs() <= tol
            && (self.first_tone_hz - other.first_tone_hz).abs() <= tol
    }
}

/// Parameters of a multitone waveform (tone grid, sample rate and phases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultitoneSpec {
    pub num_tones: usize,
    pub tone_spacing_hz: f64,
    pub first_tone_hz: f64,
    pub sample_rate_hz: f64,
    pub phases_rad: Vec<f64>,
}

impl MultitoneSpec {
    /// Spec with all phases zero.
    pub fn new(num_tones: usize, tone_spacing_hz: f64, first_tone_hz: f64, sample_rate_hz: f64) -> Self {
        Self {
            num_tones,
            tone_spacing_hz,
            first_tone_hz,
            sample_rate_hz,
            phases_rad: vec![0.0; num_tones],
        }
    }

    /// 801 tones at 500 kHz from 50 MHz, sampled at 1.25 GS/s.
    pub fn default_sounder() -> Self {
        Self::new(801, 500e3, 50e6, 1.25e9)
    }

    /// Replaces the phases, reducing them modulo 2π.
    pub fn with_phases(mut self, phases_rad: Vec<f64>) -> Self {
        self.phases_rad = phases_rad.into_iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        self
    }

    pub fn grid(&self) -> ToneGrid {
        ToneGrid {
            num_tones: self.num_tones,
            tone_spacing_hz: self.tone_spacing_hz,
            first_tone_hz: self.first_tone_hz,
        }
    }

    /// Samples in one waveform period.
    pub fn period_len(&self) -> usize {
        (self.sample_rate_hz / self.tone_spacing_hz).round() as usize
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.tone_spacing_hz
    }

    /// Signed DFT bin of each tone (frequency / Δf).
    pub fn tone_bins(&self) -> Vec<i64> {
        let first = (self.first_tone_hz / self.tone_spacing_hz).round() as i64;
        (0..self.num_tones as i64).map(|n| first + n).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidSpec(m));
        if self.num_tones == 0 || self.num_tones % 2 == 0 {
            return invalid(format!("num_tones must be odd and >= 1, got {}", self.num_tones));
        }
        if !(self.tone_spacing_hz.is_finite() && self.tone_spacing_hz > 0.0) {
            return invalid(format!("tone spacing must be positive, got {}", self.tone_spacing_hz));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return invalid(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        if !self.first_tone_hz.is_finite() {
            return invalid("first tone frequency is not finite".into());
        }
        if self.phases_rad.len() != self.num_tones {
            return invalid(format!(
                "{} phases given for {} tones",
                self.phases_rad.len(),
                self.num_tones
            ));
        }
        if self.phases_rad.iter().any(|p| !p.is_finite()) {
            return invalid("non-finite phase".into());
        }
        let ratio = self.sample_rate_hz / self.tone_spacing_hz;
        if (ratio - ratio.round()).abs() > GRID_TOL * ratio {
            return invalid(format!(
                "sample rate {} Hz is not an integer multiple of the tone spacing {} Hz",
                self.sample_rate_hz, self.tone_spacing_hz
            ));
        }
        let first = self.first_tone_hz / self.tone_spacing_hz;
        if (first - first.round()).abs() > GRID_TOL * first.abs().max(1.0) {
            return invalid("first tone is not on the tone-spacing grid".into());
        }
        let nyquist = 0.5 * self.sample_rate_hz;
        let grid = self.grid();
        if grid.last_tone_hz() >= nyquist || grid.first_tone_hz <= -nyquist {
            return invalid(format!(
                "tone grid [{}, {}] Hz exceeds Nyquist {} Hz",
                grid.first_tone_hz,
                grid.last_tone_hz(),
                nyquist
            ));
        }
        Ok(())
    }
}

/// One sampled period of a multitone waveform, peak-normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitoneWaveform {
    pub spec: MultitoneSpec,
    pub samples: Vec<Complex64>,
    pub papr_db: f64,
}

impl MultitoneWaveform {
    /// Complex amplitude of every tone as present in `samples`.
    pub fn tone_values(&self) -> Vec<Complex64> {
        tone_values_of(&self.samples, &self.spec.tone_bins())
    }

    /// The same waveform evaluated on a grid `factor` times denser.
    pub fn oversampled(&self, factor: usize) -> Vec<Complex64> {
        let values = self.tone_values();
        let len = self.samples.len() * factor.max(1);
        synthesize_bins(&self.spec.tone_bins(), &values, len, &FftPair::new(len))
    }

    pub fn oversampled_papr_db(&self, factor: usize) -> f64 {
        papr_db(&self.oversampled(factor)).unwrap_or(0.0)
    }
}

/// Sum of tones evaluated over one period of `len` samples.
fn synthesize_bins(bins: &[i64], values: &[Complex64], len: usize, fft: &FftPair) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (&b, &v) in bins.iter().zip(values) {
        buf[b.rem_euclid(len as i64) as usize] += v;
    }
    fft.inverse(&mut buf);
    buf
}

fn tone_values_of(samples: &[Complex64], bins: &[i64]) -> Vec<Complex64> {
    let len = samples.len();
    let mut buf = samples.to_vec();
    FftPair::new(len).forward(&mut buf);
    let scale = 1.0 / len as f64;
    bins.iter()
        .map(|b| buf[b.rem_euclid(len as i64) as usize] * scale)
        .collect()
}

fn unit_phasors(phases: &[f64]) -> Vec<Complex64> {
    phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
}

/// Samples one period of the multitone sum at the spec's sample rate and
/// normalizes the peak amplitude to 1.
pub fn synthesize(spec: &MultitoneSpec) -> Result<MultitoneWaveform> {
    spec.validate()?;
    let len = spec.period_len();
    let mut samples = synthesize_bins(&spec.tone_bins(), &unit_phasors(&spec.phases_rad), len, &FftPair::new(len));
    let peak = samples.iter().map(|s| s.norm()).fold(0.0, f64::max);
    for s in &mut samples {
        *s /= peak;
    }
    let papr_db = papr_db(&samples)?;
    Ok(MultitoneWaveform {
        spec: spec.clone(),
        samples,
        papr_db,
    })
}

/// Peak-to-average power ratio in dB.
pub fn papr_db(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::UndefinedPower);
    }
    let (peak, sum) = samples
        .iter()
        .map(|s| s.norm_sqr())
        .fold((0.0f64, 0.0f64), |(p, s), v| (p.max(v), s + v));
    if sum <= 0.0 {
        return Err(Error::UndefinedPower);
    }
    let mean = sum / samples.len() as f64;
    Ok(lin_to_db(peak / mean).max(0.0))
}

/// Outcome of [`optimize_phases`].
#[derive(Debug, Clone)]
pub struct PhaseOptimization {
    pub spec: MultitoneSpec,
    /// PAPR of the returned phases on the oversampled signal.
    pub papr_db: f64,
    /// PAPR of the input phases on the oversampled signal.
    pub initial_papr_db: f64,
    pub iterations: usize,
    /// Best PAPR found so far, after every iteration of every start.
    pub trace: Vec<f64>,
}

/// Iterations over which the best PAPR must improve by at least
/// `STALL_DB` for the clip-and-filter loop to continue.
const STALL_WINDOW: usize = 25;
const STALL_DB: f64 = 1e-3;

/// Clip level as a fraction of the way from RMS to peak envelope.
const CLIP_FRACTION: f64 = 0.5;

struct ClipFilter<'a> {
    bins: &'a [i64],
    len: usize,
    fft: FftPair,
}

impl ClipFilter<'_> {
    fn signal(&self, phases: &[f64]) -> Vec<Complex64> {
        synthesize_bins(self.bins, &unit_phasors(phases), self.len, &self.fft)
    }

    /// Runs clip-and-filter from `start`; returns (best phases, best PAPR,
    /// iterations used). Appends best-so-far values to `trace`.
    fn run(&self, start: Vec<f64>, target_db: f64, max_iters: usize, trace: &mut Vec<f64>) -> (Vec<f64>, f64, usize) {
        let mut phases = start;
        let mut x = self.signal(&phases);
        let mut best = papr_db(&x).unwrap_or(0.0);
        let mut best_phases = phases.clone();
        let mut history = vec![best];
        let mut used = 0;
        while used < max_iters && best > target_db {
            used += 1;
            let (peak, sum) = x
                .iter()
                .map(|s| s.norm())
                .fold((0.0f64, 0.0f64), |(p, s), m| (p.max(m), s + m * m));
            let rms = (sum / x.len() as f64).sqrt();
            let level = rms + CLIP_FRACTION * (peak - rms);
            for s in x.iter_mut() {
                let m = s.norm();
                if m > level {
                    *s *= level / m;
                }
            }
            self.fft.forward(&mut x);
            for (p, b) in phases.iter_mut().zip(self.bins) {
                *p = x[b.rem_euclid(self.len as i64) as usize].arg();
            }
            x = self.signal(&phases);
            let p = papr_db(&x).unwrap_or(0.0);
            if p < best {
                best = p;
                best_phases.clone_from(&phases);
            }
            trace.push(best);
            history.push(best);
            if history.len() > STALL_WINDOW && history[history.len() - 1 - STALL_WINDOW] - best < STALL_DB {
                break;
            }
        }
        (best_phases, best, used)
    }
}

/// Lowers the PAPR of the waveform by iterative clipping and filtering.
///
/// The envelope of the oversampled signal is clipped, the result projected
/// back onto the tone grid with unit magnitudes, and the new phases kept.
/// Three starting points are tried (the input phases, quadratic phases, and
/// uniformly random phases drawn from `seed`), each for at most `max_iters`
/// iterations; the best result is returned. The output PAPR never exceeds
/// that of the input.
pub fn optimize_phases(spec: &MultitoneSpec, target_papr_db: f64, max_iters: usize, seed: u64) -> Result<PhaseOptimization> {
    spec.validate()?;
    if max_iters == 0 {
        return Err(Error::InvalidSpec("max_iters must be >= 1".into()));
    }
    let bins = spec.tone_bins();
    let len = spec.period_len() * PAPR_OVERSAMPLING;
    let engine = ClipFilter {
        bins: &bins,
        len,
        fft: FftPair::new(len),
    };
    let initial = papr_db(&engine.signal(&spec.phases_rad))?;
    let mut trace = Vec::new();
    let mut iterations = 0;

    let (mut best_phases, mut best, used) = engine.run(spec.phases_rad.clone(), target_papr_db, max_iters, &mut trace);
    iterations += used;

    let n = spec.num_tones as f64;
    let quadratic: Vec<f64> = (0..spec.num_tones).map(|k| -PI * (k * k) as f64 / n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random: Vec<f64> = (0..spec.num_tones).map(|_| rng.random::<f64>() * 2.0 * PI).collect();

    for start in [quadratic, random] {
        if best <= target_papr_db {
            break;
        }
        let (phases, papr, used) = engine.run(start, target_papr_db, max_iters, &mut trace);
        iterations += used;
        if papr < best {
            best = papr;
            best_phases = phases;
        }
    }
    // keep the trace monotone across starts
    let mut running = initial;
    for v in trace.iter_mut() {
        running = running.min(*v);
        *v = running;
    }

    let out = spec.clone().with_phases(best_phases);
    Ok(PhaseOptimization {
        spec: out,
        papr_db: best,
        initial_papr_db: initial,
        iterations,
        trace,
    })
}

/// A band-limited periodic signal defined by tone values on a DFT grid.
#[derive(Debug, Clone)]
pub struct BandLimitedSignal {
    pub tone_bins: Vec<i64>,
    pub tone_values: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub tone_spacing_hz: f64,
    pub samples: Vec<Complex64>,
    pub papr_db: f64,
}

impl BandLimitedSignal {
    pub fn oversampled_papr_db(&self, factor: usize) -> f64 {
        let len = self.samples.len() * factor.max(1);
        let x = synthesize_bins(&self.tone_bins, &self.tone_values, len, &FftPair::new(len));
        papr_db(&x).unwrap_or(0.0)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zadoff-Chu sequence of `length` with root `root`.
pub fn zadoff_chu(length: usize, root: usize) -> Result<Vec<Complex64>> {
    if length == 0 {
        return Err(Error::InvalidSpec("Zadoff-Chu length must be >= 1".into()));
    }
    if root == 0 || root >= length.max(2) || gcd(root as u64, length as u64) != 1 {
        return Err(Error::InvalidSpec(format!(
            "Zadoff-Chu root {root} must be in 1..{length} and coprime with the length"
        )));
    }
    let l = length as f64;
    let u = root as f64;
    let odd = length % 2 == 1;
    Ok((0..length)
        .map(|n| {
            let n = n as f64;
            let arg = if odd { n * (n + 1.0) } else { n * n };
            Complex64::from_polar(1.0, -PI * u * arg / l)
        })
        .collect())
}

/// Zadoff-Chu reference signal mapped one symbol per tone onto a grid of
/// spacing `bandwidth_hz / (length - 1)` centred at DC, then sampled at
/// `sample_rate_hz`. With `sample_rate_hz == length · spacing` the original
/// constant-envelope sequence is recovered.
pub fn zadoff_chu_baseline(length: usize, root: usize, sample_rate_hz: f64, bandwidth_hz: f64) -> Result<BandLimitedSignal> {
    let z = zadoff_chu(length, root)?;
    if !(bandwidth_hz > 0.0 && sample_rate_hz > 0.0) {
        return Err(Error::InvalidSpec("bandwidth and sample rate must be positive".into()));
    }
    let spacing = if length > 1 {
        bandwidth_hz / (length - 1) as f64
    } else {
        bandwidth_hz
    };
    let ratio = sample_rate_hz / spacing;
    let period = ratio.round() as usize;
    if (ratio - period as f64).abs() > GRID_TOL * ratio || period < length {
        return Err(Error::InvalidSpec(format!(
            "sample rate {sample_rate_hz} Hz must be an integer multiple (>= {length}) of the tone spacing {spacing} Hz"
        )));
    }
    let mut spectrum = z.clone();
    FftPair::new(length).forward(&mut spectrum);
    let half = (length / 2) as i64;
    let tone_bins: Vec<i64> = (0..length as i64)
        .map(|k| if k <= half { k } else { k - length as i64 })
        .collect();
    let tone_values: Vec<Complex64> = spectrum.iter().map(|v| v / length as f64).collect();
    let samples = synthesize_bins(&tone_bins, &tone_values, period, &FftPair::new(period));
    let papr_db = papr_db(&samples)?;
    Ok(BandLimitedSignal {
        tone_bins,
        tone_values,
        sample_rate_hz,
        tone_spacing_hz: spacing,
        samples,
        papr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_spec(num_tones: usize) -> MultitoneSpec {
        MultitoneSpec::new(num_tones, 1e6, 2e6, 64e6)
    }

    #[test]
    fn single_tone_is_constant_envelope() {
        let spec = small_spec(1).with_phases(vec![1.3]);
        let w = synthesize(&spec).unwrap();
        assert_abs_diff_eq!(w.papr_db, 0.0, epsilon = 1e-12);
        assert!(w.samples.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_phase_papr_is_coherent_peak() {
        let w = synthesize(&MultitoneSpec::default_sounder()).unwrap();
        assert_abs_diff_eq!(w.papr_db, 10.0 * 801f64.log10(), epsilon = 0.01);
        assert_eq!(w.samples.len(), 2500);
    }

    #[test]
    fn papr_of_impulse() {
        let x = [1.0, 0.0, 0.0, 0.0].map(|r| Complex64::new(r, 0.0));
        assert_abs_diff_eq!(papr_db(&x).unwrap(), 10.0 * 4f64.log10(), epsilon = 1e-12);
        let c = vec![Complex64::new(0.3, -0.2); 16];
        assert_abs_diff_eq!(papr_db(&c).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn papr_rejects_zero_power() {
        assert!(matches!(papr_db(&[Complex64::default(); 4]), Err(Error::UndefinedPower)));
        assert!(matches!(papr_db(&[]), Err(Error::UndefinedPower)));
    }

    #[test]
    fn nyquist_violation_is_rejected() {
        let spec = MultitoneSpec::new(801, 500e3, 300e6, 1.25e9);
        assert!(matches!(synthesize(&spec), Err(Error::InvalidSpec(_))));
        let even = MultitoneSpec::new(800, 500e3, 50e6, 1.25e9);
        assert!(matches!(even.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn spectrum_is_flat_and_confined_to_tones() {
        let spec = small_spec(7).with_phases(vec![0.1, 2.0, -1.0, 0.4, 3.0, 5.5, 1.1]);
        let w = synthesize(&spec).unwrap();
        let mut buf = w.samples.clone();
        FftPair::new(buf.len()).forward(&mut buf);
        let bins: Vec<usize> = spec.tone_bins().iter().map(|&b| b as usize).collect();
        let reference = buf[bins[0]].norm();
        for (k, v) in buf.iter().enumerate() {
            if bins.contains(&k) {
                assert!((v.norm() - reference).abs() <= 1e-9 * reference);
            } else {
                assert!(v.norm() <= 1e-9 * reference);
            }
        }
    }

    #[test]
    fn waveform_is_periodic() {
        let spec = small_spec(5).with_phases(vec![0.3, 0.7, 1.9, 2.2, 4.0]);
        let w = synthesize(&spec).unwrap();
        let doubled = w.oversampled(1);
        for (a, b) in w.samples.iter().zip(&doubled) {
            assert!((a - b).norm() < 1e-12);
        }
        // evaluating the defining sum one period later gives the same sample
        let fs = spec.sample_rate_hz;
        let p = spec.period_len();
        for k in [0usize, 3, 17] {
            let eval = |t: f64| -> Complex64 {
                spec.phases_rad
                    .iter()
                    .enumerate()
                    .map(|(n, th)| Complex64::from_polar(1.0, 2.0 * PI * spec.grid().frequency_hz(n) * t + th))
                    .sum()
            };
            let a = eval(k as f64 / fs);
            let b = eval((k + p) as f64 / fs);
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn optimizer_single_tone_is_identity() {
        let spec = small_spec(1).with_phases(vec![0.5]);
        let out = optimize_phases(&spec, 0.4, 10, 7).unwrap();
        assert_eq!(out.spec, spec);
        assert_abs_diff_eq!(out.papr_db, 0.0, epsilon = 1e-12);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn optimizer_is_deterministic_and_monotone() {
        let spec = small_spec(15);
        let a = optimize_phases(&spec, 0.0, 40, 3).unwrap();
        let b = optimize_phases(&spec, 0.0, 40, 3).unwrap();
        assert_eq!(a.spec, b.spec);
        assert!(a.papr_db <= a.initial_papr_db);
        assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
        let check = synthesize(&a.spec).unwrap().oversampled_papr_db(PAPR_OVERSAMPLING);
        assert_abs_diff_eq!(check, a.papr_db, epsilon = 1e-9);
    }

    #[test]
    fn optimizer_rejects_zero_iterations() {
        assert!(optimize_phases(&small_spec(3), 0.0, 0, 1).is_err());
    }

    #[test]
    fn zadoff_chu_critical_sampling_is_constant_envelope() {
        let bw = 400e6;
        let spacing = bw / 800.0;
        let zc = zadoff_chu_baseline(801, 1, 801.0 * spacing, bw).unwrap();
        assert_abs_diff_eq!(zc.papr_db, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zadoff_chu_conjugate_roots_match() {
        let a = zadoff_chu_baseline(801, 1, 1.25e9, 400e6).unwrap();
        let b = zadoff_chu_baseline(801, 800, 1.25e9, 400e6).unwrap();
        assert_abs_diff_eq!(a.papr_db, b.papr_db, epsilon = 1e-9);
        assert_abs_diff_eq!(a.oversampled_papr_db(4), b.oversampled_papr_db(4), epsilon = 1e-9);
    }

    #[test]
    fn zadoff_chu_rejects_bad_root() {
        assert!(zadoff_chu(10, 4).is_err());
        assert!(zadoff_chu(801, 0).is_err());
        assert!(zadoff_chu(801, 801).is_err());
        assert!(zadoff_chu_baseline(801, 3, 1.25e9, 400e6).is_err()); // 801 = 3·267
    }

    #[test]
    fn phases_reduced_modulo_two_pi() {
        let spec = small_spec(3).with_phases(vec![7.0, -1.0, 2.0 * PI]);
        assert!(spec.phases_rad.iter().all(|p| (0.0..2.0 * PI).contains(p)));
        assert_abs_diff_eq!(spec.phases_rad[0], 7.0 - 2.0 * PI, epsilon = 1e-12);
    }
}
