//! Phase-only beam codebooks for a planar array of patch subarrays.
//!
//! Elements sit on an `num_h × num_v` grid in the x–z plane with boresight
//! along +y. Azimuth is measured in the horizontal plane (positive towards
//! +x), elevation upwards from the horizon.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{db_to_lin, lin_to_db};
use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

pub const AZIMUTH_STEERING_LIMIT_DEG: f64 = 45.0;
pub const ELEVATION_STEERING_LIMIT_DEG: f64 = 30.0;

/// Relative floor of the element power pattern (back hemisphere and grazing).
pub const ELEMENT_PATTERN_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_h: usize,
    pub num_v: usize,
    pub spacing_h_m: f64,
    pub spacing_v_m: f64,
    pub carrier_hz: f64,
    pub subarray_element_gain_dbi: f64,
}

impl Default for ArrayGeometry {
    /// 8×2 subarrays, 5.6 mm × 12.5 mm spacing, 27.85 GHz, 7.5 dBi subarrays.
    fn default() -> Self {
        Self {
            num_h: 8,
            num_v: 2,
            spacing_h_m: 5.6e-3,
            spacing_v_m: 12.5e-3,
            carrier_hz: 27.85e9,
            subarray_element_gain_dbi: 7.5,
        }
    }
}

impl ArrayGeometry {
    pub fn num_elements(&self) -> usize {
        self.num_h * self.num_v
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_h == 0 || self.num_v == 0 {
            return Err(Error::InvalidSpec("array needs at least one element".into()));
        }
        if !(self.spacing_h_m > 0.0 && self.spacing_v_m > 0.0 && self.carrier_hz > 0.0) {
            return Err(Error::InvalidSpec("spacings and carrier must be positive".into()));
        }
        Ok(())
    }

    /// Element positions (x, z) in metres, centred on the array.
    pub fn element_positions(&self) -> Vec<(f64, f64)> {
        let ch = (self.num_h as f64 - 1.0) / 2.0;
        let cv = (self.num_v as f64 - 1.0) / 2.0;
        (0..self.num_v)
            .flat_map(|v| {
                (0..self.num_h).map(move |h| {
                    ((h as f64 - ch) * self.spacing_h_m, (v as f64 - cv) * self.spacing_v_m)
                })
            })
            .collect()
    }

    /// Plane-wave phase (radians) at every element for a direction.
    fn element_phases(&self, azimuth_deg: f64, elevation_deg: f64) -> Vec<f64> {
        let k = 2.0 * PI / self.wavelength_m();
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let ux = az.sin() * el.cos();
        let uz = el.sin();
        self.element_positions()
            .into_iter()
            .map(|(x, z)| k * (x * ux + z * uz))
            .collect()
    }

    /// Exponent `q` of the `cos^q` subarray pattern whose directivity equals
    /// the subarray gain. Solved by bisection on the closed-form integral.
    pub fn element_pattern_exponent(&self) -> f64 {
        let target = db_to_lin(self.subarray_element_gain_dbi);
        let f = ELEMENT_PATTERN_FLOOR;
        let directivity = |q: f64| {
            // ∫_0^1 max(u^q, f) du over the front hemisphere plus f for the back
            let u0 = f.powf(1.0 / q);
            let front = f * u0 + (1.0 - u0.powf(q + 1.0)) / (q + 1.0);
            2.0 / (front + f)
        };
        let (mut lo, mut hi) = (1e-3, 100.0);
        if directivity(hi) <= target {
            return hi;
        }
        if directivity(lo) >= target {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if directivity(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Subarray power gain (linear) towards a direction.
    pub fn element_gain(&self, q: f64, azimuth_deg: f64, elevation_deg: f64) -> f64 {
        let c = azimuth_deg.to_radians().cos() * elevation_deg.to_radians().cos();
        let rel = if c > 0.0 { c.powf(q).max(ELEMENT_PATTERN_FLOOR) } else { ELEMENT_PATTERN_FLOOR };
        db_to_lin(self.subarray_element_gain_dbi) * rel
    }
}

/// Phase-only weights steering towards one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Per-element phase as an integer number of shifter steps.
    pub phase_steps: Vec<u32>,
    pub weights: Vec<Complex64>,
    pub boresight_gain_dbi: f64,
}

fn shifter_levels(phase_step_deg: f64) -> Result<u32> {
    if !(phase_step_deg > 0.0) {
        return Err(Error::InvalidSpec(format!("phase step must be positive, got {phase_step_deg}")));
    }
    let levels = 360.0 / phase_step_deg;
    if (levels - levels.round()).abs() > 1e-9 * levels {
        return Err(Error::InvalidSpec(format!("phase step {phase_step_deg}° does not divide 360°")));
    }
    Ok(levels.round() as u32)
}

fn check_steering(azimuth_deg: f64, elevation_deg: f64) -> Result<()> {
    let tol = 1e-9;
    if !(azimuth_deg.abs() <= AZIMUTH_STEERING_LIMIT_DEG + tol) {
        return Err(Error::SteeringRange {
            angle_deg: azimuth_deg,
            min_deg: -AZIMUTH_STEERING_LIMIT_DEG,
            max_deg: AZIMUTH_STEERING_LIMIT_DEG,
        });
    }
    if !(elevation_deg.abs() <= ELEVATION_STEERING_LIMIT_DEG + tol) {
        return Err(Error::SteeringRange {
            angle_deg: elevation_deg,
            min_deg: -ELEVATION_STEERING_LIMIT_DEG,
            max_deg: ELEVATION_STEERING_LIMIT_DEG,
        });
    }
    Ok(())
}

/// Unquantized conjugate-phase weights for a steering direction.
pub fn ideal_weights(geometry: &ArrayGeometry, azimuth_deg: f64, elevation_deg: f64) -> Vec<Complex64> {
    geometry
        .element_phases(azimuth_deg, elevation_deg)
        .into_iter()
        .map(|p| Complex64::from_polar(1.0, -p))
        .collect()
}

impl Beam {
    /// Beam with weights rounded to the nearest phase-shifter step.
    pub fn steer(geometry: &ArrayGeometry, azimuth_deg: f64, elevation_deg: f64, phase_step_deg: f64) -> Result<Self> {
        check_steering(azimuth_deg, elevation_deg)?;
        let levels = shifter_levels(phase_step_deg)?;
        let phase_steps: Vec<u32> = geometry
            .element_phases(azimuth_deg, elevation_deg)
            .into_iter()
            .map(|p| {
                let steps = (-p.to_degrees() / phase_step_deg).round() as i64;
                steps.rem_euclid(levels as i64) as u32
            })
            .collect();
        Ok(Self::from_phase_steps(geometry, azimuth_deg, elevation_deg, phase_steps, phase_step_deg))
    }

    /// Rebuilds a beam from stored shifter settings.
    pub fn from_phase_steps(
        geometry: &ArrayGeometry,
        azimuth_deg: f64,
        elevation_deg: f64,
        phase_steps: Vec<u32>,
        phase_step_deg: f64,
    ) -> Self {
        let weights = phase_steps
            .iter()
            .map(|&s| Complex64::from_polar(1.0, (s as f64 * phase_step_deg).to_radians()))
            .collect();
        let mut beam = Self {
            azimuth_deg,
            elevation_deg,
            phase_steps,
            weights,
            boresight_gain_dbi: 0.0,
        };
        beam.boresight_gain_dbi = gain_dbi(&beam.weights, geometry, azimuth_deg, elevation_deg);
        beam
    }

    pub fn field(&self, geometry: &ArrayGeometry, azimuth_deg: f64, elevation_deg: f64) -> Complex64 {
        field(&self.weights, geometry, azimuth_deg, elevation_deg)
    }

    pub fn gain_dbi(&self, geometry: &ArrayGeometry, azimuth_deg: f64, elevation_deg: f64) -> f64 {
        gain_dbi(&self.weights, geometry, azimuth_deg, elevation_deg)
    }

    /// Width of the main lobe between its −3 dB points on the azimuth cut at
    /// the beam's elevation, found on a 0.01° grid.
    pub fn azimuth_beamwidth_3db(&self, geometry: &ArrayGeometry) -> f64 {
        let peak_az = self.main_lobe_azimuth(geometry);
        let peak = self.gain_dbi(geometry, peak_az, self.elevation_deg);
        let step = 0.01;
        let edge = |dir: f64| {
            let mut az = peak_az;
            while (az - peak_az).abs() < 90.0 {
                az += dir * step;
                if self.gain_dbi(geometry, az, self.elevation_deg) < peak - 3.0 {
                    return az - dir * step / 2.0;
                }
            }
            az
        };
        edge(1.0) - edge(-1.0)
    }

    /// Azimuth of the pattern maximum near the steering direction.
    pub fn main_lobe_azimuth(&self, geometry: &ArrayGeometry) -> f64 {
        let mut best = (self.azimuth_deg, f64::NEG_INFINITY);
        let mut az = self.azimuth_deg - 10.0;
        while az <= self.azimuth_deg + 10.0 {
            let g = self.gain_dbi(geometry, az, self.elevation_deg);
            if g > best.1 {
                best = (az, g);
            }
            az += 0.01;
        }
        best.0
    }
}

/// Complex far-field response of a weighted array: subarray pattern times
/// array factor, normalized so that `|field|²` is the gain in linear units.
pub fn field(weights: &[Complex64], geometry: &ArrayGeometry, azimuth_deg: f64, elevation_deg: f64) -> Complex64 {
    let q = geometry.element_pattern_exponent();
    field_with_exponent(weights, geometry, q, azimuth_deg, elevation_deg)
}

/// [`field`] with a precomputed subarray pattern exponent.
pub fn field_with_exponent(
    weights: &[Complex64],
    geometry: &ArrayGeometry,
    q: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
) -> Complex64 {
    let af: Complex64 = weights
        .iter()
        .zip(geometry.element_phases(azimuth_deg, elevation_deg))
        .map(|(w, p)| w * Complex64::from_polar(1.0, p))
        .sum();
    let element = geometry.element_gain(q, azimuth_deg, elevation_deg).sqrt();
    af * (element / (weights.len() as f64).sqrt())
}

pub fn gain_dbi(weights: &[Complex64], geometry: &ArrayGeometry, azimuth_deg: f64, elevation_deg: f64) -> f64 {
    lin_to_db(field(weights, geometry, azimuth_deg, elevation_deg).norm_sqr())
}

/// Sampled gain patterns (dBi) of every beam on an azimuth × elevation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTable {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
    /// Indexed `[beam][elevation][azimuth]`, flattened.
    pub gains_dbi: Vec<f64>,
}

impl PatternTable {
    pub fn gain(&self, beam: usize, el_idx: usize, az_idx: usize) -> f64 {
        let (ne, na) = (self.elevations_deg.len(), self.azimuths_deg.len());
        self.gains_dbi[(beam * ne + el_idx) * na + az_idx]
    }

    pub fn row(&self, beam: usize, el_idx: usize) -> &[f64] {
        let (ne, na) = (self.elevations_deg.len(), self.azimuths_deg.len());
        let start = (beam * ne + el_idx) * na;
        &self.gains_dbi[start..start + na]
    }

    pub fn nearest_elevation(&self, elevation_deg: f64) -> usize {
        nearest_index(&self.elevations_deg, elevation_deg)
    }
}

fn nearest_index(grid: &[f64], value: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - value).abs().total_cmp(&(b.1 - value).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Sampling grid for codebook pattern tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternGrid {
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
}

impl Default for PatternGrid {
    /// 1° steps over azimuth [−90°, 90°] and elevation [−30°, 30°].
    fn default() -> Self {
        Self {
            azimuths_deg: (-90..=90).map(f64::from).collect(),
            elevations_deg: (-30..=30).map(f64::from).collect(),
        }
    }
}

/// An ordered set of beams sharing one array and phase-shifter resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    pub geometry: ArrayGeometry,
    pub phase_step_deg: f64,
    pub beams: Vec<Beam>,
    pub pattern: PatternTable,
}

/// Builds one beam per (azimuth, elevation) pair with quantized weights and
/// samples every beam's pattern on the default 1° grid.
pub fn build_codebook(
    geometry: &ArrayGeometry,
    azimuths_deg: &[f64],
    elevations_deg: &[f64],
    phase_step_deg: f64,
) -> Result<BeamCodebook> {
    build_codebook_on_grid(geometry, azimuths_deg, elevations_deg, phase_step_deg, PatternGrid::default())
}

pub fn build_codebook_on_grid(
    geometry: &ArrayGeometry,
    azimuths_deg: &[f64],
    elevations_deg: &[f64],
    phase_step_deg: f64,
    grid: PatternGrid,
) -> Result<BeamCodebook> {
    geometry.validate()?;
    if azimuths_deg.is_empty() || elevations_deg.is_empty() {
        return Err(Error::InvalidSpec("codebook needs at least one azimuth and elevation".into()));
    }
    let mut directions: Vec<(f64, f64)> = elevations_deg
        .iter()
        .flat_map(|&el| azimuths_deg.iter().map(move |&az| (el, az)))
        .collect();
    directions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if directions.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidSpec("duplicate beam direction".into()));
    }
    let beams = directions
        .iter()
        .map(|&(el, az)| Beam::steer(geometry, az, el, phase_step_deg))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamCodebook::from_beams(geometry.clone(), phase_step_deg, beams, grid))
}

impl BeamCodebook {
    pub fn from_beams(geometry: ArrayGeometry, phase_step_deg: f64, beams: Vec<Beam>, grid: PatternGrid) -> Self {
        let q = geometry.element_pattern_exponent();
        let gains_dbi: Vec<f64> = beams
            .par_iter()
            .flat_map_iter(|beam| {
                let geometry = &geometry;
                let grid = &grid;
                grid.elevations_deg.iter().flat_map(move |&el| {
                    grid.azimuths_deg
                        .iter()
                        .map(move |&az| lin_to_db(field_with_exponent(&beam.weights, geometry, q, az, el).norm_sqr()))
                })
            })
            .collect();
        let pattern = PatternTable {
            azimuths_deg: grid.azimuths_deg,
            elevations_deg: grid.elevations_deg,
            gains_dbi,
        };
        Self {
            geometry,
            phase_step_deg,
            beams,
            pattern,
        }
    }

    /// 19 azimuth beams from −45° to 45° in 5° steps at 0° elevation with
    /// 11.25° phase shifters.
    pub fn azimuth_sweep(geometry: &ArrayGeometry) -> Result<Self> {
        let az: Vec<f64> = (-9..=9).map(|k| 5.0 * k as f64).collect();
        build_codebook(geometry, &az, &[0.0], 11.25)
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// Complex field of every beam towards one direction.
    pub fn fields(&self, azimuth_deg: f64, elevation_deg: f64) -> Vec<Complex64> {
        let q = self.geometry.element_pattern_exponent();
        self.beams
            .iter()
            .map(|b| field_with_exponent(&b.weights, &self.geometry, q, azimuth_deg, elevation_deg))
            .collect()
    }

    /// Index of the beam whose steering direction is closest to a direction.
    pub fn nearest_beam(&self, azimuth_deg: f64, elevation_deg: f64) -> usize {
        self.beams
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1.azimuth_deg - azimuth_deg).hypot(a.1.elevation_deg - elevation_deg);
                let db = (b.1.azimuth_deg - azimuth_deg).hypot(b.1.elevation_deg - elevation_deg);
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Local maxima of the per-beam gain sequence towards one direction,
    /// over beams sharing `elevation_deg`. Returns beam indices.
    pub fn beam_sequence_peaks(&self, azimuth_deg: f64, elevation_deg: f64) -> Vec<usize> {
        let idx: Vec<usize> = (0..self.beams.len())
            .filter(|&i| (self.beams[i].elevation_deg - elevation_deg).abs() < 1e-9)
            .collect();
        let q = self.geometry.element_pattern_exponent();
        let g: Vec<f64> = idx
            .iter()
            .map(|&i| field_with_exponent(&self.beams[i].weights, &self.geometry, q, azimuth_deg, elevation_deg).norm_sqr())
            .collect();
        (0..g.len())
            .filter(|&k| (k == 0 || g[k] > g[k - 1]) && (k + 1 == g.len() || g[k] >= g[k + 1]))
            .map(|k| idx[k])
            .collect()
    }
}

/// Azimuths on a grid at which a single path excites a secondary local
/// maximum across the azimuth beams within `margin_db` of the strongest beam.
pub fn unimodality_violations(codebook: &BeamCodebook, azimuths_deg: &[f64], elevation_deg: f64, margin_db: f64) -> Vec<f64> {
    azimuths_deg
        .iter()
        .copied()
        .filter(|&az| {
            let gains: Vec<f64> = codebook
                .beam_sequence_peaks(az, elevation_deg)
                .into_iter()
                .map(|i| codebook.beams[i].gain_dbi(&codebook.geometry, az, elevation_deg))
                .collect();
            let best = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            gains.iter().filter(|&&g| g > best - margin_db).count() > 1
        })
        .collect()
}

/// A single propagation path seen from both ends, for beam-pair maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDirections {
    pub dod_azimuth_deg: f64,
    pub dod_elevation_deg: f64,
    pub doa_azimuth_deg: f64,
    pub doa_elevation_deg: f64,
    pub power_dbm: f64,
}

/// Received power (dBm) over every (TX beam, RX beam) pair for one path.
pub fn beam_pair_power_map(tx: &BeamCodebook, rx: &BeamCodebook, path: &PathDirections) -> Array2<f64> {
    let gtx: Vec<f64> = tx
        .fields(path.dod_azimuth_deg, path.dod_elevation_deg)
        .iter()
        .map(|f| lin_to_db(f.norm_sqr()))
        .collect();
    let grx: Vec<f64> = rx
        .fields(path.doa_azimuth_deg, path.doa_elevation_deg)
        .iter()
        .map(|f| lin_to_db(f.norm_sqr()))
        .collect();
    Array2::from_shape_fn((gtx.len(), grx.len()), |(i, j)| path.power_dbm + gtx[i] + grx[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sweep() -> BeamCodebook {
        BeamCodebook::azimuth_sweep(&ArrayGeometry::default()).unwrap()
    }

    #[test]
    fn broadside_weights_are_uniform() {
        let g = ArrayGeometry::default();
        let b = Beam::steer(&g, 0.0, 0.0, 11.25).unwrap();
        assert!(b.phase_steps.iter().all(|&s| s == b.phase_steps[0]));
    }

    #[test]
    fn weights_are_quantized_unit_phasors() {
        let g = ArrayGeometry::default();
        let b = Beam::steer(&g, 27.0, -12.0, 11.25).unwrap();
        for w in &b.weights {
            assert_abs_diff_eq!(w.norm(), 1.0, epsilon = 1e-12);
            let steps = w.arg().to_degrees().rem_euclid(360.0) / 11.25;
            assert!((steps - steps.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn boresight_gain_is_array_plus_subarray() {
        let g = ArrayGeometry::default();
        let b = Beam::steer(&g, 0.0, 0.0, 11.25).unwrap();
        assert_abs_diff_eq!(b.boresight_gain_dbi, 10.0 * 16f64.log10() + 7.5, epsilon = 1e-9);
    }

    #[test]
    fn element_exponent_reproduces_subarray_directivity() {
        let g = ArrayGeometry::default();
        let q = g.element_pattern_exponent();
        // numerical check of directivity by midpoint quadrature over the sphere
        let n = 4000;
        let mut integral = 0.0;
        for i in 0..n {
            let theta = (i as f64 + 0.5) * PI / n as f64;
            let c = theta.cos();
            let rel = if c > 0.0 { c.powf(q).max(ELEMENT_PATTERN_FLOOR) } else { ELEMENT_PATTERN_FLOOR };
            integral += rel * theta.sin() * PI / n as f64;
        }
        let directivity = 2.0 / integral;
        assert_abs_diff_eq!(lin_to_db(directivity), 7.5, epsilon = 1e-3);
    }

    #[test]
    fn out_of_range_steering_is_rejected() {
        let g = ArrayGeometry::default();
        assert!(matches!(Beam::steer(&g, 50.0, 0.0, 11.25), Err(Error::SteeringRange { .. })));
        assert!(matches!(Beam::steer(&g, 0.0, -31.0, 11.25), Err(Error::SteeringRange { .. })));
        assert!(build_codebook(&g, &[0.0, 60.0], &[0.0], 11.25).is_err());
        assert!(Beam::steer(&g, 0.0, 0.0, 7.0).is_err());
    }

    #[test]
    fn broadside_pattern_is_symmetric() {
        let g = ArrayGeometry::default();
        let b = Beam::steer(&g, 0.0, 0.0, 11.25).unwrap();
        for x in [3.0, 17.5, 44.0, 80.0] {
            assert_abs_diff_eq!(b.gain_dbi(&g, x, 0.0), b.gain_dbi(&g, -x, 0.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn broadside_ninety_degrees_off_axis_is_suppressed() {
        let g = ArrayGeometry::default();
        let b = Beam::steer(&g, 0.0, 0.0, 11.25).unwrap();
        assert!(b.gain_dbi(&g, 90.0, 0.0) <= b.boresight_gain_dbi - 10.0);
    }

    #[test]
    fn steering_direction_is_near_table_maximum() {
        let cb = sweep();
        let el = cb.pattern.nearest_elevation(0.0);
        for (i, beam) in cb.beams.iter().enumerate() {
            let row_max = cb.pattern.row(i, el).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(beam.boresight_gain_dbi >= row_max - 0.5, "beam {i}");
            let argmax = cb.pattern.row(i, el).iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!((cb.pattern.azimuths_deg[argmax] - beam.azimuth_deg).abs() <= 3.0, "beam {i}");
        }
    }

    #[test]
    fn codebook_sorted_and_unique() {
        let cb = sweep();
        assert_eq!(cb.len(), 19);
        assert!(cb.beams.windows(2).all(|w| w[0].azimuth_deg < w[1].azimuth_deg));
        assert!(build_codebook(&ArrayGeometry::default(), &[5.0, 5.0], &[0.0], 11.25).is_err());
    }

    #[test]
    fn quantization_costs_under_one_db_at_main_lobe() {
        let g = ArrayGeometry::default();
        for beam in &sweep().beams {
            let ideal = gain_dbi(&ideal_weights(&g, beam.azimuth_deg, 0.0), &g, beam.azimuth_deg, 0.0);
            assert!((ideal - beam.boresight_gain_dbi).abs() < 1.0);
        }
    }

    #[test]
    fn power_map_tracks_path_power_and_direction() {
        let cb = sweep();
        let path = PathDirections {
            dod_azimuth_deg: 15.0,
            dod_elevation_deg: 0.0,
            doa_azimuth_deg: 20.0,
            doa_elevation_deg: 0.0,
            power_dbm: -60.0,
        };
        let m = beam_pair_power_map(&cb, &cb, &path);
        let argmax = m.indexed_iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(cb.beams[argmax.0].azimuth_deg, 15.0);
        assert_eq!(cb.beams[argmax.1].azimuth_deg, 20.0);

        let louder = beam_pair_power_map(&cb, &cb, &PathDirections { power_dbm: -50.0, ..path });
        for (a, b) in m.iter().zip(louder.iter()) {
            assert_abs_diff_eq!(b - a, 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn azimuth_beamwidths_follow_scan_broadening() {
        let g = ArrayGeometry::default();
        for beam in &sweep().beams {
            let bw = beam.azimuth_beamwidth_3db(&g);
            let nominal = if beam.azimuth_deg.abs() <= 20.0 { 12.0 } else { 12.0 / beam.azimuth_deg.to_radians().cos() };
            assert!((bw - nominal).abs() <= 2.0, "beam {} width {bw}", beam.azimuth_deg);
        }
    }

    #[test]
    fn side_lobes_are_ten_db_down_in_steering_range() {
        let g = ArrayGeometry::default();
        for beam in &sweep().beams {
            let gains: Vec<f64> = (-900..=900).map(|k| beam.gain_dbi(&g, k as f64 * 0.05, 0.0)).collect();
            let main = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for k in 1..gains.len() - 1 {
                let is_peak = gains[k] > gains[k - 1] && gains[k] >= gains[k + 1];
                if is_peak && gains[k] < main - 1.0 {
                    assert!(main - gains[k] >= 10.0, "beam {} lobe {}", beam.azimuth_deg, gains[k]);
                }
            }
        }
    }

    #[test]
    fn los_at_twenty_fifteen_peaks_at_matching_pair() {
        let cb = sweep();
        let path = PathDirections {
            dod_azimuth_deg: 20.0,
            dod_elevation_deg: 0.0,
            doa_azimuth_deg: 15.0,
            doa_elevation_deg: 0.0,
            power_dbm: -60.0,
        };
        let m = beam_pair_power_map(&cb, &cb, &path);
        let (i, j) = m.indexed_iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!((cb.beams[i].azimuth_deg, cb.beams[j].azimuth_deg), (20.0, 15.0));
    }

    #[test]
    fn beam_sequence_is_unimodal_inside_sector() {
        let cb = sweep();
        let az: Vec<f64> = (-450..=450).map(|k| k as f64 * 0.1).collect();
        assert!(unimodality_violations(&cb, &az, 0.0, 10.0).is_empty());
        // far beams pick the path up through their side lobes
        assert!(!unimodality_violations(&cb, &az, 0.0, 40.0).is_empty());
    }

    #[test]
    fn isotropic_codebook_gives_constant_map() {
        // a single-element array has the same gain in every "beam"
        let g = ArrayGeometry {
            num_h: 1,
            num_v: 1,
            ..ArrayGeometry::default()
        };
        let cb = build_codebook(&g, &[-10.0, 0.0, 10.0], &[0.0], 11.25).unwrap();
        let path = PathDirections {
            dod_azimuth_deg: 5.0,
            dod_elevation_deg: 0.0,
            doa_azimuth_deg: -5.0,
            doa_elevation_deg: 0.0,
            power_dbm: -70.0,
        };
        let m = beam_pair_power_map(&cb, &cb, &path);
        let first = m[[0, 0]];
        assert!(m.iter().all(|v| (v - first).abs() < 1e-9));
    }
}
