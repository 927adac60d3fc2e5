use std::f64::consts::PI;
use std::sync::OnceLock;

use mmwave_sounder::analysis::{
    beam_tracking_gain, delay_doppler, extract_mpcs, find_peaks, impulse_responses, noise_floor_db, omni_pdp, pas,
    pas_above, padp, DirectionalPdp, ImpulseResponse, OmniMethod, PairSelection, Side, DETECTION_MARGIN_DB,
};
use mmwave_sounder::beamforming::{ArrayGeometry, BeamCodebook};
use mmwave_sounder::calibration::CalibrationResponse;
use mmwave_sounder::dsp::Window;
use mmwave_sounder::scene::{GroundTruthMpc, Interaction, PathId};
use mmwave_sounder::sounder::{ClockModel, Impairments, Sounder, SweepSchedule, SyntheticChannel};
use mmwave_sounder::waveform::MultitoneSpec;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use proptest::prelude::*;

const FC: f64 = 27.85e9;

fn spec() -> MultitoneSpec {
    let phases = (0..101).map(|k| PI * (k * k) as f64 / 101.0).collect();
    MultitoneSpec::new(101, 500e3, 5e6, 200e6).with_phases(phases)
}

fn bin_s() -> f64 {
    1.0 / (101.0 * 500e3)
}

fn sweep() -> &'static BeamCodebook {
    static CB: OnceLock<BeamCodebook> = OnceLock::new();
    CB.get_or_init(|| BeamCodebook::azimuth_sweep(&ArrayGeometry::default()).unwrap())
}

fn sounder(beams: Vec<usize>) -> Sounder {
    let schedule = SweepSchedule {
        tx_beams: beams.clone(),
        rx_beams: beams,
        repetitions_per_pair: 1,
        snapshots_per_burst: 1,
        ..SweepSchedule::static_19x19x10()
    };
    let mut s = Sounder::new(spec(), sweep().clone(), sweep().clone(), schedule);
    s.clock = ClockModel::ideal();
    s
}

fn path(delay_s: f64, power_db: f64, dod: f64, doa: f64, phase: f64) -> GroundTruthMpc {
    GroundTruthMpc {
        path: PathId::Los,
        delay_s,
        dod_azimuth_deg: dod,
        dod_elevation_deg: 0.0,
        doa_azimuth_deg: doa,
        doa_elevation_deg: 0.0,
        complex_gain: Complex64::from_polar(10f64.powf(power_db / 20.0), phase),
        doppler_hz: 0.0,
        interaction: Interaction::Los,
        blockage_loss_db: 0.0,
    }
}

fn pdp_of(s: &Sounder, ch: &SyntheticChannel, window: Window) -> DirectionalPdp {
    let rec = s.run(ch).unwrap();
    impulse_responses(&rec, &CalibrationResponse::identity(spec().grid()), window).unwrap().remove(0).pdp()
}

fn tensor(nt: usize, nr: usize, nd: usize) -> impl Strategy<Value = Array3<f64>> {
    proptest::collection::vec(0.0f64..1.0, nt * nr * nd).prop_map(move |v| Array3::from_shape_vec((nt, nr, nd), v).unwrap())
}

fn random_tensor() -> impl Strategy<Value = Array3<f64>> {
    (1usize..6, 1usize..6, 1usize..24).prop_flat_map(|(nt, nr, nd)| tensor(nt, nr, nd))
}

prop_compose! {
    fn channel()(
        paths in proptest::collection::vec(
            (5usize..80, -0.3f64..0.3, -135.0f64..-90.0, -40.0f64..40.0, -40.0f64..40.0, 0.0f64..2.0 * PI),
            1..4,
        )
    ) -> SyntheticChannel {
        SyntheticChannel {
            carrier_hz: FC,
            mpcs: paths.into_iter().map(|(b, f, p, a, r, ph)| path((b as f64 + f) * bin_s(), p, a, r, ph)).collect(),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reductions_match_brute_force(power in random_tensor()) {
        let (nt, nr, nd) = power.dim();
        let pdp = DirectionalPdp::from_tensor(power.clone(), 1e-9);
        let max = omni_pdp(&pdp, OmniMethod::Max);
        let sum = omni_pdp(&pdp, OmniMethod::Sum);
        let (tx, rx, a) = (padp(&pdp, Side::Tx), padp(&pdp, Side::Rx), pas(&pdp));
        for d in 0..nd {
            let mut m = 0.0f64;
            let mut s = 0.0;
            for t in 0..nt {
                for r in 0..nr {
                    m = m.max(power[[t, r, d]]);
                    s += power[[t, r, d]];
                }
            }
            prop_assert_eq!(max[d], m);
            prop_assert!((sum[d] - s).abs() <= 1e-12 * s.max(1.0));
            prop_assert!(max[d] <= sum[d] * (1.0 + 1e-12));
        }
        for t in 0..nt {
            for d in 0..nd {
                let m = (0..nr).map(|r| power[[t, r, d]]).fold(0.0, f64::max);
                prop_assert_eq!(tx[[t, d]], m);
            }
        }
        for r in 0..nr {
            for d in 0..nd {
                let m = (0..nt).map(|t| power[[t, r, d]]).fold(0.0, f64::max);
                prop_assert_eq!(rx[[r, d]], m);
            }
        }
        for t in 0..nt {
            for r in 0..nr {
                let s: f64 = (0..nd).map(|d| power[[t, r, d]]).sum();
                prop_assert!((a[[t, r]] - s).abs() <= 1e-12 * s.max(1.0));
            }
        }
        let above = pas_above(&pdp, -3.0, 0.0);
        prop_assert!(above.iter().zip(a.iter()).all(|(x, y)| *x >= 0.0 && *x <= *y * (1.0 + 1e-12)));
    }

    #[test]
    fn peaks_are_sound_and_complete(power in random_tensor(), threshold in 0.0f64..0.9) {
        let (nt, nr, nd) = power.dim();
        let peaks = find_peaks(&power, threshold);
        let neighbours = |t: usize, r: usize, d: usize| {
            let mut out = Vec::new();
            for dd in [nd - 1, 0, 1] {
                for dt in [-1i64, 0, 1] {
                    for dr in [-1i64, 0, 1] {
                        let (t2, r2) = (t as i64 + dt, r as i64 + dr);
                        let d2 = (d + dd) % nd;
                        if t2 >= 0 && r2 >= 0 && (t2 as usize) < nt && (r2 as usize) < nr && (t2 as usize, r2 as usize, d2) != (t, r, d) {
                            out.push((t2 as usize, r2 as usize, d2));
                        }
                    }
                }
            }
            out
        };
        for &(t, r, d) in &peaks {
            prop_assert!(power[[t, r, d]] > threshold);
            for (t2, r2, d2) in neighbours(t, r, d) {
                prop_assert!(power[[t2, r2, d2]] <= power[[t, r, d]]);
            }
        }
        // every strict local maximum above the threshold is reported
        for ((t, r, d), &v) in power.indexed_iter() {
            if v > threshold && neighbours(t, r, d).iter().all(|&(a, b, c)| power[[a, b, c]] < v) {
                prop_assert!(peaks.contains(&(t, r, d)));
            }
        }
        let global = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if global > threshold {
            prop_assert!(!peaks.is_empty());
        }
    }

    #[test]
    fn tracking_gain_is_never_negative(series in proptest::collection::vec(
        proptest::collection::vec(1e-6f64..1.0, 12).prop_map(|v| Array2::from_shape_vec((3, 4), v).unwrap()), 1..12,
    )) {
        let g = beam_tracking_gain(&series).unwrap();
        let total = series.iter().fold(Array2::<f64>::zeros((3, 4)), |acc, p| acc + p);
        let best = total.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(total[g.fixed_pair], best);
        prop_assert!(g.gain_db().iter().all(|v| *v >= 0.0));
        for (p, &(t, r)) in series.iter().zip(&g.instantaneous_pair) {
            prop_assert_eq!(p[[t, r]], p.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }

    #[test]
    fn doppler_shift_rotates_the_spectrum(
        paths in proptest::collection::vec((0usize..8, 0.0f64..1.0, -0.5f64..0.5, 0.0f64..2.0 * PI), 1..4),
        shift in -10i64..10, hanning in any::<bool>(),
    ) {
        let (n, period) = (21usize, 1e-3);
        let res = 1.0 / (n as f64 * period);
        let burst = |offset_hz: f64| -> Vec<ImpulseResponse> {
            (0..n)
                .map(|k| {
                    let t = k as f64 * period;
                    let mut taps = Array3::<Complex64>::zeros((1, 1, 8));
                    for &(d, a, nu, ph) in &paths {
                        taps[[0, 0, d]] += Complex64::from_polar(a, ph + 2.0 * PI * (nu * 400.0 + offset_hz) * t);
                    }
                    ImpulseResponse { snapshot: k as u32, time_s: t, delay_bin_s: 1e-9, tx_azimuths_deg: vec![0.0], rx_azimuths_deg: vec![0.0], taps }
                })
                .collect()
        };
        let window = if hanning { Window::Hanning } else { Window::None };
        let sel = PairSelection::Fixed { tx: 0, rx: 0 };
        let a = delay_doppler(&burst(0.0), sel, window).unwrap();
        let b = delay_doppler(&burst(shift as f64 * res), sel, window).unwrap();
        prop_assert_eq!(a.doppler_hz.len(), n);
        let scale = a.power.iter().copied().fold(0.0, f64::max);
        for d in 0..8 {
            for k in 0..n {
                let moved = (k as i64 + shift).rem_euclid(n as i64) as usize;
                prop_assert!((a.power[[d, k]] - b.power[[d, moved]]).abs() <= 1e-9 * scale);
            }
            let (pa, pb) = (a.power.row(d).sum(), b.power.row(d).sum());
            if pa > 1e-6 * scale {
                prop_assert!((10.0 * (pb / pa).log10()).abs() <= 0.1);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extracted_voxels_carry_model_power(ch in channel(), seed in any::<u64>()) {
        let mut noisy = sounder((0..19).collect());
        noisy.seed = seed;
        // thermal noise must dither the converter; a 10-bit ADC leaves quantization spurs the model lacks
        noisy.receiver.adc_bits = 16;
        let rec = noisy.run(&ch).unwrap();
        // clipped captures are flagged and carry intermodulation the model lacks
        prop_assume!(rec.header.clipped_captures == 0);
        let measured = impulse_responses(&rec, &CalibrationResponse::identity(spec().grid()), Window::Hanning).unwrap().remove(0).pdp();
        let mut model = noisy.clone();
        model.impairments = Impairments { thermal_noise: false, adc_quantization: false, awg_quantization: true };
        let clean = pdp_of(&model, &ch, Window::Hanning);
        let floor = noise_floor_db(&measured).unwrap();
        // noise lifts near-threshold model voxels by a few dB; noise-only voxels sit far lower
        let bound = 10f64.powf((floor - DETECTION_MARGIN_DB) / 10.0);
        for m in extract_mpcs(&measured, floor) {
            prop_assert!(m.power_db >= floor + DETECTION_MARGIN_DB);
            let p = clean.power[[m.tx_beam, m.rx_beam, m.delay_bin]];
            prop_assert!(p >= bound, "voxel {:?} holds {:.1} dB of model power, floor {:.1} dB", (m.tx_beam, m.rx_beam, m.delay_bin), 10.0 * p.log10(), floor);
        }
    }

    #[test]
    fn a_path_lands_in_one_delay_bin_for_every_pair(
        bin in 5usize..80, frac in -0.3f64..0.3, dod in -40.0f64..40.0, doa in -40.0f64..40.0, phase in 0.0f64..2.0 * PI,
    ) {
        let mut s = sounder(vec![2, 9, 16]);
        s.impairments = Impairments::none();
        let ch = SyntheticChannel { carrier_hz: FC, mpcs: vec![path((bin as f64 + frac) * bin_s(), -100.0, dod, doa, phase)] };
        for window in [Window::None, Window::Hanning] {
            let pdp = pdp_of(&s, &ch, window);
            for t in 0..3 {
                for r in 0..3 {
                    let row: Vec<f64> = (0..pdp.num_delay_bins()).map(|d| pdp.power[[t, r, d]]).collect();
                    let peak = row.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (d, &v)| if v > b.1 { (d, v) } else { b }).0;
                    prop_assert_eq!(peak, bin, "pair ({}, {}) with {:?}", t, r, window);
                }
            }
        }
    }
}
