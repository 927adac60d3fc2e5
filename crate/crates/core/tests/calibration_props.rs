use std::f64::consts::PI;

use mmwave_sounder::analysis::impulse_responses;
use mmwave_sounder::beamforming::{build_codebook, ArrayGeometry};
use mmwave_sounder::calibration::{apply_calibration, synthesize_system_response, CalibrationResponse};
use mmwave_sounder::dsp::Window;
use mmwave_sounder::scene::{GroundTruthMpc, Interaction, PathId};
use mmwave_sounder::sounder::{ClockModel, Impairments, Sounder, SweepSchedule, SyntheticChannel};
use mmwave_sounder::waveform::MultitoneSpec;
use num_complex::Complex64;
use proptest::prelude::*;

fn spec() -> MultitoneSpec {
    let phases = (0..101).map(|k| PI * (k * k) as f64 / 101.0).collect();
    MultitoneSpec::new(101, 500e3, 5e6, 200e6).with_phases(phases)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distort_then_calibrate_round_trips(
        ripple in 0.0f64..3.0, phase in 0.0f64..1.0, seed in any::<u64>(),
        values in proptest::collection::vec((0.01f64..10.0, 0.0f64..2.0 * PI), 101),
    ) {
        let grid = spec().grid();
        let cal = synthesize_system_response(grid, ripple, phase, seed).unwrap();
        let original: Vec<Complex64> = values.iter().map(|&(a, p)| Complex64::from_polar(a, p)).collect();
        let distorted: Vec<Complex64> = original.iter().zip(&cal.response).map(|(x, h)| x * h).collect();
        let restored = apply_calibration(&distorted, &grid, &cal).unwrap();
        prop_assert_eq!(restored.len(), original.len());
        for (r, o) in restored.iter().zip(&original) {
            prop_assert!((r - o).norm() <= 1e-9 * o.norm());
        }
        prop_assert!(cal.grid.matches(&grid));
    }

    #[test]
    fn calibrated_sounder_matches_ideal_hardware(
        ripple in 0.0f64..3.0, phase in 0.0f64..1.0, seed in any::<u64>(), delay_ns in 10.0f64..200.0,
    ) {
        let cb = build_codebook(&ArrayGeometry::default(), &[0.0], &[0.0], 11.25).unwrap();
        let schedule = SweepSchedule { tx_beams: vec![0], rx_beams: vec![0], repetitions_per_pair: 2, ..SweepSchedule::static_19x19x10() };
        let mut ideal = Sounder::new(spec(), cb.clone(), cb, schedule);
        ideal.impairments = Impairments::none();
        ideal.clock = ClockModel::ideal();
        let channel = SyntheticChannel {
            carrier_hz: 27.85e9,
            mpcs: vec![GroundTruthMpc {
                path: PathId::Los,
                delay_s: delay_ns * 1e-9,
                dod_azimuth_deg: 0.0,
                dod_elevation_deg: 0.0,
                doa_azimuth_deg: 0.0,
                doa_elevation_deg: 0.0,
                complex_gain: Complex64::from_polar(1e-5, 0.7),
                doppler_hz: 0.0,
                interaction: Interaction::Los,
                blockage_loss_db: 0.0,
            }],
        };
        let cal = synthesize_system_response(spec().grid(), ripple, phase, seed).unwrap();
        let mut distorted = ideal.clone();
        distorted.system_response = Some(cal.clone());
        let a = ideal.run(&channel).unwrap();
        let b = distorted.run(&channel).unwrap();
        prop_assert_eq!(a.captures.len(), b.captures.len());
        prop_assert_eq!(a.captures[0].samples.len(), b.captures[0].samples.len());
        let ha = impulse_responses(&a, &CalibrationResponse::identity(spec().grid()), Window::Hanning).unwrap().remove(0).taps;
        let hb = impulse_responses(&b, &cal, Window::Hanning).unwrap().remove(0).taps;
        let scale = ha.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (x, y) in ha.iter().zip(hb.iter()) {
            // captures are stored as f32
            prop_assert!((x - y).norm() <= 1e-5 * scale);
        }
    }
}
