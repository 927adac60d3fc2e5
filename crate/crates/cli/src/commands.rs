use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use mmwave_sounder::analysis::{
    angular_stats, beam_tracking_gain, delay_doppler, extract_mpcs, fit_path_loss, impulse_responses, noise_floor_db,
    omni_pdp, pas, pas_above, pas_marginal, rms_delay_spread, ImpulseResponse, OmniMethod, PairSelection, PathLossModel,
    Side, DETECTION_MARGIN_DB,
};
use mmwave_sounder::beamforming::{build_codebook, ArrayGeometry, BeamCodebook};
use mmwave_sounder::calibration::{synthesize_system_response, CalibrationResponse};
use mmwave_sounder::dsp::{lin_to_db, Window};
use mmwave_sounder::scene::{scenario_by_name, Pose, PropagationScene, CASE2_NAME};
use mmwave_sounder::sounder::{link_budget, ClockModel, Impairments, Sounder, SweepRecording, SweepSchedule};
use mmwave_sounder::storage::{
    codebook_hash, read_calibration, read_ground_truth, read_recording, read_scene, read_waveform_spec, recording_checksum,
    scene_hash, write_calibration, write_codebook, write_csv, write_ground_truth, write_scene, write_waveform_spec,
    RecordingWriter,
};
use mmwave_sounder::waveform::{optimize_phases, synthesize, zadoff_chu_baseline, MultitoneSpec};

use crate::{AnalyzeArgs, CliError, CodebookArgs, Context, PathLossArgs, ReportArgs, SimulateArgs, WaveformArgs};

const RECORDING_FILE: &str = "recording.sndr";
const CALIBRATION_FILE: &str = "calibration.txt";
const TRUTH_FILE: &str = "ground_truth.json";
const PAPR_OVERSAMPLING: usize = 4;
const DEFAULT_ITERS: usize = 2000;
/// Beam of the 19-beam sweep pointing at 0°.
const BORESIGHT_BEAM: usize = 9;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

/// Default sounder grid with `tones` tones and optimized phases.
fn generated_waveform(tones: usize, max_iters: usize, seed: u64) -> Result<(MultitoneSpec, f64, f64), CliError> {
    let base = MultitoneSpec::default_sounder();
    let spec = MultitoneSpec::new(tones, base.tone_spacing_hz, base.first_tone_hz, base.sample_rate_hz);
    spec.validate()?;
    let opt = optimize_phases(&spec, 0.0, max_iters, seed)?;
    Ok((opt.spec, opt.papr_db, opt.initial_papr_db))
}

pub fn waveform(ctx: &Context, a: &WaveformArgs) -> Result<(), CliError> {
    let c = &ctx.config.waveform;
    let tones = a.tones.or(c.tones).unwrap_or(801);
    let iters = a.max_iters.or(c.max_iters).unwrap_or(DEFAULT_ITERS);
    let (spec, papr, initial) = generated_waveform(tones, iters, ctx.seed)?;
    let wf = synthesize(&spec)?;
    write_waveform_spec(&spec, &ctx.out.join("waveform.txt"))?;
    write_csv(
        &ctx.out.join("waveform_samples.csv"),
        &["sample", "time_ns", "i", "q"],
        wf.samples.iter().enumerate().map(|(k, s)| {
            vec![k.to_string(), f(k as f64 / spec.sample_rate_hz * 1e9), f(s.re), f(s.im)]
        }),
    )?;
    let mut report = format!(
        "tones = {}\ntone_spacing_hz = {}\nsample_rate_hz = {}\nperiod_samples = {}\noversampling = {}\npapr_db = {:.4}\ninitial_papr_db = {:.4}\n",
        spec.num_tones,
        spec.tone_spacing_hz,
        spec.sample_rate_hz,
        spec.period_len(),
        PAPR_OVERSAMPLING,
        papr,
        initial
    );
    if a.compare_zc || c.compare_zc.unwrap_or(false) {
        let bandwidth = spec.tone_spacing_hz * (spec.num_tones.max(2) - 1) as f64;
        let zc = zadoff_chu_baseline(spec.num_tones, 1, spec.sample_rate_hz, bandwidth)?;
        let zc_db = zc.oversampled_papr_db(PAPR_OVERSAMPLING);
        report += &format!("zadoff_chu_papr_db = {zc_db:.4}\nimprovement_over_zadoff_chu_db = {:.4}\n", zc_db - papr);
    }
    write_text(&ctx.out.join("papr_report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn codebook(ctx: &Context, a: &CodebookArgs) -> Result<(), CliError> {
    let c = &ctx.config.codebook;
    let lo = a.az_min_deg.or(c.az_min_deg).unwrap_or(-45.0);
    let hi = a.az_max_deg.or(c.az_max_deg).unwrap_or(45.0);
    let step = a.az_step_deg.or(c.az_step_deg).unwrap_or(5.0);
    let el = a.elevation_deg.or(c.elevation_deg).unwrap_or(0.0);
    let phase_step = a.phase_step_deg.or(c.phase_step_deg).unwrap_or(11.25);
    if !(step > 0.0) || hi < lo {
        return Err(invalid(format!("azimuth range {lo}..{hi} with step {step} is empty")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let azimuths: Vec<f64> = (0..count).map(|k| lo + k as f64 * step).collect();
    let geometry = ArrayGeometry::default();
    let cb = build_codebook(&geometry, &azimuths, &[el], phase_step)?;
    write_codebook(&cb, &ctx.out.join("codebook.json"))?;
    let grid: Vec<f64> = (0..=360).map(|k| -90.0 + 0.5 * k as f64).collect();
    let rows = cb.beams.iter().enumerate().flat_map(|(b, beam)| {
        let g = &cb.geometry;
        grid.iter().map(move |&az| vec![b.to_string(), f(beam.azimuth_deg), f(az), f(beam.gain_dbi(g, az, el))])
    });
    write_csv(&ctx.out.join("beam_patterns.csv"), &["beam", "steer_azimuth_deg", "azimuth_deg", "gain_dbi"], rows)?;
    write_csv(
        &ctx.out.join("beams.csv"),
        &["beam", "azimuth_deg", "elevation_deg", "boresight_gain_dbi", "beamwidth_3db_deg"],
        cb.beams.iter().enumerate().map(|(b, beam)| {
            vec![
                b.to_string(),
                f(beam.azimuth_deg),
                f(beam.elevation_deg),
                f(beam.boresight_gain_dbi),
                f(beam.azimuth_beamwidth_3db(&cb.geometry)),
            ]
        }),
    )?;
    println!("{} beams, codebook hash {:016x}", cb.len(), codebook_hash(&cb));
    Ok(())
}

fn clock_model(a: &SimulateArgs, ctx: &Context) -> Result<ClockModel, CliError> {
    let c = &ctx.config.simulate;
    let mode = a.clock.clone().or_else(|| c.clock.clone()).unwrap_or_else(|| "shared".into());
    let offset = a.clock_offset.or(c.clock_offset);
    let mut clock = match mode.as_str() {
        "shared" => ClockModel::shared(),
        "ideal" => ClockModel::ideal(),
        "free-running" | "free_running" => ClockModel::free_running(offset.unwrap_or(2.77e-10)),
        "gps" | "gps-disciplined" => {
            ClockModel::gps_disciplined(offset.unwrap_or(0.0), a.random_walk_deg.or(c.random_walk_deg).unwrap_or(1.0))
        }
        other => return Err(invalid(format!("unknown clock mode '{other}'"))),
    };
    if let Some(jitter) = a.phase_noise_deg.or(c.phase_noise_deg) {
        clock.phase_noise_std_deg = jitter;
    }
    clock.seed = ctx.seed;
    Ok(clock)
}

fn schedule(a: &SimulateArgs, ctx: &Context) -> Result<SweepSchedule, CliError> {
    let c = &ctx.config.simulate;
    let preset = a.preset.clone().or_else(|| c.preset.clone()).unwrap_or_else(|| "static-19x19x10".into());
    let mut s = SweepSchedule::preset(&preset)?;
    if let Some(v) = a.bursts.or(c.bursts) {
        s.num_bursts = v;
    }
    if let Some(v) = a.snapshots.or(c.snapshots) {
        s.snapshots_per_burst = v;
    }
    if let Some(v) = a.repetitions.or(c.repetitions) {
        s.repetitions_per_pair = v;
    }
    if let Some(v) = a.burst_period_s.or(c.burst_period_s) {
        s.burst_period_s = v;
    }
    if let Some(v) = a.start_s.or(c.start_s) {
        s.start_time_s = v;
    }
    s.validate()?;
    Ok(s)
}

fn sweep_codebook() -> Result<BeamCodebook, CliError> {
    Ok(BeamCodebook::azimuth_sweep(&ArrayGeometry::default())?)
}

/// Streams the sweep into `path` and returns the recording's checksum.
fn record(sounder: &Sounder, scene: &PropagationScene, path: &Path) -> Result<(mmwave_sounder::sounder::RecordingHeader, u32), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut header = sounder.header_template();
    header.snapshot_count = 0;
    header.capture_count = 0;
    let mut writer = RecordingWriter::new(BufWriter::new(file), header)?;
    let header = sounder.run_streaming(scene, |c| writer.append(&c))?;
    writer.set_clipped_captures(header.clipped_captures);
    writer.finish()?;
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let crc = recording_checksum(&bytes).ok_or_else(|| CliError::Format("recording has no trailer".into()))?;
    Ok((header, crc))
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<(), CliError> {
    let c = &ctx.config.simulate;
    let scene = match (a.scene.clone().or_else(|| c.scene.clone()), a.scenario.clone().or_else(|| c.scenario.clone())) {
        (Some(path), _) => read_scene(&path)?,
        (None, Some(name)) => scenario_by_name(&name)?,
        (None, None) => scenario_by_name(CASE2_NAME)?,
    };
    scene.validate()?;
    let spec = match a.waveform.clone().or_else(|| c.waveform.clone()) {
        Some(path) => read_waveform_spec(&path)?,
        None => generated_waveform(a.tones.or(c.tones).unwrap_or(801), DEFAULT_ITERS, ctx.seed)?.0,
    };
    let cb = sweep_codebook()?;
    let mut s = Sounder::new(spec.clone(), cb.clone(), cb.clone(), schedule(a, ctx)?);
    s.clock = clock_model(a, ctx)?;
    s.seed = ctx.seed;
    s.scene_hash = scene_hash(&scene);
    if let Some(eirp) = a.eirp_dbm.or(c.eirp_dbm) {
        s.tx_eirp_dbm = eirp;
    }
    if a.noiseless || c.noiseless.unwrap_or(false) {
        s.impairments = Impairments { thermal_noise: false, adc_quantization: false, ..Impairments::default() };
    }
    let ripple = a.ripple_db.or(c.ripple_db).unwrap_or(0.0);
    let calibration = if ripple > 0.0 {
        let cal = synthesize_system_response(spec.grid(), ripple, ripple.to_radians() * 10.0, ctx.seed)?;
        s.system_response = Some(cal.clone());
        cal
    } else {
        CalibrationResponse::identity(spec.grid())
    };

    let (header, crc) = record(&s, &scene, &ctx.out.join(RECORDING_FILE))?;
    write_ground_truth(&s.ground_truth(&scene, &scene.name), &ctx.out.join(TRUTH_FILE))?;
    write_calibration(&calibration, &ctx.out.join(CALIBRATION_FILE))?;
    write_waveform_spec(&spec, &ctx.out.join("waveform.txt"))?;
    write_scene(&scene, &ctx.out.join("scene.json"))?;
    write_codebook(&cb, &ctx.out.join("codebook.json"))?;
    println!(
        "{}: {} snapshots, {} captures ({} clipped), snapshot time {:.3} us, checksum {crc:08x}",
        scene.name,
        header.snapshot_count,
        header.capture_count,
        header.clipped_captures,
        header.schedule.snapshot_time_s() * 1e6
    );
    Ok(())
}

fn parse_window(name: Option<String>) -> Result<Window, CliError> {
    match name.as_deref().unwrap_or("hanning") {
        "hanning" | "hann" => Ok(Window::Hanning),
        "none" | "rect" => Ok(Window::None),
        other => Err(invalid(format!("unknown window '{other}'"))),
    }
}

/// Captures of snapshots `first..first + count`, renumbered from zero.
fn slice_snapshots(rec: &SweepRecording, first: u32, count: u32) -> SweepRecording {
    let mut header = rec.header.clone();
    let captures: Vec<_> = rec
        .captures
        .iter()
        .filter(|c| c.snapshot >= first && c.snapshot < first + count)
        .map(|c| {
            let mut c = c.clone();
            c.snapshot -= first;
            c
        })
        .collect();
    header.snapshot_count = count;
    header.capture_count = captures.len() as u32;
    SweepRecording { header, captures }
}

fn maybe_db(v: mmwave_sounder::Result<f64>, scale: f64) -> String {
    v.map(|x| f(x * scale)).unwrap_or_default()
}

pub fn analyze(ctx: &Context, a: &AnalyzeArgs) -> Result<(), CliError> {
    let c = &ctx.config.analyze;
    let path = a
        .recording
        .clone()
        .or_else(|| c.recording.clone())
        .unwrap_or_else(|| ctx.out.join(RECORDING_FILE));
    let rec = read_recording(&path)?;
    let cal_path = a
        .calibration
        .clone()
        .or_else(|| c.calibration.clone())
        .unwrap_or_else(|| path.parent().map(|p| p.join(CALIBRATION_FILE)).unwrap_or_else(|| PathBuf::from(CALIBRATION_FILE)));
    if !cal_path.exists() {
        return Err(invalid(format!("no calibration: pass --calibration or place {CALIBRATION_FILE} beside the recording")));
    }
    let cal = read_calibration(&cal_path)?;
    let window = parse_window(a.window.clone().or_else(|| c.window.clone()))?;

    let flag = |cli: bool, cfg: Option<bool>| cli || cfg.unwrap_or(false);
    let mut sel = [
        flag(a.pdp, c.pdp),
        flag(a.mpc, c.mpc),
        flag(a.doppler, c.doppler),
        flag(a.pas, c.pas),
        flag(a.stats, c.stats),
        flag(a.tracking, c.tracking),
    ];
    let explicit = sel.iter().any(|v| *v);
    if !explicit {
        sel = [true; 6];
    }
    let [want_pdp, want_mpc, want_doppler, want_pas, want_stats, want_tracking] = sel;
    let per_burst = rec.header.schedule.snapshots_per_burst.max(1) as u32;
    if want_doppler && explicit && per_burst < 2 {
        return Err(invalid("Doppler analysis needs bursts of at least two snapshots"));
    }

    let mut pdp_rows = Vec::new();
    let mut mpc_rows = Vec::new();
    let mut doppler_rows = Vec::new();
    let mut pas_rows = Vec::new();
    let mut stats_rows = Vec::new();
    let mut pas_series = Vec::new();
    let mut times = Vec::new();
    let h = &rec.header;
    let mut first = 0u32;
    while first < h.snapshot_count {
        let count = per_burst.min(h.snapshot_count - first);
        let irs: Vec<ImpulseResponse> = impulse_responses(&slice_snapshots(&rec, first, count), &cal, window)?;
        for ir in &irs {
            let snap = (first + ir.snapshot).to_string();
            let time = f(ir.time_s);
            let pdp = ir.pdp();
            let floor = noise_floor_db(&pdp)?;
            let bin_ns = pdp.delay_bin_s * 1e9;
            let omni = omni_pdp(&pdp, OmniMethod::Max);
            if want_pdp {
                let sum = omni_pdp(&pdp, OmniMethod::Sum);
                for (k, (m, s)) in omni.iter().zip(&sum).enumerate() {
                    pdp_rows.push(vec![snap.clone(), time.clone(), f(k as f64 * bin_ns), f(lin_to_db(*m)), f(lin_to_db(*s))]);
                }
            }
            if want_mpc {
                for m in extract_mpcs(&pdp, floor) {
                    mpc_rows.push(vec![
                        snap.clone(),
                        time.clone(),
                        f(m.delay_s * 1e9),
                        f(m.tx_azimuth_deg),
                        f(m.rx_azimuth_deg),
                        f(m.power_db),
                    ]);
                }
            }
            if want_pas {
                for ((t, r), p) in pas(&pdp).indexed_iter() {
                    pas_rows.push(vec![snap.clone(), time.clone(), f(pdp.tx_azimuths_deg[t]), f(pdp.rx_azimuths_deg[r]), f(lin_to_db(*p))]);
                }
            }
            let above = pas_above(&pdp, floor, DETECTION_MARGIN_DB);
            if want_stats {
                let side = |s: Side, az: &[f64]| angular_stats(az, &pas_marginal(&above, s));
                let (tx, rx) = (side(Side::Tx, &pdp.tx_azimuths_deg), side(Side::Rx, &pdp.rx_azimuths_deg));
                let mean = |s: &mmwave_sounder::Result<_>| s.as_ref().map(|v: &mmwave_sounder::analysis::AngularStats| f(v.mean_angle_deg)).unwrap_or_default();
                let spread = |s: &mmwave_sounder::Result<_>| s.as_ref().map(|v: &mmwave_sounder::analysis::AngularStats| f(v.angular_spread_deg)).unwrap_or_default();
                stats_rows.push(vec![
                    snap.clone(),
                    time.clone(),
                    f(floor),
                    maybe_db(rms_delay_spread(&omni, pdp.delay_bin_s, floor, DETECTION_MARGIN_DB), 1e9),
                    mean(&tx),
                    spread(&tx),
                    mean(&rx),
                    spread(&rx),
                ]);
            }
            pas_series.push(above);
            times.push(ir.time_s);
        }
        if want_doppler && irs.len() >= 2 {
            let dd = delay_doppler(&irs, PairSelection::PerBinMax, window)?;
            let burst = (first / per_burst).to_string();
            for ((d, k), p) in dd.power.indexed_iter() {
                doppler_rows.push(vec![burst.clone(), f(d as f64 * dd.delay_bin_s * 1e9), f(dd.doppler_hz[k]), f(lin_to_db(*p))]);
            }
        }
        first += count;
    }

    let out = &ctx.out;
    let mut written = Vec::new();
    if want_pdp {
        write_csv(&out.join("pdp.csv"), &["snapshot", "time_s", "delay_ns", "omni_max_dbm", "omni_sum_dbm"], pdp_rows)?;
        written.push("pdp.csv");
    }
    if want_mpc {
        write_csv(&out.join("mpcs.csv"), &["snapshot", "time_s", "delay_ns", "tx_azimuth_deg", "rx_azimuth_deg", "power_dbm"], mpc_rows)?;
        written.push("mpcs.csv");
    }
    if want_doppler && per_burst >= 2 {
        write_csv(&out.join("doppler.csv"), &["burst", "delay_ns", "doppler_hz", "power_dbm"], doppler_rows)?;
        written.push("doppler.csv");
    }
    if want_pas {
        write_csv(&out.join("pas.csv"), &["snapshot", "time_s", "tx_azimuth_deg", "rx_azimuth_deg", "power_dbm"], pas_rows)?;
        written.push("pas.csv");
    }
    if want_stats {
        write_csv(
            &out.join("stats.csv"),
            &[
                "snapshot",
                "time_s",
                "noise_floor_dbm",
                "rms_delay_spread_ns",
                "tx_mean_azimuth_deg",
                "tx_angular_spread_deg",
                "rx_mean_azimuth_deg",
                "rx_angular_spread_deg",
            ],
            stats_rows,
        )?;
        written.push("stats.csv");
    }
    if want_tracking {
        // snapshots without any bin above the floor carry no beam choice
        let tracking = beam_tracking_gain(&pas_series)?;
        let rows = (0..pas_series.len()).map(|k| {
            let (t, r) = tracking.instantaneous_pair[k];
            let g = tracking.instantaneous_best_db[k] - tracking.fixed_best_db[k];
            vec![
                k.to_string(),
                f(times[k]),
                f(tracking.fixed_best_db[k]),
                f(tracking.instantaneous_best_db[k]),
                if g.is_finite() { f(g) } else { String::new() },
                f(h.tx_beam_azimuths_deg[t]),
                f(h.rx_beam_azimuths_deg[r]),
            ]
        });
        write_csv(
            &out.join("tracking.csv"),
            &["snapshot", "time_s", "fixed_pair_dbm", "best_pair_dbm", "gain_db", "best_tx_azimuth_deg", "best_rx_azimuth_deg"],
            rows,
        )?;
        written.push("tracking.csv");
    }
    println!("{} snapshots analysed; wrote {}", h.snapshot_count, written.join(", "));
    Ok(())
}

/// Path loss of a noiseless boresight LOS link at `distance_m`, from the
/// total received power of the unwindowed PDP.
fn simulated_los_loss(spec: &MultitoneSpec, cb: &BeamCodebook, distance_m: f64, height_m: f64) -> Result<f64, CliError> {
    let schedule = SweepSchedule {
        tx_beams: vec![BORESIGHT_BEAM],
        rx_beams: vec![BORESIGHT_BEAM],
        ..SweepSchedule::static_19x19x10()
    };
    let mut s = Sounder::new(spec.clone(), cb.clone(), cb.clone(), schedule);
    s.impairments = Impairments { thermal_noise: false, adc_quantization: false, ..Impairments::default() };
    s.clock = ClockModel::ideal();
    let scene = PropagationScene::new(
        "los",
        cb.geometry.carrier_hz,
        1.0,
        Pose::new([0.0, 0.0, height_m], 0.0),
        Pose::new([distance_m, 0.0, height_m], 180.0),
    );
    let rec = s.run(&scene)?;
    let ir = impulse_responses(&rec, &CalibrationResponse::identity(spec.grid()), Window::None)?.remove(0);
    let received_mw: f64 = ir.pdp().power.iter().sum();
    let beam = &cb.beams[BORESIGHT_BEAM];
    let gains = 2.0 * beam.gain_dbi(&cb.geometry, 0.0, 0.0);
    Ok(lin_to_db(s.tx_power_mw()) + gains - lin_to_db(received_mw))
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [d, pl] => d.parse::<f64>().ok().zip(pl.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => points.push(p),
            // a header line is allowed
            None if n == 0 => continue,
            None => return Err(CliError::Format(format!("{}: line {} is not 'distance_m,path_loss_db'", path.display(), n + 1))),
        }
    }
    Ok(points)
}

pub fn fit_pathloss(ctx: &Context, a: &PathLossArgs) -> Result<(), CliError> {
    let c = &ctx.config.pathloss;
    let cb = sweep_codebook()?;
    let carrier = cb.geometry.carrier_hz;
    let points = match a.points.clone().or_else(|| c.points.clone()) {
        Some(path) => read_points(&path)?,
        None => {
            let lo = a.min_m.or(c.min_m).unwrap_or(30.0);
            let hi = a.max_m.or(c.max_m).unwrap_or(122.0);
            let n = a.count.or(c.count).unwrap_or(20);
            let height = a.height_m.or(c.height_m).unwrap_or(5.0);
            if n < 2 || !(lo > 0.0 && hi > lo) {
                return Err(invalid(format!("distance sweep {lo}..{hi} m with {n} points is degenerate")));
            }
            let spec = generated_waveform(801, DEFAULT_ITERS, ctx.seed)?.0;
            (0..n)
                .map(|k| {
                    let d = lo + (hi - lo) * k as f64 / (n - 1) as f64;
                    simulated_los_loss(&spec, &cb, d, height).map(|pl| (d, pl))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let model = match a.model.clone().or_else(|| c.model.clone()).as_deref().unwrap_or("ci") {
        "ci" | "close-in" => PathLossModel::CloseIn { carrier_hz: carrier },
        "abg" | "alpha-beta-gamma" => PathLossModel::AlphaBetaGamma,
        other => return Err(invalid(format!("unknown path-loss model '{other}'"))),
    };
    let fit = fit_path_loss(&points, model)?;
    write_csv(
        &ctx.out.join("pathloss_points.csv"),
        &["distance_m", "path_loss_db", "fit_db", "residual_db"],
        points.iter().zip(&fit.residuals_db).map(|(&(d, pl), r)| vec![f(d), f(pl), f(fit.predict_db(d)), f(*r)]),
    )?;
    let name = match model {
        PathLossModel::CloseIn { .. } => "close-in",
        PathLossModel::AlphaBetaGamma => "alpha-beta-gamma",
    };
    let report = format!(
        "model = {name}\npoints = {}\nexponent = {:.4}\nintercept_db = {:.4}\nshadowing_sigma_db = {:.4}\n",
        points.len(),
        fit.exponent,
        fit.intercept_db,
        fit.shadowing_sigma_db
    );
    write_text(&ctx.out.join("pathloss_fit.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn report(ctx: &Context, a: &ReportArgs) -> Result<(), CliError> {
    let path = a.recording.clone().unwrap_or_else(|| ctx.out.join(RECORDING_FILE));
    let bytes = std::fs::read(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let rec = mmwave_sounder::storage::decode_recording(&bytes)?;
    let h = &rec.header;
    let s = &h.schedule;
    let cb = sweep_codebook()?;
    let rx_gain = h
        .schedule
        .rx_beams
        .iter()
        .filter_map(|&b| cb.beams.get(b))
        .map(|b| b.boresight_gain_dbi)
        .fold(f64::NEG_INFINITY, f64::max);
    let lb = link_budget(&h.receiver, 57.0, rx_gain);
    let mut out = format!(
        "recording = {}\nchecksum = {:08x}\ncarrier_hz = {}\ntones = {}\ntone_spacing_hz = {}\nsample_rate_hz = {}\n\
         tx_beams = {}\nrx_beams = {}\nrepetitions_per_pair = {}\nsnapshots_per_burst = {}\nbursts = {}\n\
         pair_time_us = {:.3}\nsnapshot_time_us = {:.3}\nsnapshot_time_ms = {:.3}\nsnapshots = {}\ncaptures = {}\nclipped_captures = {}\n\
         clock_mode = {:?}\nclock_offset = {:e}\nphase_noise_std_deg = {}\nseed = {}\nscene_hash = {:016x}\n\
         sensitivity_dbm = {:.2}\neis_dbm = {:.2}\nmax_path_loss_db = {:.2}\ndynamic_range_db = {:.2}\n",
        path.display(),
        recording_checksum(&bytes).unwrap_or_default(),
        h.carrier_hz,
        h.waveform.num_tones,
        h.waveform.tone_spacing_hz,
        h.waveform.sample_rate_hz,
        s.tx_beams.len(),
        s.rx_beams.len(),
        s.repetitions_per_pair,
        s.snapshots_per_burst,
        s.num_bursts,
        s.pair_time_s() * 1e6,
        s.snapshot_time_s() * 1e6,
        s.snapshot_time_s() * 1e3,
        h.snapshot_count,
        h.capture_count,
        h.clipped_captures,
        h.clock.mode,
        h.clock.fractional_offset,
        h.clock.phase_noise_std_deg,
        h.seed,
        h.scene_hash,
        lb.sensitivity_dbm,
        lb.eis_dbm,
        lb.max_path_loss_db,
        lb.dynamic_range_db,
    );
    if let Some(truth_path) = path.parent().map(|p| p.join(TRUTH_FILE)).filter(|p| p.exists()) {
        let truth = read_ground_truth(&truth_path)?;
        let matches = truth.seed == h.seed && truth.scene_hash == h.scene_hash;
        let mpcs: usize = truth.snapshots.iter().map(|s| s.mpcs.len()).sum();
        out += &format!(
            "ground_truth_scene = {}\nground_truth_mpcs = {mpcs}\nground_truth_matches = {matches}\n",
            truth.scene_name
        );
    }
    write_text(&ctx.out.join("report.txt"), &out)?;
    print!("{out}");
    Ok(())
}
