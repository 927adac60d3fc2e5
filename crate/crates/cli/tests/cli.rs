use std::path::Path;
use std::process::{Command, Output};

use mmwave_sounder::scene::PathId;
use mmwave_sounder::storage::{read_ground_truth, read_recording};

fn sounder(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sounder"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("run sounder")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = sounder(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from\n{report}"))
        .parse()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn waveform_default_meets_papr_target() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(dir.path(), &["waveform", "--compare-zc"]);
    assert_eq!(value(&report, "tones"), 801.0);
    assert_eq!(value(&report, "tone_spacing_hz"), 500e3);
    assert!(value(&report, "papr_db") <= 1.0, "{report}");
    assert!(value(&report, "improvement_over_zadoff_chu_db") >= 1.0, "{report}");
    assert!(dir.path().join("waveform.txt").exists());
    assert_eq!(csv_rows(&dir.path().join("waveform_samples.csv")).len(), 2500);
}

#[test]
fn single_tone_has_no_crest() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(dir.path(), &["waveform", "--tones", "1"]);
    assert!(value(&report, "papr_db").abs() < 1e-9, "{report}");
}

#[test]
fn dynamic_preset_snapshot_is_400_us() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--scenario", "case1", "--preset", "dynamic-10x10", "--snapshots", "2", "--tones", "101"]);
    let rec = read_recording(&dir.path().join("recording.sndr")).unwrap();
    assert!((rec.header.schedule.snapshot_time_s() - 400e-6).abs() < 1e-15);
    let report = ok(dir.path(), &["report"]);
    assert_eq!(value(&report, "snapshot_time_us"), 400.0);
    assert_eq!(value(&report, "captures"), 200.0);
    assert!(report.contains("ground_truth_matches = true"), "{report}");
    for file in ["ground_truth.json", "calibration.txt", "waveform.txt", "scene.json", "codebook.json"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn static_preset_sweep_is_14_44_ms() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--scenario", "case2", "--preset", "static-19x19x10", "--tones", "101", "--noiseless"]);
    let report = ok(dir.path(), &["report"]);
    assert_eq!(value(&report, "snapshot_time_ms"), 14.44);
    assert_eq!(value(&report, "captures"), 361.0);
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["simulate", "--scenario", "case2", "--preset", "dynamic", "--snapshots", "2", "--tones", "51", "--ripple-db", "0.5"];
    ok(a.path(), &[&args[..], &["--seed", "7"]].concat());
    ok(b.path(), &[&args[..], &["--seed", "7"]].concat());
    ok(c.path(), &[&args[..], &["--seed", "8"]].concat());
    let read = |d: &Path| std::fs::read(d.join("recording.sndr")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
    let cal = |d: &Path| std::fs::read_to_string(d.join("calibration.txt")).unwrap();
    assert_eq!(cal(a.path()), cal(b.path()));
    let report = |d: &Path| ok(d, &["report"]);
    assert_eq!(value(&report(a.path()), "seed"), 7.0);
}

#[test]
fn case2_idle_mpcs_include_both_dominant_paths() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--scenario", "case2", "--preset", "dynamic", "--snapshots", "1", "--tones", "801", "--ripple-db", "1"]);
    ok(dir.path(), &["analyze", "--pdp", "--mpc"]);
    let truth = read_ground_truth(&dir.path().join("ground_truth.json")).unwrap();
    let bin_ns = 1e9 / (801.0 * 500e3);
    let mpcs = csv_rows(&dir.path().join("mpcs.csv"));
    let mut dominant = truth.snapshots[0].mpcs.clone();
    dominant.sort_by(|a, b| b.power_db().total_cmp(&a.power_db()));
    assert!(dominant.iter().any(|m| m.path == PathId::Los));
    for m in &dominant[..2] {
        let found = mpcs.iter().any(|row| {
            (row[2] - m.delay_s * 1e9).abs() <= bin_ns
                && (row[3] - m.dod_azimuth_deg).abs() <= 10.0
                && (row[4] - m.doa_azimuth_deg).abs() <= 10.0
        });
        assert!(found, "no MPC near {:?} at {:.1} ns in {mpcs:?}", m.path, m.delay_s * 1e9);
    }
    assert!(dir.path().join("pdp.csv").exists());
}

#[test]
fn case1_doppler_peaks_at_car_speeds() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--scenario", "case1", "--preset", "dynamic", "--tones", "101"]);
    ok(dir.path(), &["analyze", "--doppler"]);
    let truth = read_ground_truth(&dir.path().join("ground_truth.json")).unwrap();
    let rows = csv_rows(&dir.path().join("doppler.csv"));
    let bin_ns = 1e9 / (101.0 * 500e3);
    let cars: Vec<_> = truth.snapshots[0].mpcs.iter().filter(|m| m.doppler_hz > 0.0).collect();
    assert_eq!(cars.len(), 3);
    for car in cars {
        let d = (car.delay_s * 1e9 / bin_ns).round() * bin_ns;
        let bin: Vec<&Vec<f64>> = rows.iter().filter(|r| (r[1] - d).abs() < 1e-3).collect();
        let peak = bin.iter().map(|r| r[3]).fold(f64::NEG_INFINITY, f64::max);
        // the Nyquist edges alias, so the positive edge may tie with the negative one
        let hit = bin.iter().any(|r| r[3] >= peak - 1e-6 && r[2] > 0.0 && (r[2] - car.doppler_hz).abs() <= 125.0);
        assert!(hit, "car at {d:.1} ns, {:.0} Hz: no positive peak in {bin:?}", car.doppler_hz);
        assert!((1000.0 - 125.0..=1250.0 + 125.0).contains(&car.doppler_hz));
    }
}

#[test]
fn noiseless_los_set_fits_exponent_two() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(dir.path(), &["fit-pathloss", "--count", "8"]);
    assert!((value(&report, "exponent") - 2.0).abs() <= 0.01, "{report}");
    assert_eq!(csv_rows(&dir.path().join("pathloss_points.csv")).len(), 8);
}

#[test]
fn path_loss_points_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("points.csv");
    let fspl = |d: f64| 20.0 * (4.0 * std::f64::consts::PI * d * 27.85e9 / 299_792_458.0).log10();
    let text: String = (1..=6).map(|k| format!("{},{}\n", 10.0 * k as f64, fspl(10.0 * k as f64) + 0.5 * (k as f64).log10() * 10.0)).collect();
    std::fs::write(&points, format!("distance_m,path_loss_db\n{text}")).unwrap();
    let report = ok(dir.path(), &["fit-pathloss", "--points", points.to_str().unwrap(), "--model", "abg"]);
    assert!(report.contains("alpha-beta-gamma"));
    assert!((value(&report, "exponent") - 2.5).abs() < 1e-6, "{report}");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[simulate]\nscenario = \"case2\"\npreset = \"dynamic\"\nsnapshots = 3\ntones = 51\n").unwrap();
    let out = dir.path().join("run");
    ok(&out, &["--config", cfg.to_str().unwrap(), "simulate", "--snapshots", "2"]);
    let rec = read_recording(&out.join("recording.sndr")).unwrap();
    assert_eq!(rec.header.seed, 5);
    assert_eq!(rec.header.snapshot_count, 2);
    assert_eq!(rec.header.waveform.num_tones, 51);
    assert_eq!(rec.header.schedule.tx_beams.len(), 10);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| sounder(d, args).status.code();
    assert_eq!(code(&["simulate", "--scenario", "nowhere"]), Some(2));
    assert_eq!(code(&["waveform", "--tones", "2"]), Some(2));
    assert_eq!(code(&["simulate", "--preset", "weekly"]), Some(2));
    assert_eq!(code(&["analyze", "--recording", d.join("missing.sndr").to_str().unwrap()]), Some(3));

    let bad = d.join("bad.toml");
    std::fs::write(&bad, "seed = \"seven\"\n").unwrap();
    assert_eq!(code(&["--config", bad.to_str().unwrap(), "report"]), Some(4));

    ok(d, &["simulate", "--scenario", "case2", "--preset", "dynamic", "--snapshots", "1", "--tones", "51"]);
    let path = d.join("recording.sndr");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    let corrupt = d.join("corrupt.sndr");
    std::fs::write(&corrupt, &bytes).unwrap();
    assert_eq!(code(&["analyze", "--recording", corrupt.to_str().unwrap()]), Some(4));
    assert_eq!(code(&["report", "--recording", corrupt.to_str().unwrap()]), Some(4));

    // a single-snapshot burst cannot give a Doppler spectrum
    assert_eq!(code(&["analyze", "--doppler"]), Some(2));
    std::fs::remove_file(d.join("calibration.txt")).unwrap();
    assert_eq!(code(&["analyze", "--pdp"]), Some(2));
}
