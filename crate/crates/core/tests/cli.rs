use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pavekit(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pavekit"))
        .current_dir(cwd)
        .env_remove("PAVEKIT_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let out = pavekit(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn survey_chain_writes_only_into_the_output_directory() {
    let cwd = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    ok(cwd.path(), &["--out-dir", o, "synth", "road", "--length", "40", "--seed", "3"]);
    let p = |name: &str| out.path().join(name).to_string_lossy().into_owned();
    ok(cwd.path(), &["--out-dir", o, "fuse", "--gps", &p("gps.txt"), "--odo-imu", &p("odo_imu.txt")]);
    ok(
        cwd.path(),
        &[
            "--out-dir",
            o,
            "georef",
            "--scan",
            &p("scan.txt"),
            "--trajectory",
            &p("trajectory.txt"),
            "--mount",
            &p("mount.txt"),
        ],
    );
    ok(
        cwd.path(),
        &[
            "--out-dir",
            o,
            "metrics",
            "--profile",
            &p("profile.txt"),
            "--transverse",
            &p("transverse.txt"),
            "--system-id",
            "van",
        ],
    );
    assert!(names(cwd.path()).is_empty(), "stray files: {:?}", names(cwd.path()));

    let measured = fs::read_to_string(out.path().join("van.csv")).unwrap();
    let truth = fs::read_to_string(out.path().join("truth.csv")).unwrap();
    let measured = pavekit::io::parse_metrics_csv(&measured, "van.csv").unwrap();
    let truth = pavekit::io::parse_metrics_csv(&truth, "truth.csv").unwrap();
    assert_eq!(measured.len(), 2);
    for (m, t) in measured.iter().zip(&truth) {
        assert!((m.crossfall.unwrap() - t.crossfall.unwrap()).abs() < 0.05);
    }
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let cwd = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_pavekit"))
        .current_dir(cwd.path())
        .env("PAVEKIT_OUT_DIR", out.path())
        .args(["synth", "scene", "--seed", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(names(cwd.path()).is_empty());
    assert!(out.path().join("correspondences.txt").exists());
}

#[test]
fn calibrate_reports_a_near_zero_residual_on_clean_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "scene", "--seed", "4", "--points", "30"]);
    ok(d, &["calibrate", "correspondences.txt", "--no-distortion"]);
    let text = fs::read_to_string(d.join("calibration.txt")).unwrap();
    let rms: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("rms "))
        .expect("rms line")
        .trim()
        .parse()
        .unwrap();
    // Files carry 9 significant digits, so pixels near 1280 are quantized
    // to about 6e-6.
    assert!(rms < 1e-5, "{text}");
}

#[test]
fn degrees_flag_matches_radian_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("scan.txt"), "0.5 1 0 0 0.5\n0.5 0 2 -1 0.25\n").unwrap();
    fs::write(d.join("traj_rad.txt"), format!("0 0 0 0 0 0 0\n1 4 0 0 {} 0 0\n", std::f64::consts::FRAC_PI_2)).unwrap();
    fs::write(d.join("traj_deg.txt"), "0 0 0 0 0 0 0\n1 4 0 0 90 0 0\n").unwrap();
    for (unit, traj) in [("rad", "traj_rad.txt"), ("deg", "traj_deg.txt")] {
        fs::create_dir(d.join(unit)).unwrap();
        let mut args = vec!["--out-dir", unit, "georef", "--scan", "scan.txt", "--trajectory", traj];
        if unit == "deg" {
            args.push("--degrees");
        }
        ok(d, &args);
    }
    let rad = fs::read_to_string(d.join("rad/georef_scan.txt")).unwrap();
    let deg = fs::read_to_string(d.join("deg/georef_scan.txt")).unwrap();
    let parse = |s: &str| pavekit::io::parse_scan(s, "georef_scan.txt").unwrap();
    for (a, b) in parse(&rad).iter().zip(parse(&deg).iter()) {
        assert!((a.point - b.point).norm() < 1e-12);
    }
}

#[test]
fn detect_labels_both_road_edges() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "patch", "--scene", "shoulders"]);
    ok(d, &["detect", "--points", "patch.txt"]);
    let csv = fs::read_to_string(d.join("detections.csv")).unwrap();
    let kinds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "edge_left").count(), 1, "{csv}");
    assert_eq!(kinds.iter().filter(|k| **k == "edge_right").count(), 1, "{csv}");
    assert!(fs::read_to_string(d.join("detections.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn harmonize_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "fleet", "--systems", "3", "--segments", "40", "--seed", "2"]);
    let run = |sub: &str| {
        ok(d, &["--out-dir", sub, "harmonize", "system1.csv", "system2.csv", "system3.csv"]);
        fs::read(d.join(sub).join("harmonization.csv")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3);
}

#[test]
fn malformed_input_names_file_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.txt"), "# x y z u v\n1 2 3 4 5\n1 2 oops 4 5\n").unwrap();
    let out = pavekit(d, &["calibrate", "bad.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.txt:3:5"), "{stderr}");
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pavekit(dir.path(), &["metrics"]).status.code(), Some(2));
    assert_eq!(pavekit(dir.path(), &["--help"]).status.code(), Some(0));
}
