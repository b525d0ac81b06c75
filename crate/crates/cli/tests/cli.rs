use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mimic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimic"))
        .args(args)
        .env_remove("MIMIC_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix(' '))
        .unwrap_or_else(|| panic!("{key} missing in {out}"))
        .parse()
        .unwrap()
}

#[test]
fn version_prints_semver() {
    let o = mimic(&["version"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout(&o);
    assert_eq!(v.trim().split('.').count(), 3);
}

#[test]
fn missing_spec_is_a_runtime_error() {
    let o = mimic(&["run", "missing.spec"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("missing.spec") && err.to_lowercase().contains("no such file"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = mimic(&["compare", "a.csv", "b.csv", "--fast"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert!(o.stdout.is_empty());
}

#[test]
fn compare_identical_logs_reports_zero() {
    let f = repo_file("crates/core/fixtures/climbing_turn.csv");
    let o = mimic(&["compare", f.to_str().unwrap(), f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for k in ["mse_x", "mse_y", "mse_z", "peak_position_error"] {
        assert_eq!(value(&out, k), 0.0);
    }
}

#[test]
fn run_hover_spec_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = repo_file("scenarios/hover.toml");
    let out_dir = dir.path().join("hover");
    let o = mimic(&[
        "run",
        spec.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--horizon",
        "0.5",
        "--lag",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(value(&out, "mse_z") < 0.01);
    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(report.contains("lag_enabled,true"));
    // report values agree with an external comparison of the written logs
    let t = out_dir.join("target.csv");
    let p = out_dir.join("platform.csv");
    let c = stdout(&mimic(&["compare", t.to_str().unwrap(), p.to_str().unwrap()]));
    assert_eq!(value(&out, "mse_x"), value(&c, "mse_x"));
    for line in fs::read_to_string(out_dir.join("controls.csv")).unwrap().lines().skip(1) {
        for v in line.split(',').skip(1).take(4) {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn output_dir_defaults_to_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let spec = repo_file("scenarios/hover.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_mimic"))
        .args(["run", spec.to_str().unwrap(), "--quiet", "--horizon", "0.3"])
        .env("MIMIC_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(dir.path().join("hover/report.csv").is_file());
}

#[test]
fn sim_mr_hover_schedule_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quad.toml");
    fs::write(&cfg, "mass = 1.5\n").unwrap();
    let sched = dir.path().join("u.csv");
    let mut text = String::from("t,c0,c1,c2,c3\n");
    for k in 0..20 {
        text.push_str(&format!("{},0.5,0.5,0.5,0.5\n", k as f64 * 0.1));
    }
    fs::write(&sched, text).unwrap();
    let out_dir = dir.path().join("mr");
    let o = mimic(&["sim-mr", cfg.to_str().unwrap(), sched.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("final_position 0 0 0"), "{out}");
    assert!(out.contains("end_time 2"));
    assert!(out_dir.join("trajectory.csv").is_file());
}

#[test]
fn sim_mr_rejects_fixed_wing_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quad.toml");
    fs::write(&cfg, "").unwrap();
    let sched = dir.path().join("u.csv");
    fs::write(&sched, "t,c0,c1,c2,c3\n0,-0.5,0,0.5,0\n0.1,-0.5,0,0.5,0\n").unwrap();
    let o = mimic(&["sim-mr", cfg.to_str().unwrap(), sched.to_str().unwrap(), "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sim_fw_trim_schedule_holds_altitude() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fw.toml");
    fs::write(&cfg, "trim_airspeed = 18.0\n").unwrap();
    // find trim through the library so the schedule holds level flight
    let p = mimic_core::FixedWingParams64::default();
    let t = mimic_core::fixedwing::trim(&p, mimic_core::Vec3::new(0.0, 0.0, -100.0)).unwrap();
    let c = t.control.channels;
    let mut text = String::from("t,c0,c1,c2,c3\n");
    for k in 0..30 {
        text.push_str(&format!("{},{},{},{},{}\n", k as f64 * 0.1, c[0], c[1], c[2], c[3]));
    }
    let sched = dir.path().join("u.csv");
    fs::write(&sched, text).unwrap();
    let o = mimic(&["sim-fw", cfg.to_str().unwrap(), sched.to_str().unwrap(), "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let traj: mimic_core::Trajectory64 = mimic_core::io::load_log(dir.path().join("trajectory.csv")).unwrap();
    let last = traj.states.last().unwrap();
    assert!((last.position.z() + 100.0).abs() < 0.05);
    assert!((last.position.x() - 18.0 * 3.0).abs() < 0.5);
}
