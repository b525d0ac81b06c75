//! Acceptance suite. Run with `--nocapture` to see one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mimic_core::experiments::{
    aggressive_climbing_turn_log, simulate, ControllerMode, ExperimentRun, ExperimentSpec, Scenario,
};
use mimic_core::io::{load_log, save_log};
use mimic_core::mpc::{plan, MpcConfig, SaturationMask};
use mimic_core::multirotor::{apply_lag, step, MotorState, MultiRotorParams};
use mimic_core::optimizer::{minimize, BoxBounds, OptimizerConfig};
use mimic_core::{ControlVector, FixedWingParams64, Trajectory, Vec3, VehicleState};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = (bool, String);

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn scenario(name: &str) -> ExperimentSpec {
    ExperimentSpec::load(repo(&format!("scenarios/{name}.toml"))).unwrap()
}

fn total(m: Vec3<f64>) -> f64 {
    m.x() + m.y() + m.z()
}

fn free_fall_error(dt: f64) -> f64 {
    let mut p = MultiRotorParams::<f64>::default();
    p.linear_drag_coeffs = Vec3::zeros();
    let mut s = VehicleState::zeroed();
    let off = MotorState::new([0.0; 4]);
    let n = (2.0 / dt).round() as usize;
    for _ in 0..n {
        s = step(&s, &off, &p, dt).unwrap();
    }
    (s.position.z() - 0.5 * p.gravity * 4.0).abs()
}

fn integrator() -> Outcome {
    let t0 = Instant::now();
    let dt = 1.0 / 120.0;
    let e1 = free_fall_error(dt);
    let e2 = free_fall_error(dt / 2.0);
    let secs = t0.elapsed().as_secs_f64();
    let bound = 9.81 * 2.0 * dt;
    let ratio = e1 / e2;
    (
        e1 < bound && (ratio - 2.0).abs() < 0.05 && secs < 1.0,
        format!("error {e1:.5} m (bound {bound:.4}), halving dt ratio {ratio:.4}, {secs:.3} s"),
    )
}

fn hover() -> Outcome {
    let p = MultiRotorParams::<f64>::default();
    let mut s = VehicleState::at_rest(Vec3::new(0.0, 0.0, -10.0));
    let m = MotorState::new([0.5; 4]);
    let mut drift: f64 = 0.0;
    for _ in 0..600 {
        let n = step(&s, &m, &p, 1.0 / 120.0).unwrap();
        let d = n.to_array().iter().zip(s.to_array()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        drift = drift.max(d);
        s = n;
    }
    let run = simulate(&scenario("hover")).unwrap();
    let peak = run.report.peak_position_error;
    let t2w = p.thrust_to_weight();
    (
        (t2w - 2.0).abs() < 1e-12 && drift < 1e-9 && peak < 0.1,
        format!("T/W {t2w}, max drift/step {drift:.2e}, closed-loop 5 s peak error {peak:.2e} m"),
    )
}

fn lag_filter() -> Outcome {
    let dt = 1.0 / 120.0;
    let tl = 1.0 / 30.0;
    let one = ControlVector::multirotor([1.0, 0.0, 0.25, 0.75]).unwrap();
    let y1 = apply_lag(&MotorState::new([0.0; 4]), &one, dt, tl).unwrap();
    let a = y1.effective_commands[0];
    let y0 = [0.2, 0.9, 0.5, 0.5];
    let mut y = MotorState::new(y0);
    let mut worst: f64 = 0.0;
    for n in 1..=200 {
        y = apply_lag(&y, &one, dt, tl).unwrap();
        for i in 0..4 {
            let closed = one.channels[i] + (y0[i] - one.channels[i]) * 0.8f64.powi(n);
            worst = worst.max((y.effective_commands[i] - closed).abs());
        }
    }
    (
        (a - 0.2).abs() < 1e-15 && worst < 1e-12,
        format!("a = {a}, worst deviation from closed form {worst:.2e}"),
    )
}

fn optimizer_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let n = 40;
    let bounds = BoxBounds::uniform(n, 0.0, 1.0).unwrap();
    let cfg = OptimizerConfig::<f64> { cost_tolerance: 1e-14, max_iterations: 500, ..Default::default() };
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..100 {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = |x: &[f64]| x.iter().zip(&w).zip(&c).map(|((x, w), c)| w * (x - c).powi(2)).sum::<f64>();
        let m = minimize(f, &x0, &bounds, &cfg).unwrap();
        for i in 0..n {
            worst = worst.max((m.x[i] - c[i].clamp(0.0, 1.0)).abs());
        }
        monotone &= m.history.windows(2).all(|h| h[1] <= h[0]);
    }
    (
        worst < 1e-5 && monotone,
        format!("100 problems, n = 40: worst deviation from clipping {worst:.2e}, monotone {monotone}"),
    )
}

fn bound_invariant() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let p = MultiRotorParams::<f64>::default();
    let mut cfg = MpcConfig::<f64>::default();
    cfg.optimizer.max_iterations = 8;
    let mut plans = 0;
    let mut violations = 0;
    let mut mask_errors = 0;
    let mut saturated = 0;
    while plans < 1000 {
        let mut s = VehicleState::at_rest(Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-20.0..-5.0)));
        s.velocity = Vec3::new(rng.gen_range(-8.0..8.0), rng.gen_range(-4.0..4.0), rng.gen_range(-3.0..3.0));
        s.attitude = Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-3.0..3.0));
        s.rates = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let goal = s.position + Vec3::new(rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0));
        let target = Trajectory::from_states(0.1, 0.0, vec![VehicleState::at_rest(goal); 11]).unwrap();
        let warm: Vec<ControlVector<f64>> = if rng.gen_bool(0.5) {
            Vec::new()
        } else {
            (0..10)
                .map(|_| ControlVector::multirotor([(); 4].map(|_| rng.gen_range(0.0..1.0))).unwrap())
                .collect()
        };
        let r = plan(&s, &target, &warm, &p, &cfg).unwrap();
        plans += 1;
        for (c, m) in r.control_sequence.iter().zip(&r.saturation) {
            if !c.channels.iter().all(|x| (0.0..=1.0).contains(x)) {
                violations += 1;
            }
            if *m != SaturationMask::of(&c.channels, &[0.0; 4], &[1.0; 4]) {
                mask_errors += 1;
            }
            saturated += usize::from(m.any());
        }
    }
    (
        violations == 0 && mask_errors == 0,
        format!("{plans} plans: {violations} out-of-bounds, {mask_errors} mask mismatches, {saturated} saturated steps"),
    )
}

fn pitch_runs() -> (ExperimentRun, ExperimentRun, f64) {
    let t0 = Instant::now();
    let closed = simulate(&scenario("pitch")).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let mut frozen = scenario("pitch");
    frozen.controller = ControllerMode::FrozenHover;
    (closed, simulate(&frozen).unwrap(), secs)
}

fn disturbance_tracking() -> Outcome {
    let (closed, frozen, secs) = pitch_runs();
    let (c, f) = (&closed.report, &frozen.report);
    let ratio = f.mse_xyz.z() / c.mse_xyz.z();
    (
        c.peak_position_error.is_finite() && c.peak_position_error < f.peak_position_error && ratio >= 10.0 && secs < 300.0,
        format!(
            "mse_z {:.3e} vs frozen-hover {:.3e} (x{ratio:.0}), peak {:.3} m vs {:.1} m, {secs:.1} s",
            c.mse_xyz.z(),
            f.mse_xyz.z(),
            c.peak_position_error,
            f.peak_position_error
        ),
    )
}

fn saturation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let log = aggressive_climbing_turn_log(&FixedWingParams64::default(), 25.0).unwrap();
    let path = dir.path().join("aggressive.csv");
    save_log(&log, &path).unwrap();
    let run = simulate(&ExperimentSpec::new("aggressive", Scenario::LogReplay(path), 24.0)).unwrap();
    let spans = &run.report.saturation_intervals;
    let Some(first) = spans.iter().map(|s| s.start).reduce(f64::min) else {
        return (false, "no saturation interval".into());
    };
    let errors = run.position_errors();
    let onset = (first / 0.1).round() as usize;
    let before = errors[..=onset].iter().cloned().fold(0.0, f64::max);
    let end = *errors.last().unwrap();
    let peak = run.report.peak_position_error;
    (
        end < 2.0 * before,
        format!(
            "{} intervals from t = {first:.1} s, error before {before:.3} m, peak {peak:.2} m, end {end:.4} m",
            spans.len()
        ),
    )
}

fn lag_robustness() -> Outcome {
    let base = simulate(&scenario("pitch")).unwrap().report;
    let lag = simulate(&scenario("pitch_lag")).unwrap().report;
    let change = (total(lag.mse_xyz) / total(base.mse_xyz) - 1.0).abs();
    // companion run, reported for context only
    let mut roll = scenario("roll");
    let r0 = simulate(&roll).unwrap().report;
    roll.lag_enabled = true;
    let r1 = simulate(&roll).unwrap().report;
    let roll_change = total(r1.mse_xyz) / total(r0.mse_xyz) - 1.0;
    (
        change < 0.10 && lag.control_variance > base.control_variance,
        format!(
            "pitch MSE {:.4e} -> {:.4e} ({:+.1}%), control variance {:.4e} -> {:.4e}; roll MSE change {:+.1}%",
            total(base.mse_xyz),
            total(lag.mse_xyz),
            100.0 * (total(lag.mse_xyz) / total(base.mse_xyz) - 1.0),
            base.control_variance,
            lag.control_variance,
            100.0 * roll_change
        ),
    )
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn warm_start() -> Outcome {
    let mut spec = ExperimentSpec::new("warm", Scenario::PitchDisturbance, 2.0);
    spec.disturbance_start = 0.5;
    let warm = simulate(&spec).unwrap();
    spec.cold_start = true;
    let cold = simulate(&spec).unwrap();
    let its = |r: &ExperimentRun| r.controls.iter().map(|c| c.iterations).collect::<Vec<_>>();
    let (w, c) = (median(its(&warm)), median(its(&cold)));
    (
        warm.controls.len() == 20 && w <= c,
        format!("20 steps: median iterations warm {w} vs cold {c}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = scenario("pitch");
    spec.duration = 3.0;
    spec.disturbance_start = 1.0;
    let mut identical = true;
    let mut outputs = Vec::new();
    for k in 0..2 {
        spec.output_dir = dir.path().join(format!("run{k}"));
        mimic_core::experiments::run_experiment(&spec).unwrap();
        outputs.push(spec.output_dir.clone());
    }
    for f in ["target.csv", "platform.csv", "controls.csv", "report.csv"] {
        identical &= std::fs::read(outputs[0].join(f)).unwrap() == std::fs::read(outputs[1].join(f)).unwrap();
    }
    let traj: Trajectory<f64> = load_log(repo("crates/core/fixtures/climbing_turn.csv")).unwrap();
    let path = dir.path().join("round.csv");
    save_log(&traj, &path).unwrap();
    let back: Trajectory<f64> = load_log(&path).unwrap();
    let mut worst: f64 = (back.dt - traj.dt).abs();
    for (a, b) in traj.states.iter().zip(&back.states) {
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            worst = worst.max((x - y).abs());
        }
    }
    for (a, b) in traj.controls.iter().zip(&back.controls) {
        for (x, y) in a.channels.iter().zip(b.channels) {
            worst = worst.max((x - y).abs());
        }
    }
    let same_shape = back.len() == traj.len() && back.controls.len() == traj.controls.len();
    (
        identical && same_shape && worst < 1e-12,
        format!("artifacts identical {identical}, CSV round-trip worst deviation {worst:.1e}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("integrator correctness", integrator),
        ("hover fixed point", hover),
        ("lag filter", lag_filter),
        ("optimizer oracle equivalence", optimizer_oracle),
        ("bound invariant", bound_invariant),
        ("disturbance tracking", disturbance_tracking),
        ("saturation behavior", saturation),
        ("lag robustness", lag_robustness),
        ("warm-start property", warm_start),
        ("determinism and round-trip", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        println!("{} {:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
        if !ok {
            failed.push(format!("{} {name}", i + 1));
        }
    }
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
