//! Closed-loop experiment harness: target generation, lock-step platform simulation
//! under the MPC, metrics and CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{load_config, parse_config};
use crate::error::{Error, Result};
use crate::fixedwing::{step_fw, trim, FixedWingParams};
use crate::frame::{EulerTrig, Vec3};
use crate::io::{load_log, load_schedule, save_log};
use crate::mpc::{MpcConfig, SaturationMask, MimicController};
use crate::multirotor::{MultiRotorParams, MultiRotorPlant};
use crate::target::{
    disturbance_sequence, rollout_target, steps_for, ControlSchedule, DisturbanceKind,
    FixedWingModel, TargetSource,
};
use crate::vehicle::{mse_per_axis, ControlKind, ControlVector, Trajectory, VehicleState};

/// Un-modelled motor lag applied to the plant when `lag_enabled` is set, seconds.
pub const LAG_TIME_CONSTANT: f64 = 1.0 / 30.0;
/// Default root for run artifacts when a spec names no output directory.
pub const OUTPUT_DIR_ENV: &str = "MIMIC_OUTPUT_DIR";
/// Altitude of the synthetic targets, m.
pub const START_ALTITUDE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Hover,
    PitchDisturbance,
    RollDisturbance,
    /// Any trajectory CSV; the last state is held past the end of the log.
    LogReplay(PathBuf),
    /// Fixed-wing control schedule CSV flown from trim.
    Custom(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    #[default]
    Mpc,
    /// Open-loop baseline: every motor held at the hover command.
    FrozenHover,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    pub duration: f64,
    pub disturbance_start: f64,
    pub lag_enabled: bool,
    pub output_dir: PathBuf,
    pub controller: ControllerMode,
    /// Start every solve from zeros instead of the shifted previous solution.
    pub cold_start: bool,
    pub multirotor: MultiRotorParams<f64>,
    pub fixedwing: FixedWingParams<f64>,
    pub mpc: MpcConfig<f64>,
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, scenario: Scenario, duration: f64) -> Self {
        let name = name.into();
        Self {
            output_dir: default_output_dir(&name),
            name,
            scenario,
            duration,
            disturbance_start: 5.0,
            lag_enabled: false,
            controller: ControllerMode::Mpc,
            cold_start: false,
            multirotor: MultiRotorParams::default(),
            fixedwing: FixedWingParams::default(),
            mpc: MpcConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidParam(format!("duration {} must be > 0", self.duration)));
        }
        if matches!(self.scenario, Scenario::PitchDisturbance | Scenario::RollDisturbance)
            && !(self.disturbance_start >= 0.0 && self.disturbance_start < self.duration)
        {
            return Err(Error::InvalidParam(format!(
                "disturbance_start {} must lie in [0, duration)",
                self.disturbance_start
            )));
        }
        self.multirotor.validate()?;
        self.fixedwing.validate()?;
        self.mpc.validate()
    }

    /// Reads a flat key-value spec file. Relative paths resolve against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: SpecFile = parse_config(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let rel = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let need_path = |what: &str| {
            raw.path.as_deref().map(rel).ok_or_else(|| Error::Config {
                path: path.to_path_buf(),
                msg: format!("scenario {what} needs a `path` key"),
            })
        };
        let scenario = match raw.scenario.as_str() {
            "hover" => Scenario::Hover,
            "pitch" | "pitch-disturbance" => Scenario::PitchDisturbance,
            "roll" | "roll-disturbance" => Scenario::RollDisturbance,
            "log" | "log-replay" => Scenario::LogReplay(need_path("log")?),
            "custom" => Scenario::Custom(need_path("custom")?),
            other => {
                return Err(Error::Config {
                    path: path.to_path_buf(),
                    msg: format!("unknown scenario {other:?}"),
                })
            }
        };
        let mut spec = Self::new(raw.name, scenario, raw.duration);
        if let Some(d) = raw.disturbance_start {
            spec.disturbance_start = d;
        }
        spec.lag_enabled = raw.lag_enabled;
        spec.controller = raw.controller;
        spec.cold_start = raw.cold_start;
        if let Some(dir) = raw.output_dir {
            spec.output_dir = rel(&dir);
        }
        if let Some(p) = raw.multirotor_config {
            spec.multirotor = load_config(rel(&p))?;
        }
        if let Some(p) = raw.fixedwing_config {
            spec.fixedwing = load_config(rel(&p))?;
        }
        if let Some(p) = raw.mpc_config {
            spec.mpc = load_config(rel(&p))?;
        }
        if let Some(h) = raw.horizon {
            spec.mpc.horizon = h;
        }
        if let Some(dt) = raw.control_dt {
            spec.mpc.control_dt = dt;
        }
        if let Some(n) = raw.physics_substeps {
            spec.mpc.physics_substeps = n;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    name: String,
    scenario: String,
    path: Option<PathBuf>,
    duration: f64,
    disturbance_start: Option<f64>,
    #[serde(default)]
    lag_enabled: bool,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    controller: ControllerMode,
    #[serde(default)]
    cold_start: bool,
    multirotor_config: Option<PathBuf>,
    fixedwing_config: Option<PathBuf>,
    mpc_config: Option<PathBuf>,
    horizon: Option<f64>,
    control_dt: Option<f64>,
    physics_substeps: Option<usize>,
}

pub fn default_output_dir(name: &str) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(name),
        _ => PathBuf::from("runs").join(name),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationInterval {
    pub channel: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mse_xyz: Vec3<f64>,
    pub peak_position_error: f64,
    /// Spans where a motor command sat on its upper bound.
    pub saturation_intervals: Vec<SaturationInterval>,
    pub mean_optimizer_iterations: f64,
    /// Sample variance of the applied motor commands, averaged over channels.
    pub control_variance: f64,
    /// Not written to `report.csv` so repeated runs stay byte-identical.
    pub wall_time: f64,
}

/// One applied control tick of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlRecord {
    pub time: f64,
    pub control: ControlVector<f64>,
    pub saturation: SaturationMask,
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: RunReport,
    pub target: Trajectory<f64>,
    pub platform: Trajectory<f64>,
    pub controls: Vec<ControlRecord>,
}

impl ExperimentRun {
    pub fn position_errors(&self) -> Vec<f64> {
        self.target
            .states
            .iter()
            .zip(&self.platform.states)
            .map(|(a, b)| (a.position - b.position).norm())
            .collect()
    }
}

/// Target trajectory at control-step spacing covering `[0, duration + horizon]`.
pub fn build_target(spec: &ExperimentSpec) -> Result<Trajectory<f64>> {
    let cfg = &spec.mpc;
    let span = spec.duration + cfg.horizon;
    let physics_dt = cfg.physics_dt();
    let start = Vec3::new(0.0, 0.0, -START_ALTITUDE);
    let model = |schedule: ControlSchedule<f64>, initial_state| {
        TargetSource::Model(FixedWingModel {
            params: spec.fixedwing,
            initial_state,
            schedule,
            physics_dt,
        })
    };
    let source = match &spec.scenario {
        Scenario::Hover => {
            TargetSource::recorded(Trajectory::from_states(span, 0.0, vec![VehicleState::at_rest(start)])?, true)?
        }
        Scenario::PitchDisturbance | Scenario::RollDisturbance => {
            let t = trim(&spec.fixedwing, start)?;
            let base = ControlSchedule::constant(t.control, physics_dt, span + physics_dt)?;
            let kind = if spec.scenario == Scenario::PitchDisturbance {
                DisturbanceKind::Pitch
            } else {
                DisturbanceKind::Roll
            };
            model(
                disturbance_sequence(&base, kind, spec.disturbance_start, physics_dt)?,
                t.state,
            )
        }
        Scenario::LogReplay(path) => TargetSource::recorded(load_log(path)?, true)?,
        Scenario::Custom(path) => {
            let t = trim(&spec.fixedwing, start)?;
            let mut schedule = load_schedule(path, ControlKind::FixedWing)?;
            // hold the final command so the last horizon is covered
            let last = *schedule.controls.last().unwrap();
            let extra = steps_for(span - (schedule.end_time() - schedule.start_time), schedule.dt);
            schedule.controls.extend(std::iter::repeat_n(last, extra + 1));
            model(schedule, t.state)
        }
    };
    let from = match &source {
        TargetSource::RecordedLog { log, .. } => log.start_time,
        TargetSource::Model(m) => m.schedule.start_time,
    };
    let mut traj = rollout_target(&source, from, span, cfg.control_dt)?;
    traj.start_time = 0.0;
    Ok(traj)
}

/// Level platform co-located with the target, moving with the target's world velocity.
pub fn matched_platform_state(target: &VehicleState<f64>) -> VehicleState<f64> {
    let attitude = Vec3::new(0.0, 0.0, target.attitude.z());
    let world = target.world_velocity();
    VehicleState {
        position: target.position,
        velocity: EulerTrig::new(&attitude).world_to_body(&world),
        attitude,
        rates: Vec3::zeros(),
    }
}

/// Runs a scenario without touching the filesystem.
pub fn simulate(spec: &ExperimentSpec) -> Result<ExperimentRun> {
    spec.validate()?;
    let started = Instant::now();
    let cfg = spec.mpc;
    let horizon_steps = cfg.steps()?;
    let n = steps_for(spec.duration, cfg.control_dt);
    let target_full = build_target(spec)?;
    if target_full.len() < n + horizon_steps + 1 {
        return Err(Error::Range(format!(
            "target covers {} samples, run needs {}",
            target_full.len(),
            n + horizon_steps + 1
        )));
    }

    let mut plant_params = spec.multirotor;
    if spec.lag_enabled && plant_params.lag_time_constant == 0.0 {
        plant_params.lag_time_constant = LAG_TIME_CONSTANT;
    }
    if !spec.lag_enabled {
        plant_params.lag_time_constant = 0.0;
    }
    let hover = ControlVector::multirotor([spec.multirotor.hover_command().min(1.0); 4])?;
    let mut plant = MultiRotorPlant::new(plant_params, matched_platform_state(&target_full.states[0]))?;
    plant.settle_motors(&hover);
    let mut controller = MimicController::new(plant_params, cfg)?;
    controller.always_cold_start = spec.cold_start;
    let source = TargetSource::recorded(target_full.clone(), true)?;

    let physics_dt = cfg.physics_dt();
    let mut platform_states = Vec::with_capacity(n + 1);
    let mut records = Vec::with_capacity(n);
    for k in 0..n {
        let now = cfg.control_dt * k as f64;
        platform_states.push(plant.state);
        let record = match spec.controller {
            ControllerMode::Mpc => {
                controller.observe_motors(plant.motors);
                let (u, plan) = controller
                    .control_step(&plant.state, &source, now)
                    .map_err(|e| e.at(now))?;
                ControlRecord {
                    time: now,
                    control: u,
                    saturation: plan.saturation[0],
                    iterations: plan.optimizer_iterations,
                    converged: plan.converged,
                    cost: plan.cost,
                }
            }
            ControllerMode::FrozenHover => ControlRecord {
                time: now,
                control: hover,
                saturation: SaturationMask::of(&hover.channels, &cfg.control_lower, &cfg.control_upper),
                iterations: 0,
                converged: true,
                cost: f64::NAN,
            },
        };
        for j in 0..cfg.physics_substeps {
            plant
                .advance(&record.control, physics_dt)
                .map_err(|e| e.at(now + physics_dt * j as f64))?;
        }
        records.push(record);
    }
    platform_states.push(plant.state);

    let mut target = target_full;
    target.states.truncate(n + 1);
    target.controls.truncate(n);
    let platform = Trajectory::new(
        cfg.control_dt,
        0.0,
        platform_states,
        records.iter().map(|r| r.control).collect(),
    )?;
    let report = build_report(&target, &platform, &records, spec.duration, cfg.control_dt)?;
    Ok(ExperimentRun {
        report: RunReport {
            wall_time: started.elapsed().as_secs_f64(),
            ..report
        },
        target,
        platform,
        controls: records,
    })
}

fn build_report(
    target: &Trajectory<f64>,
    platform: &Trajectory<f64>,
    records: &[ControlRecord],
    duration: f64,
    control_dt: f64,
) -> Result<RunReport> {
    let cmp = compare_trajectories(target, platform)?;
    let mut intervals = Vec::new();
    for ch in 0..4 {
        let mut open: Option<f64> = None;
        for r in records {
            let sat = r.saturation.upper_channel(ch);
            match (sat, open) {
                (true, None) => open = Some(r.time),
                (false, Some(s)) => {
                    intervals.push(SaturationInterval { channel: ch, start: s, end: r.time });
                    open = None;
                }
                _ => {}
            }
        }
        if let (Some(s), Some(last)) = (open, records.last()) {
            let end = (last.time + control_dt).min(duration);
            intervals.push(SaturationInterval { channel: ch, start: s, end });
        }
    }
    let iterations = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.iterations as f64).sum::<f64>() / records.len() as f64
    };
    let control_variance = if records.len() < 2 {
        0.0
    } else {
        let m = records.len() as f64;
        (0..4)
            .map(|ch| {
                let mean = records.iter().map(|r| r.control.channels[ch]).sum::<f64>() / m;
                records
                    .iter()
                    .map(|r| (r.control.channels[ch] - mean).powi(2))
                    .sum::<f64>()
                    / (m - 1.0)
            })
            .sum::<f64>()
            / 4.0
    };
    Ok(RunReport {
        mse_xyz: cmp.mse_xyz,
        peak_position_error: cmp.peak_position_error,
        saturation_intervals: intervals,
        mean_optimizer_iterations: iterations,
        control_variance,
        wall_time: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub mse_xyz: Vec3<f64>,
    pub peak_position_error: f64,
}

pub fn compare_trajectories(a: &Trajectory<f64>, b: &Trajectory<f64>) -> Result<Comparison> {
    let mse_xyz = mse_per_axis(a, b)?;
    let peak_position_error = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x.position - y.position).norm())
        .fold(0.0, f64::max);
    Ok(Comparison {
        mse_xyz,
        peak_position_error,
    })
}

/// Position MSE and peak error between two trajectory CSV files.
pub fn compare_logs(a: impl AsRef<Path>, b: impl AsRef<Path>) -> Result<Comparison> {
    compare_trajectories(&load_log(a)?, &load_log(b)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn controls_csv(records: &[ControlRecord]) -> String {
    let mut out = String::from("t,c0,c1,c2,c3,sat_lower,sat_upper,iterations,converged,cost\n");
    for r in records {
        let c = r.control.channels;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.time,
            c[0],
            c[1],
            c[2],
            c[3],
            r.saturation.lower,
            r.saturation.upper,
            r.iterations,
            u8::from(r.converged),
            r.cost
        ));
    }
    out
}

pub fn report_csv(spec: &ExperimentSpec, report: &RunReport) -> String {
    let mut rows = vec![
        ("name".to_string(), spec.name.clone()),
        ("duration".into(), spec.duration.to_string()),
        ("lag_enabled".into(), spec.lag_enabled.to_string()),
        ("mse_x".into(), report.mse_xyz.x().to_string()),
        ("mse_y".into(), report.mse_xyz.y().to_string()),
        ("mse_z".into(), report.mse_xyz.z().to_string()),
        ("peak_position_error".into(), report.peak_position_error.to_string()),
        ("mean_optimizer_iterations".into(), report.mean_optimizer_iterations.to_string()),
        ("control_variance".into(), report.control_variance.to_string()),
    ];
    for ch in 0..4 {
        let spans: Vec<String> = report
            .saturation_intervals
            .iter()
            .filter(|s| s.channel == ch)
            .map(|s| format!("{}-{}", s.start, s.end))
            .collect();
        rows.push((format!("saturation_c{ch}"), spans.join(";")));
    }
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

/// Runs the scenario and writes `target.csv`, `platform.csv`, `controls.csv` and
/// `report.csv` into `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentRun> {
    let run = simulate(spec)?;
    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_log(&run.target, dir.join("target.csv"))?;
    save_log(&run.platform, dir.join("platform.csv"))?;
    write_text(&dir.join("controls.csv"), &controls_csv(&run.controls))?;
    write_text(&dir.join("report.csv"), &report_csv(spec, &run.report))?;
    Ok(run)
}

/// One segment of the synthetic target's attitude-hold flight plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightSegment {
    pub start: f64,
    pub bank: f64,
    pub pitch: f64,
    pub throttle: f64,
}

/// Flies the fixed-wing surrogate from trim through an attitude-hold flight plan and
/// records states and surface commands every `sample_dt`.
pub fn fly_flight_plan(
    params: &FixedWingParams<f64>,
    plan: &[FlightSegment],
    duration: f64,
    sample_dt: f64,
    physics_dt: f64,
) -> Result<Trajectory<f64>> {
    let t0 = trim(params, Vec3::new(0.0, 0.0, -START_ALTITUDE))?;
    let per_sample = (sample_dt / physics_dt).round().max(1.0) as usize;
    let samples = steps_for(duration, sample_dt);
    let mut state = t0.state;
    let mut states = Vec::with_capacity(samples + 1);
    let mut controls = Vec::with_capacity(samples);
    for j in 0..samples * per_sample {
        let t = j as f64 * physics_dt;
        let seg = plan.iter().rev().find(|s| s.start <= t + 1e-9);
        let u = match seg {
            None => t0.control,
            Some(s) => {
                let [roll, pitch, _] = state.attitude.0;
                let [p, q, _] = state.rates.0;
                let ail = 2.0 * (s.bank - roll) - 0.5 * p;
                // negative elevator pitches nose up
                let elev = t0.control.channels[1] - (3.0 * (s.pitch - pitch) - 0.6 * q);
                ControlVector::clamped(ControlKind::FixedWing, [ail, elev, s.throttle, 0.0])
            }
        };
        if j % per_sample == 0 {
            states.push(state);
            controls.push(u);
        }
        state = step_fw(&state, &u, params, physics_dt).map_err(|e| e.at(t))?;
    }
    states.push(state);
    Trajectory::new(sample_dt, 0.0, states, controls)
}

/// 60 s climbing left turn with a level-out, sampled at 10 Hz: the stand-in for a
/// recorded flight log.
pub fn climbing_turn_log(params: &FixedWingParams<f64>) -> Result<Trajectory<f64>> {
    let plan = [
        FlightSegment { start: 5.0, bank: -0.35, pitch: 0.12, throttle: 0.75 },
        FlightSegment { start: 45.0, bank: 0.0, pitch: 0.04, throttle: 0.45 },
    ];
    fly_flight_plan(params, &plan, 60.0, 0.1, 1.0 / 120.0)
}

/// Steep banked pull-up: holding altitude through a 60 degree turn while climbing needs
/// more than twice the platform's weight in thrust, beyond a 2:1 quad.
pub fn aggressive_climbing_turn_log(params: &FixedWingParams<f64>, duration: f64) -> Result<Trajectory<f64>> {
    let plan = [
        FlightSegment { start: 3.0, bank: -1.1, pitch: 0.3, throttle: 1.0 },
        FlightSegment { start: 8.0, bank: 0.0, pitch: 0.03, throttle: 0.45 },
    ];
    fly_flight_plan(params, &plan, duration, 0.1, 1.0 / 120.0)
}
