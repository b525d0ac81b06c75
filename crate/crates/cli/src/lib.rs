//! `mimic` command-line harness.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mimic_core::config::load_config;
use mimic_core::experiments::{
    compare_logs, default_output_dir, run_experiment, ExperimentSpec, START_ALTITUDE,
};
use mimic_core::fixedwing::{step_fw, trim};
use mimic_core::io::{load_schedule, save_log};
use mimic_core::multirotor::MultiRotorPlant;
use mimic_core::target::ControlSchedule;
use mimic_core::{
    ControlKind, Error, FixedWingParams64, MultiRotorParams64, Trajectory64, Vec3, VehicleState,
};

/// Physics step for the open-loop simulators, s.
const SIM_DT: f64 = 1.0 / 120.0;

#[derive(Debug, Parser)]
#[command(name = "mimic", about = "Quad-rotor mimicry of fixed-wing trajectories")]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Options {
    /// Directory for CSV artifacts (default: $MIMIC_OUTPUT_DIR/<name> or runs/<name>)
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// MPC horizon, seconds
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// MPC control period, seconds
    #[arg(long, global = true)]
    control_dt: Option<f64>,
    /// Add the 1/30 s motor lag to the simulated quad
    #[arg(long, global = true)]
    lag: bool,
    /// Print nothing on success
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a closed-loop experiment from a spec file
    Run { spec: PathBuf },
    /// Position MSE and peak error between two trajectory CSVs
    Compare { a: PathBuf, b: PathBuf },
    /// Open-loop quad simulation from rest under a motor schedule
    SimMr { config: PathBuf, controls: PathBuf },
    /// Open-loop fixed-wing simulation from trim under a surface schedule
    SimFw { config: PathBuf, controls: PathBuf },
    /// Print the version
    Version,
}

/// `%g`-style formatting with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

/// Runs the CLI and returns the process exit code: 0 ok, 1 usage, 2 runtime failure.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    cli_main_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn cli_main_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{e}");
            return 1;
        }
    };
    let mut lines = Vec::new();
    match execute(&cli, &mut lines) {
        Ok(()) => {
            if !cli.opts.quiet {
                for l in lines {
                    let _ = writeln!(out, "{l}");
                }
            }
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn execute(cli: &Cli, out: &mut Vec<String>) -> Result<(), Error> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Version => out.push(env!("CARGO_PKG_VERSION").to_string()),
        Command::Run { spec } => {
            let mut s = ExperimentSpec::load(spec)?;
            if let Some(d) = &opts.output_dir {
                s.output_dir = d.clone();
            }
            if let Some(h) = opts.horizon {
                s.mpc.horizon = h;
            }
            if let Some(dt) = opts.control_dt {
                s.mpc.control_dt = dt;
            }
            s.lag_enabled |= opts.lag;
            let run = run_experiment(&s)?;
            let r = &run.report;
            out.push(format!("name {}", s.name));
            out.push(format!("output_dir {}", s.output_dir.display()));
            push_mse(out, r.mse_xyz);
            out.push(format!("peak_position_error {}", fmt_g(r.peak_position_error)));
            out.push(format!("mean_optimizer_iterations {}", fmt_g(r.mean_optimizer_iterations)));
            out.push(format!("control_variance {}", fmt_g(r.control_variance)));
            for i in &r.saturation_intervals {
                out.push(format!("saturation c{} {} {}", i.channel, fmt_g(i.start), fmt_g(i.end)));
            }
            out.push(format!("wall_time {}", fmt_g(r.wall_time)));
        }
        Command::Compare { a, b } => {
            let c = compare_logs(a, b)?;
            push_mse(out, c.mse_xyz);
            out.push(format!("peak_position_error {}", fmt_g(c.peak_position_error)));
        }
        Command::SimMr { config, controls } => {
            let mut params: MultiRotorParams64 = load_config(config)?;
            if opts.lag && params.lag_time_constant == 0.0 {
                params.lag_time_constant = mimic_core::experiments::LAG_TIME_CONSTANT;
            }
            let schedule = load_schedule(controls, ControlKind::MultiRotor)?;
            let mut plant = MultiRotorPlant::new(params, VehicleState::at_rest(Vec3::zeros()))?;
            plant.settle_motors(&schedule.controls[0]);
            let traj = fly(&schedule, plant.state, |u, dt, _| plant.advance(u, dt).copied())?;
            finish_sim(opts, "sim-mr", &traj, out)?;
        }
        Command::SimFw { config, controls } => {
            let params: FixedWingParams64 = load_config(config)?;
            let schedule = load_schedule(controls, ControlKind::FixedWing)?;
            let t = trim(&params, Vec3::new(0.0, 0.0, -START_ALTITUDE))?;
            let traj = fly(&schedule, t.state, |u, dt, s| step_fw(s, u, &params, dt))?;
            finish_sim(opts, "sim-fw", &traj, out)?;
        }
    }
    Ok(())
}

fn push_mse(out: &mut Vec<String>, m: Vec3<f64>) {
    out.push(format!("mse_x {}", fmt_g(m.x())));
    out.push(format!("mse_y {}", fmt_g(m.y())));
    out.push(format!("mse_z {}", fmt_g(m.z())));
}

/// Zero-order-hold integration of a schedule at the fixed physics step, sampled at
/// the schedule period.
fn fly(
    schedule: &ControlSchedule<f64>,
    start: VehicleState<f64>,
    mut advance: impl FnMut(&mimic_core::ControlVector64, f64, &VehicleState<f64>) -> Result<VehicleState<f64>, Error>,
) -> Result<Trajectory64, Error> {
    let substeps = (schedule.dt / SIM_DT).round().max(1.0) as usize;
    let dt = schedule.dt / substeps as f64;
    let mut state = start;
    let mut states = vec![state];
    for (k, u) in schedule.controls.iter().enumerate() {
        for j in 0..substeps {
            let t = schedule.start_time + schedule.dt * k as f64 + dt * j as f64;
            state = advance(u, dt, &state).map_err(|e| e.at(t))?;
        }
        states.push(state);
    }
    Trajectory64::new(schedule.dt, schedule.start_time, states, schedule.controls.clone())
}

fn finish_sim(opts: &Options, name: &str, traj: &Trajectory64, out: &mut Vec<String>) -> Result<(), Error> {
    let dir = opts.output_dir.clone().unwrap_or_else(|| default_output_dir(name));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("trajectory.csv");
    save_log(traj, &path)?;
    let last = traj.states.last().unwrap();
    out.push(format!("trajectory {}", display(&path)));
    out.push(format!("end_time {}", fmt_g(traj.end_time())));
    let p = last.position;
    out.push(format!("final_position {} {} {}", fmt_g(p.x()), fmt_g(p.y()), fmt_g(p.z())));
    let a = last.attitude;
    out.push(format!("final_attitude {} {} {}", fmt_g(a.x()), fmt_g(a.y()), fmt_g(a.z())));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
