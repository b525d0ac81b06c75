//! Trajectory and control-schedule CSV files.
//!
//! Trajectory header: `t,x,y,z,u,v,w,roll,pitch,yaw,p,q,r[,c0,c1,c2,c3]`. Values are
//! written in shortest round-trip form so `load(save(x))` reproduces every state
//! exactly. Rows must be uniformly spaced in time (within 1e-6 s).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::target::ControlSchedule;
use crate::vehicle::{ControlKind, ControlVector, Trajectory, VehicleState, CONTROL_DIM, STATE_DIM};

pub const STATE_COLUMNS: [&str; 13] = [
    "t", "x", "y", "z", "u", "v", "w", "roll", "pitch", "yaw", "p", "q", "r",
];
pub const CONTROL_COLUMNS: [&str; 4] = ["c0", "c1", "c2", "c3"];

const DT_TOLERANCE: f64 = 1e-6;

fn parse_err(path: &Path, row: usize, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        line,
        msg: msg.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, line.saturating_sub(1), line, format!("{other:?}")),
    }
}

fn write_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config {
            path: path.to_path_buf(),
            msg: format!("{other:?}"),
        },
    }
}

/// Writes a trajectory; when `controls` has one fewer entry than `states`, the last
/// row's control cells are left empty.
pub fn save_log<T: Real>(traj: &Trajectory<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    traj.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_log(traj, file).map_err(|e| write_err(path, e))
}

pub fn write_log<T: Real, W: Write>(traj: &Trajectory<T>, out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let with_controls = !traj.controls.is_empty();
    let mut header: Vec<&str> = STATE_COLUMNS.to_vec();
    if with_controls {
        header.extend(CONTROL_COLUMNS);
    }
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (i, s) in traj.states.iter().enumerate() {
        row.clear();
        row.push(traj.time_at(i).to_string());
        row.extend(s.to_array().iter().map(|v| v.to_string()));
        if with_controls {
            match traj.controls.get(i) {
                Some(c) => row.extend(c.channels.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), CONTROL_DIM)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_value<T: Real>(path: &Path, row: usize, line: usize, col: &str, s: &str) -> Result<T> {
    let v: T = s
        .trim()
        .parse()
        .map_err(|_| parse_err(path, row, line, format!("column {col}: cannot parse {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, row, line, format!("column {col}: non-finite value {s}")));
    }
    Ok(v)
}

/// Infers the uniform sample period from the time column.
fn uniform_dt<T: Real>(path: &Path, times: &[(T, usize)]) -> Result<T> {
    if times.len() < 2 {
        return Err(parse_err(path, times.len(), times.len() + 1, "need at least two rows to infer dt"));
    }
    let (t0, _) = times[0];
    let (tn, _) = times[times.len() - 1];
    let dt = (tn - t0) / T::from_usize(times.len() - 1).unwrap();
    if !(dt > T::zero()) {
        return Err(parse_err(path, 2, times[1].1, "time column is not increasing"));
    }
    let tol = T::of(DT_TOLERANCE);
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1].0 - w[0].0;
        if !(step > T::zero()) {
            return Err(parse_err(path, i + 2, w[1].1, "time column is not increasing"));
        }
        if (step - dt).abs() > tol {
            return Err(parse_err(
                path,
                i + 2,
                w[1].1,
                format!("non-uniform time step {step} (expected {dt})"),
            ));
        }
    }
    Ok(dt)
}

/// Reads a trajectory CSV. Control columns, when present, are tagged multi-rotor if
/// every value lies in `[0, 1]` and fixed-wing otherwise.
pub fn load_log<T: Real>(path: impl AsRef<Path>) -> Result<Trajectory<T>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let with_controls = if names == STATE_COLUMNS {
        false
    } else if names.len() == 17 && names[..13] == STATE_COLUMNS && names[13..] == CONTROL_COLUMNS {
        true
    } else {
        return Err(parse_err(path, 0, 1, format!("unexpected header {names:?}")));
    };

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut raw_controls: Vec<[T; CONTROL_DIM]> = Vec::new();
    let mut missing_controls_at = None;
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(row + 1);
        if rec.len() != names.len() {
            return Err(parse_err(
                path,
                row,
                line,
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        let t = parse_value::<T>(path, row, line, "t", &rec[0])?;
        let mut arr = [T::zero(); STATE_DIM];
        for k in 0..STATE_DIM {
            arr[k] = parse_value(path, row, line, STATE_COLUMNS[k + 1], &rec[k + 1])?;
        }
        if let Some(prev) = missing_controls_at {
            return Err(parse_err(path, row, line, format!("control cells missing on row {prev} before the last row")));
        }
        if with_controls {
            if (13..17).all(|k| rec[k].trim().is_empty()) {
                missing_controls_at = Some(row);
            } else {
                let mut c = [T::zero(); CONTROL_DIM];
                for k in 0..CONTROL_DIM {
                    c[k] = parse_value(path, row, line, CONTROL_COLUMNS[k], &rec[13 + k])?;
                }
                raw_controls.push(c);
            }
        }
        times.push((t, line));
        states.push(VehicleState::from_array(&arr));
    }
    let dt = uniform_dt(path, &times)?;
    let kind = if raw_controls.iter().flatten().all(|&v| v >= T::zero() && v <= T::one()) {
        ControlKind::MultiRotor
    } else {
        ControlKind::FixedWing
    };
    let controls = raw_controls
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            ControlVector::new(kind, c).map_err(|e| {
                let (_, line) = times[i];
                parse_err(path, i + 1, line, e.to_string())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(dt, times[0].0, states, controls)
}

/// Control schedule CSV with header `t,c0,c1,c2,c3` (further columns ignored, so a
/// run's `controls.csv` can be replayed); row `i` applies from its `t` until the next row.
pub fn load_schedule<T: Real>(path: impl AsRef<Path>, kind: ControlKind) -> Result<ControlSchedule<T>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 5 || names[..5] != ["t", "c0", "c1", "c2", "c3"] {
        return Err(parse_err(path, 0, 1, format!("unexpected header {names:?}")));
    }
    let mut times = Vec::new();
    let mut controls = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(row + 1);
        if rec.len() != names.len() {
            return Err(parse_err(
                path,
                row,
                line,
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        let t = parse_value::<T>(path, row, line, "t", &rec[0])?;
        let mut c = [T::zero(); CONTROL_DIM];
        for k in 0..CONTROL_DIM {
            c[k] = parse_value(path, row, line, CONTROL_COLUMNS[k], &rec[k + 1])?;
        }
        controls.push(ControlVector::new(kind, c).map_err(|e| parse_err(path, row, line, e.to_string()))?);
        times.push((t, line));
    }
    let dt = uniform_dt(path, &times)?;
    ControlSchedule::new(dt, times[0].0, controls)
}

pub fn save_schedule<T: Real>(schedule: &ControlSchedule<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    let run = |w: &mut csv::Writer<File>| -> Result<(), csv::Error> {
        w.write_record(["t", "c0", "c1", "c2", "c3"])?;
        for (i, c) in schedule.controls.iter().enumerate() {
            let t = schedule.start_time + schedule.dt * T::from_usize(i).unwrap();
            let mut row = vec![t.to_string()];
            row.extend(c.channels.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| write_err(path, e))
}
