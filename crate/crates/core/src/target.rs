//! Target-side providers: control schedules, disturbance injection, and target
//! trajectory rollout from either the fixed-wing surrogate or a recorded log.

use crate::error::{Error, Result};
use crate::fixedwing::{step_fw, FixedWingParams};
use crate::frame::Vec3;
use crate::scalar::Real;
use crate::vehicle::{wrap_angle, ControlKind, ControlVector, Trajectory, VehicleState};

/// Deflection applied by a disturbance, as a fraction of full travel.
pub const DISTURBANCE_DEFLECTION: f64 = 0.5;
/// Disturbance duration, seconds.
pub const DISTURBANCE_DURATION: f64 = 0.2;

/// Relative slack used when converting times to sample indices.
const TIME_SLACK: f64 = 1e-9;

pub(crate) fn steps_for<T: Real>(duration: T, dt: T) -> usize {
    (duration / dt - T::of(TIME_SLACK)).ceil().max(T::zero()).to_usize().unwrap_or(0)
}

/// Zero-order-hold control sequence: `controls[i]` applies on `[start + i dt, start + (i+1) dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule<T> {
    pub dt: T,
    pub start_time: T,
    pub controls: Vec<ControlVector<T>>,
}

impl<T: Real> ControlSchedule<T> {
    pub fn new(dt: T, start_time: T, controls: Vec<ControlVector<T>>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidParam(format!("schedule dt = {dt} must be > 0")));
        }
        if controls.is_empty() {
            return Err(Error::InvalidParam("empty control schedule".into()));
        }
        Ok(Self {
            dt,
            start_time,
            controls,
        })
    }

    /// Constant schedule covering at least `duration` seconds.
    pub fn constant(control: ControlVector<T>, dt: T, duration: T) -> Result<Self> {
        let n = steps_for(duration, dt).max(1);
        Self::new(dt, T::zero(), vec![control; n])
    }

    pub fn end_time(&self) -> T {
        self.start_time + self.dt * T::from_usize(self.controls.len()).unwrap()
    }

    fn index_of(&self, t: T) -> Option<usize> {
        let s = (t - self.start_time) / self.dt + T::of(TIME_SLACK);
        if s < T::zero() {
            return None;
        }
        s.floor().to_usize()
    }

    /// Control active at time `t`; `None` outside the schedule.
    pub fn sample(&self, t: T) -> Option<&ControlVector<T>> {
        self.index_of(t).and_then(|i| self.controls.get(i))
    }

    pub fn kind(&self) -> ControlKind {
        self.controls[0].kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceKind {
    /// Up elevator (negative deflection).
    Pitch,
    /// Left aileron (negative deflection).
    Roll,
}

/// Overrides the elevator (pitch) or aileron (roll) channel with −0.5 for
/// `ceil(0.2 / dt)` samples starting at `start`.
pub fn disturbance_sequence<T: Real>(
    base: &ControlSchedule<T>,
    kind: DisturbanceKind,
    start: T,
    dt: T,
) -> Result<ControlSchedule<T>> {
    if base.kind() != ControlKind::FixedWing {
        return Err(Error::Kind {
            expected: ControlKind::FixedWing.name(),
            got: base.kind().name(),
        });
    }
    if (dt - base.dt).abs() > T::of(TIME_SLACK) * base.dt {
        return Err(Error::Dimension(format!(
            "disturbance dt {dt} does not match schedule dt {}",
            base.dt
        )));
    }
    let first = base
        .index_of(start)
        .filter(|&i| i < base.controls.len())
        .ok_or_else(|| {
            Error::Range(format!(
                "disturbance start {start} outside schedule [{}, {})",
                base.start_time,
                base.end_time()
            ))
        })?;
    let channel = match kind {
        DisturbanceKind::Pitch => 1,
        DisturbanceKind::Roll => 0,
    };
    let count = steps_for(T::of(DISTURBANCE_DURATION), dt);
    let mut out = base.clone();
    for c in out.controls.iter_mut().skip(first).take(count) {
        c.channels[channel] = -T::of(DISTURBANCE_DEFLECTION);
    }
    Ok(out)
}

/// Fixed-wing surrogate flown open-loop through a control schedule.
#[derive(Debug, Clone)]
pub struct FixedWingModel<T> {
    pub params: FixedWingParams<T>,
    /// State at `schedule.start_time`.
    pub initial_state: VehicleState<T>,
    pub schedule: ControlSchedule<T>,
    /// Integration step; rollout sample periods must be multiples of it.
    pub physics_dt: T,
}

#[derive(Debug, Clone)]
pub enum TargetSource<T> {
    Model(FixedWingModel<T>),
    RecordedLog {
        log: Trajectory<T>,
        /// Hold the final state when a window runs past the end of the log.
        hold_last: bool,
    },
}

impl<T: Real> TargetSource<T> {
    pub fn recorded(log: Trajectory<T>, hold_last: bool) -> Result<Self> {
        log.validate()?;
        if log.is_empty() {
            return Err(Error::InvalidParam("recorded log has no states".into()));
        }
        Ok(Self::RecordedLog { log, hold_last })
    }
}

fn ratio_to_count<T: Real>(num: T, den: T, what: &str) -> Result<usize> {
    let r = num / den;
    let n = r.round();
    if (r - n).abs() > T::of(1e-6) || n < T::zero() {
        return Err(Error::InvalidParam(format!(
            "{what} ({num}) is not a multiple of the physics step ({den})"
        )));
    }
    Ok(n.to_usize().unwrap())
}

fn lerp_state<T: Real>(a: &VehicleState<T>, b: &VehicleState<T>, f: T) -> VehicleState<T> {
    let mix = |x: Vec3<T>, y: Vec3<T>| x + (y - x) * f;
    let mut att = a.attitude;
    for k in 0..3 {
        let d = if k == 1 {
            b.attitude[k] - a.attitude[k]
        } else {
            wrap_angle(b.attitude[k] - a.attitude[k])
        };
        att[k] = a.attitude[k] + d * f;
        if k != 1 {
            att[k] = wrap_angle(att[k]);
        }
    }
    VehicleState {
        position: mix(a.position, b.position),
        velocity: mix(a.velocity, b.velocity),
        attitude: att,
        rates: mix(a.rates, b.rates),
    }
}

/// Target trajectory over `[from_time, from_time + horizon]` sampled every `dt`;
/// `ceil(horizon / dt) + 1` states.
pub fn rollout_target<T: Real>(
    source: &TargetSource<T>,
    from_time: T,
    horizon: T,
    dt: T,
) -> Result<Trajectory<T>> {
    if !(horizon > T::zero()) || !(dt > T::zero()) {
        return Err(Error::InvalidParam(format!(
            "horizon ({horizon}) and dt ({dt}) must be > 0"
        )));
    }
    let n = steps_for(horizon, dt);
    match source {
        TargetSource::Model(model) => rollout_model(model, from_time, n, dt),
        TargetSource::RecordedLog { log, hold_last } => {
            let mut states = Vec::with_capacity(n + 1);
            let last = log.len() - 1;
            for k in 0..=n {
                let t = from_time + dt * T::from_usize(k).unwrap();
                let s = (t - log.start_time) / log.dt;
                if s < -T::of(1e-6) {
                    return Err(Error::Range(format!(
                        "t = {t} precedes log start {}",
                        log.start_time
                    )));
                }
                let s = s.max(T::zero());
                let i = s.floor().to_usize().unwrap_or(usize::MAX);
                let state = if i >= last {
                    if s - T::from_usize(last).unwrap() > T::of(1e-6) && !hold_last {
                        return Err(Error::Range(format!(
                            "t = {t} past log end {}",
                            log.end_time()
                        )));
                    }
                    log.states[last]
                } else {
                    let f = s - T::from_usize(i).unwrap();
                    if f == T::zero() {
                        log.states[i]
                    } else {
                        lerp_state(&log.states[i], &log.states[i + 1], f)
                    }
                };
                states.push(state);
            }
            Trajectory::from_states(dt, from_time, states)
        }
    }
}

fn rollout_model<T: Real>(
    model: &FixedWingModel<T>,
    from_time: T,
    n: usize,
    dt: T,
) -> Result<Trajectory<T>> {
    let pdt = model.physics_dt;
    if !(pdt > T::zero()) {
        return Err(Error::InvalidParam("physics_dt must be > 0".into()));
    }
    let t0 = model.schedule.start_time;
    if from_time < t0 - T::of(1e-9) {
        return Err(Error::Range(format!("t = {from_time} precedes schedule start {t0}")));
    }
    let lead = ratio_to_count(from_time - t0, pdt, "rollout start")?;
    let per_sample = ratio_to_count(dt, pdt, "sample period")?.max(1);
    let total = lead + n * per_sample;
    let end = t0 + pdt * T::from_usize(total).unwrap();
    if end > model.schedule.end_time() + T::of(1e-9) * model.schedule.dt.max(T::one()) {
        return Err(Error::Range(format!(
            "window end {end} beyond schedule end {}",
            model.schedule.end_time()
        )));
    }
    let mut state = model.initial_state;
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    for j in 0..total {
        let t = t0 + pdt * T::from_usize(j).unwrap();
        let u = *model
            .schedule
            .sample(t)
            .ok_or_else(|| Error::Range(format!("no control scheduled at t = {t}")))?;
        if j >= lead && (j - lead) % per_sample == 0 {
            states.push(state);
            controls.push(u);
        }
        state = step_fw(&state, &u, &model.params, pdt).map_err(|e| e.at(t.to_f64_lossy()))?;
    }
    states.push(state);
    Trajectory::new(dt, from_time, states, controls)
}
