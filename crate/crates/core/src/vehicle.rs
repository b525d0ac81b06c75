//! Vehicle state, control and trajectory containers, plus the trajectory error metrics.
//!
//! World frame is NED (x north, y east, z down; altitude is `-z`). Linear velocity and
//! angular rates are body-frame quantities; attitude is roll/pitch/yaw (ZYX Euler).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Vec3;
use crate::scalar::Real;

pub const STATE_DIM: usize = 12;
pub const CONTROL_DIM: usize = 4;

/// Half-width of the pitch band around ±π/2 where Euler kinematics are rejected.
pub const PITCH_SINGULARITY_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VehicleState<T> {
    /// NED position, m.
    pub position: Vec3<T>,
    /// Body-frame velocity (u, v, w), m/s.
    pub velocity: Vec3<T>,
    /// Roll, pitch, yaw, rad.
    pub attitude: Vec3<T>,
    /// Body rates (p, q, r), rad/s.
    pub rates: Vec3<T>,
}

impl<T: Real> VehicleState<T> {
    pub fn at_rest(position: Vec3<T>) -> Self {
        Self {
            position,
            ..Self::zeroed()
        }
    }

    pub fn zeroed() -> Self {
        Self {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            attitude: Vec3::zeros(),
            rates: Vec3::zeros(),
        }
    }

    /// Flattens to `[x, y, z, u, v, w, roll, pitch, yaw, p, q, r]`.
    pub fn to_array(&self) -> [T; STATE_DIM] {
        let mut out = [T::zero(); STATE_DIM];
        for k in 0..3 {
            out[k] = self.position[k];
            out[3 + k] = self.velocity[k];
            out[6 + k] = self.attitude[k];
            out[9 + k] = self.rates[k];
        }
        out
    }

    pub fn from_array(a: &[T; STATE_DIM]) -> Self {
        Self {
            position: Vec3([a[0], a[1], a[2]]),
            velocity: Vec3([a[3], a[4], a[5]]),
            attitude: Vec3([a[6], a[7], a[8]]),
            rates: Vec3([a[9], a[10], a[11]]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Checks finiteness and that the attitude is stored wrapped and away from the
    /// pitch singularity.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::Numeric(format!("state {:?}", self.to_array())));
        }
        let pi = T::PI();
        for k in [0, 2] {
            let a = self.attitude[k];
            if a < -pi || a >= pi {
                return Err(Error::Range(format!(
                    "attitude[{k}] = {a} not wrapped into [-pi, pi)"
                )));
            }
        }
        check_pitch(self.attitude[1])
    }

    /// NED velocity obtained by rotating the body velocity.
    pub fn world_velocity(&self) -> Vec3<T> {
        crate::frame::EulerTrig::new(&self.attitude).body_to_world(&self.velocity)
    }
}

pub(crate) fn check_pitch<T: Real>(pitch: T) -> Result<()> {
    let limit = T::FRAC_PI_2() - T::of(PITCH_SINGULARITY_MARGIN);
    if pitch.abs() > limit {
        return Err(Error::Singularity {
            pitch: pitch.to_f64_lossy(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlKind {
    /// Per-motor thrust fractions `T0..T3`, each in `[0, 1]`.
    MultiRotor,
    /// `[ail, elev, tla, rud]`; surfaces in `[-1, 1]`, throttle in `[0, 1]`.
    FixedWing,
}

impl ControlKind {
    pub fn name(self) -> &'static str {
        match self {
            ControlKind::MultiRotor => "multi-rotor",
            ControlKind::FixedWing => "fixed-wing",
        }
    }

    pub fn bounds<T: Real>(self) -> ([T; CONTROL_DIM], [T; CONTROL_DIM]) {
        let (z, o) = (T::zero(), T::one());
        match self {
            ControlKind::MultiRotor => ([z; 4], [o; 4]),
            ControlKind::FixedWing => ([-o, -o, z, -o], [o; 4]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ControlVector<T> {
    pub channels: [T; CONTROL_DIM],
    pub kind: ControlKind,
}

impl<T: Real> ControlVector<T> {
    /// Validating constructor.
    pub fn new(kind: ControlKind, channels: [T; CONTROL_DIM]) -> Result<Self> {
        let (lo, hi) = kind.bounds::<T>();
        for (i, &c) in channels.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::Numeric(format!("control channel {i} = {c}")));
            }
            if c < lo[i] || c > hi[i] {
                return Err(Error::Range(format!(
                    "{} channel {i} = {c} outside [{}, {}]",
                    kind.name(),
                    lo[i],
                    hi[i]
                )));
            }
        }
        Ok(Self { channels, kind })
    }

    pub fn multirotor(channels: [T; CONTROL_DIM]) -> Result<Self> {
        Self::new(ControlKind::MultiRotor, channels)
    }

    pub fn fixed_wing(channels: [T; CONTROL_DIM]) -> Result<Self> {
        Self::new(ControlKind::FixedWing, channels)
    }

    /// Projects arbitrary channel values onto the bounds of `kind`.
    pub fn clamped(kind: ControlKind, channels: [T; CONTROL_DIM]) -> Self {
        let (lo, hi) = kind.bounds::<T>();
        let mut c = channels;
        for i in 0..CONTROL_DIM {
            c[i] = c[i].max(lo[i]).min(hi[i]);
        }
        Self { channels: c, kind }
    }

    pub fn hover() -> Self {
        Self {
            channels: [T::of(0.5); 4],
            kind: ControlKind::MultiRotor,
        }
    }

    pub fn expect_kind(&self, kind: ControlKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Kind {
                expected: kind.name(),
                got: self.kind.name(),
            });
        }
        Ok(())
    }
}

/// Uniformly sampled states and/or controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub dt: T,
    pub start_time: T,
    pub states: Vec<VehicleState<T>>,
    pub controls: Vec<ControlVector<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(
        dt: T,
        start_time: T,
        states: Vec<VehicleState<T>>,
        controls: Vec<ControlVector<T>>,
    ) -> Result<Self> {
        let traj = Self {
            dt,
            start_time,
            states,
            controls,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn from_states(dt: T, start_time: T, states: Vec<VehicleState<T>>) -> Result<Self> {
        Self::new(dt, start_time, states, Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParam(format!("dt = {} must be > 0", self.dt)));
        }
        if !self.start_time.is_finite() {
            return Err(Error::Numeric("start_time".into()));
        }
        let (ns, nc) = (self.states.len(), self.controls.len());
        if ns > 0 && nc > 0 && nc != ns && nc + 1 != ns {
            return Err(Error::Dimension(format!(
                "{nc} controls for {ns} states (expected {ns} or {})",
                ns - 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time_at(&self, index: usize) -> T {
        self.start_time + self.dt * T::from_usize(index).unwrap()
    }

    pub fn end_time(&self) -> T {
        self.time_at(self.states.len().saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CostWeights<T> {
    pub state_weights: [T; STATE_DIM],
    pub control_weight: T,
}

impl<T: Real> Default for CostWeights<T> {
    /// Position-only tracking with a 0.5 penalty on every thrust channel.
    fn default() -> Self {
        let mut w = [T::zero(); STATE_DIM];
        w[0] = T::one();
        w[1] = T::one();
        w[2] = T::one();
        Self {
            state_weights: w,
            control_weight: T::of(0.5),
        }
    }
}

impl<T: Real> CostWeights<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self
            .state_weights
            .iter()
            .chain(std::iter::once(&self.control_weight))
            .all(|w| w.is_finite() && *w >= T::zero());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam("cost weights must be finite and >= 0".into()))
        }
    }

    /// Weighted squared difference of two states. Roll and yaw differences are taken
    /// on the circle.
    pub fn state_error(&self, a: &VehicleState<T>, b: &VehicleState<T>) -> T {
        let (xa, xb) = (a.to_array(), b.to_array());
        let mut acc = T::zero();
        for k in 0..STATE_DIM {
            let w = self.state_weights[k];
            if w == T::zero() {
                continue;
            }
            let mut d = xa[k] - xb[k];
            if k == 6 || k == 8 {
                d = wrap_angle(d);
            }
            acc = acc + w * d * d;
        }
        acc
    }

    /// `control_weight · Σ (u - reference)²`.
    pub fn control_cost(&self, u: &[T], reference: T) -> T {
        self.control_weight
            * u.iter().fold(T::zero(), |acc, &c| {
                let d = c - reference;
                acc + d * d
            })
    }
}

fn check_comparable<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "trajectory lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension("empty trajectories".into()));
    }
    let tol = T::of(1e-9) * a.dt.max(b.dt);
    if (a.dt - b.dt).abs() > tol {
        return Err(Error::Dimension(format!(
            "sample periods differ: {} vs {}",
            a.dt, b.dt
        )));
    }
    Ok(())
}

/// Mean squared position error along x, y and z.
pub fn mse_per_axis<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<Vec3<T>> {
    check_comparable(a, b)?;
    let mut acc = Vec3::zeros();
    for (sa, sb) in a.states.iter().zip(&b.states) {
        let d = sa.position - sb.position;
        acc += d.hadamard(&d);
    }
    Ok(acc * (T::one() / T::from_usize(a.len()).unwrap()))
}

/// Trajectory loss: sum over samples of the weighted squared state error.
pub fn loss_s_tau<T: Real>(
    a: &Trajectory<T>,
    b: &Trajectory<T>,
    weights: &CostWeights<T>,
) -> Result<T> {
    check_comparable(a, b)?;
    Ok(a.states
        .iter()
        .zip(&b.states)
        .fold(T::zero(), |acc, (sa, sb)| acc + weights.state_error(sa, sb)))
}

/// Wraps an angle into `[-π, π)`. Values already in range are returned unchanged.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let pi = T::PI();
    if a >= -pi && a < pi {
        return a;
    }
    let two_pi = pi + pi;
    let mut w = a - two_pi * ((a + pi) / two_pi).floor();
    if w >= pi {
        w = w - two_pi;
    }
    if w < -pi {
        w = w + two_pi;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedAttitude<T> {
    pub attitude: Vec3<T>,
    /// Set when pitch had to be clamped into `[-π/2, π/2]`.
    pub pitch_out_of_range: bool,
}

pub fn wrap_attitude<T: Real>(raw: Vec3<T>) -> Result<WrappedAttitude<T>> {
    if !raw.is_finite() {
        return Err(Error::Numeric(format!("attitude {:?}", raw.0)));
    }
    let half_pi = T::FRAC_PI_2();
    let pitch = raw[1];
    let clamped = pitch.max(-half_pi).min(half_pi);
    Ok(WrappedAttitude {
        attitude: Vec3([wrap_angle(raw[0]), clamped, wrap_angle(raw[2])]),
        pitch_out_of_range: clamped != pitch,
    })
}
