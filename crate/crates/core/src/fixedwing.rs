//! Simplified fixed-wing surrogate sized like a small flying wing (3.5 kg, 18 m/s trim).
//!
//! Sign conventions: positive elevator is trailing edge down (nose-down moment),
//! positive aileron rolls right, positive rudder yaws right.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{EulerTrig, Vec3};
use crate::multirotor::{integrate, rigid_body_accelerations};
use crate::scalar::Real;
use crate::vehicle::{check_pitch, ControlKind, ControlVector, VehicleState};

/// Airspeed below which the surrogate aerodynamics are not evaluated.
pub const MIN_AIRSPEED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct FixedWingParams<T> {
    pub mass: T,
    pub inertia_diag: Vec3<T>,
    pub reference_area: T,
    pub reference_chord: T,
    pub reference_span: T,
    pub air_density: T,
    pub trim_airspeed: T,
    pub max_thrust: T,
    pub gravity: T,

    pub lift_zero_alpha: T,
    pub lift_slope: T,
    pub drag_zero_lift: T,
    pub induced_drag_factor: T,
    pub side_force_slope: T,

    pub pitch_moment_zero_alpha: T,
    pub pitch_moment_slope: T,
    pub pitch_damping: T,
    pub roll_moment_sideslip: T,
    pub roll_damping: T,
    pub yaw_moment_sideslip: T,
    pub yaw_damping: T,

    /// Per unit command: `[roll moment coeff per aileron, pitch moment coeff per
    /// elevator, thrust fraction per throttle, yaw moment coeff per rudder]`.
    pub control_effectiveness: [T; 4],
}

impl<T: Real> Default for FixedWingParams<T> {
    fn default() -> Self {
        Self {
            mass: T::of(3.5),
            inertia_diag: Vec3::new(T::of(1.23), T::of(0.17), T::of(0.88)),
            reference_area: T::of(0.75),
            reference_chord: T::of(0.36),
            reference_span: T::of(2.1),
            air_density: T::of(1.225),
            trim_airspeed: T::of(18.0),
            max_thrust: T::of(15.0),
            gravity: T::of(9.81),
            lift_zero_alpha: T::of(0.1),
            lift_slope: T::of(4.0),
            drag_zero_lift: T::of(0.03),
            induced_drag_factor: T::of(0.05),
            side_force_slope: T::of(-0.3),
            pitch_moment_zero_alpha: T::of(0.02),
            pitch_moment_slope: T::of(-0.6),
            pitch_damping: T::of(-10.0),
            roll_moment_sideslip: T::of(-0.05),
            roll_damping: T::of(-0.4),
            yaw_moment_sideslip: T::of(0.03),
            yaw_damping: T::of(-0.05),
            control_effectiveness: [T::of(0.15), T::of(-0.3), T::one(), T::of(0.005)],
        }
    }
}

impl<T: Real> FixedWingParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("reference_area", self.reference_area),
            ("reference_chord", self.reference_chord),
            ("reference_span", self.reference_span),
            ("air_density", self.air_density),
            ("trim_airspeed", self.trim_airspeed),
            ("inertia_diag[0]", self.inertia_diag[0]),
            ("inertia_diag[1]", self.inertia_diag[1]),
            ("inertia_diag[2]", self.inertia_diag[2]),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.max_thrust >= T::zero()) {
            return Err(Error::InvalidParam("max_thrust must be >= 0".into()));
        }
        Ok(())
    }
}

/// Body-frame aerodynamic + propulsive + gravity force and moment.
pub fn fw_forces_and_torques<T: Real>(
    state: &VehicleState<T>,
    control: &ControlVector<T>,
    params: &FixedWingParams<T>,
) -> Result<(Vec3<T>, Vec3<T>)> {
    let trig = EulerTrig::new(&state.attitude);
    forces_with_trig(state, control, params, &trig)
}

fn forces_with_trig<T: Real>(
    state: &VehicleState<T>,
    control: &ControlVector<T>,
    p: &FixedWingParams<T>,
    trig: &EulerTrig<T>,
) -> Result<(Vec3<T>, Vec3<T>)> {
    let [u, v, w] = state.velocity.0;
    let airspeed = state.velocity.norm();
    if !(airspeed > T::of(MIN_AIRSPEED)) {
        return Err(Error::ModelDomain(format!(
            "airspeed {airspeed} m/s below {MIN_AIRSPEED} m/s"
        )));
    }
    let alpha = w.atan2(u);
    let beta = (v / airspeed).asin();
    let [ail, elev, tla, rud] = control.channels;
    let [cl_ail, cm_elev, thrust_per_tla, cn_rud] = p.control_effectiveness;
    let [rate_p, rate_q, rate_r] = state.rates.0;
    let two_v = airspeed + airspeed;

    let qbar_s = T::of(0.5) * p.air_density * airspeed * airspeed * p.reference_area;
    let cl = p.lift_zero_alpha + p.lift_slope * alpha;
    let cd = p.drag_zero_lift + p.induced_drag_factor * cl * cl;
    let (lift, drag) = (qbar_s * cl, qbar_s * cd);
    let (sa, ca) = alpha.sin_cos();

    let thrust = tla * thrust_per_tla * p.max_thrust;
    let aero = Vec3::new(
        lift * sa - drag * ca,
        qbar_s * p.side_force_slope * beta,
        -lift * ca - drag * sa,
    );
    let force = aero + Vec3::new(thrust, T::zero(), T::zero()) + trig.gravity_body(p.mass * p.gravity);

    let (b, c) = (p.reference_span, p.reference_chord);
    let roll = p.roll_moment_sideslip * beta + p.roll_damping * rate_p * b / two_v + cl_ail * ail;
    let pitch = p.pitch_moment_zero_alpha
        + p.pitch_moment_slope * alpha
        + p.pitch_damping * rate_q * c / two_v
        + cm_elev * elev;
    let yaw = p.yaw_moment_sideslip * beta + p.yaw_damping * rate_r * b / two_v + cn_rud * rud;
    let torque = Vec3::new(qbar_s * b * roll, qbar_s * c * pitch, qbar_s * b * yaw);
    Ok((force, torque))
}

fn accelerations<T: Real>(
    state: &VehicleState<T>,
    control: &ControlVector<T>,
    params: &FixedWingParams<T>,
    trig: &EulerTrig<T>,
) -> Result<(Vec3<T>, Vec3<T>)> {
    let (force, torque) = forces_with_trig(state, control, params, trig)?;
    Ok(rigid_body_accelerations(
        state,
        &force,
        &torque,
        params.mass,
        &params.inertia_diag,
    ))
}

/// One physics step of the surrogate, using the same semi-implicit Euler scheme as the
/// multi-rotor.
pub fn step_fw<T: Real>(
    state: &VehicleState<T>,
    control: &ControlVector<T>,
    params: &FixedWingParams<T>,
    dt: T,
) -> Result<VehicleState<T>> {
    control.expect_kind(ControlKind::FixedWing)?;
    if !(dt > T::zero()) {
        return Err(Error::InvalidParam(format!("dt = {dt} must be > 0")));
    }
    check_pitch(state.attitude[1])?;
    let trig = EulerTrig::new(&state.attitude);
    let (lin, ang) = accelerations(state, control, params, &trig)?;
    integrate(state, &trig, &lin, &ang, dt)
}

/// Level, wings-level trimmed flight at `trim_airspeed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trim<T> {
    pub state: VehicleState<T>,
    pub control: ControlVector<T>,
    pub residual: T,
    pub iterations: usize,
}

fn trim_state<T: Real>(airspeed: T, pitch: T, position: Vec3<T>) -> VehicleState<T> {
    let (s, c) = pitch.sin_cos();
    VehicleState {
        position,
        velocity: Vec3::new(airspeed * c, T::zero(), airspeed * s),
        attitude: Vec3::new(T::zero(), pitch, T::zero()),
        rates: Vec3::zeros(),
    }
}

fn trim_residual<T: Real>(params: &FixedWingParams<T>, z: [T; 3]) -> Result<[T; 3]> {
    let [pitch, elev, tla] = z;
    let state = trim_state(params.trim_airspeed, pitch, Vec3::zeros());
    let control = ControlVector {
        channels: [T::zero(), elev, tla, T::zero()],
        kind: ControlKind::FixedWing,
    };
    let trig = EulerTrig::new(&state.attitude);
    let (lin, ang) = accelerations(&state, &control, params, &trig)?;
    Ok([lin[0], lin[2], ang[1]])
}

fn solve3<T: Real>(m: [[T; 3]; 3], b: [T; 3]) -> Option<[T; 3]> {
    let det = |m: &[[T; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d == T::zero() || !d.is_finite() {
        return None;
    }
    let mut out = [T::zero(); 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *slot = det(&mc) / d;
    }
    Some(out)
}

/// Damped Newton iteration on (pitch, elevator, throttle) that zeroes forward and
/// vertical acceleration and pitch acceleration. Tolerance `1e-8` on the residual.
pub fn trim<T: Real>(params: &FixedWingParams<T>, position: Vec3<T>) -> Result<Trim<T>> {
    params.validate()?;
    let tol = T::of(1e-8).max(T::epsilon().sqrt());
    let h = T::epsilon().sqrt();
    let mut z = [T::of(0.05), T::zero(), T::of(0.3)];
    let norm = |r: &[T; 3]| r.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let mut r = trim_residual(params, z)?;
    for iteration in 0..100 {
        if norm(&r) < tol {
            return finish_trim(params, position, z, norm(&r), iteration);
        }
        let mut jac = [[T::zero(); 3]; 3];
        for j in 0..3 {
            let mut zp = z;
            zp[j] = zp[j] + h;
            let rp = trim_residual(params, zp)?;
            for i in 0..3 {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let step = solve3(jac, r.map(|v| -v))
            .ok_or_else(|| Error::Numeric("singular trim Jacobian".into()))?;
        let mut damping = T::one();
        loop {
            let cand = [0, 1, 2].map(|k| z[k] + damping * step[k]);
            if let Ok(rc) = trim_residual(params, cand) {
                if norm(&rc) < norm(&r) || damping < T::of(1e-4) {
                    z = cand;
                    r = rc;
                    break;
                }
            }
            damping = damping * T::of(0.5);
            if damping < T::of(1e-6) {
                return Err(Error::Numeric("trim line search failed".into()));
            }
        }
    }
    if norm(&r) < tol {
        return finish_trim(params, position, z, norm(&r), 100);
    }
    Err(Error::Numeric(format!("trim did not converge (residual {})", norm(&r))))
}

fn finish_trim<T: Real>(
    params: &FixedWingParams<T>,
    position: Vec3<T>,
    z: [T; 3],
    residual: T,
    iterations: usize,
) -> Result<Trim<T>> {
    let [pitch, elev, tla] = z;
    let control = ControlVector::fixed_wing([T::zero(), elev, tla, T::zero()]).map_err(|_| {
        Error::ModelDomain(format!("trim controls out of bounds: elev {elev}, tla {tla}"))
    })?;
    Ok(Trim {
        state: trim_state(params.trim_airspeed, pitch, position),
        control,
        residual,
        iterations,
    })
}
