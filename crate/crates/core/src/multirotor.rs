//! Quad-rotor plant: linear motor thrust in X configuration, linear drag, gravity,
//! semi-implicit Euler integration and the first-order motor lag.
//!
//! Motor layout (body frame, x forward, y right, z down), `d = arm_length / √2`:
//!
//! | motor | position   | spin sign |
//! |-------|------------|-----------|
//! | 0     | (+d, +d)   | +1        |
//! | 1     | (−d, −d)   | +1        |
//! | 2     | (+d, −d)   | −1        |
//! | 3     | (−d, +d)   | −1        |
//!
//! The yaw reaction torque is `torque_coefficient · Σ spin_i · thrust_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{EulerTrig, Vec3};
use crate::scalar::Real;
use crate::vehicle::{check_pitch, wrap_angle, ControlKind, ControlVector, VehicleState};

const MOTOR_SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
const SPIN: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct MultiRotorParams<T> {
    pub mass: T,
    pub inertia_diag: Vec3<T>,
    pub arm_length: T,
    pub max_thrust_per_motor: T,
    pub torque_coefficient: T,
    pub linear_drag_coeffs: Vec3<T>,
    pub angular_drag_coeffs: Vec3<T>,
    pub gravity: T,
    /// Motor lag time constant; zero disables the filter.
    pub lag_time_constant: T,
}

impl<T: Real> Default for MultiRotorParams<T> {
    /// 1.5 kg quad with thrust-to-weight exactly 2.
    fn default() -> Self {
        let mass = T::of(1.5);
        let gravity = T::of(9.81);
        Self {
            mass,
            inertia_diag: Vec3::new(T::of(0.02), T::of(0.02), T::of(0.04)),
            arm_length: T::of(0.25),
            max_thrust_per_motor: T::of(0.5) * mass * gravity,
            torque_coefficient: T::of(0.02),
            linear_drag_coeffs: Vec3([T::of(0.1); 3]),
            angular_drag_coeffs: Vec3([T::of(0.01); 3]),
            gravity,
            lag_time_constant: T::zero(),
        }
    }
}

impl<T: Real> MultiRotorParams<T> {
    pub fn thrust_to_weight(&self) -> T {
        T::of(4.0) * self.max_thrust_per_motor / (self.mass * self.gravity)
    }

    /// Channel value at which four equal motors exactly cancel gravity.
    pub fn hover_command(&self) -> T {
        T::one() / self.thrust_to_weight()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("max_thrust_per_motor", self.max_thrust_per_motor),
            ("inertia_diag[0]", self.inertia_diag[0]),
            ("inertia_diag[1]", self.inertia_diag[1]),
            ("inertia_diag[2]", self.inertia_diag[2]),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} = {v} must be > 0")));
            }
        }
        let non_negative = self
            .linear_drag_coeffs
            .0
            .iter()
            .chain(self.angular_drag_coeffs.0.iter())
            .chain([self.lag_time_constant, self.gravity, self.torque_coefficient].iter())
            .all(|v| v.is_finite() && *v >= T::zero());
        if !non_negative {
            return Err(Error::InvalidParam(
                "drag coefficients, gravity, torque coefficient and lag must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Lag-filtered motor commands actually seen by the thrust model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorState<T> {
    pub effective_commands: [T; 4],
}

impl<T: Real> MotorState<T> {
    pub fn new(effective_commands: [T; 4]) -> Self {
        Self { effective_commands }
    }

    pub fn from_control(u: &ControlVector<T>) -> Self {
        Self::new(u.channels)
    }
}

/// First-order lag `y_t = (1 - a) y_{t-1} + a u_t` with `a = dt / (dt + T_lag)`.
pub fn apply_lag<T: Real>(
    prev: &MotorState<T>,
    raw: &ControlVector<T>,
    dt: T,
    lag_time_constant: T,
) -> Result<MotorState<T>> {
    raw.expect_kind(ControlKind::MultiRotor)?;
    if !(dt > T::zero()) || !(lag_time_constant >= T::zero()) {
        return Err(Error::InvalidParam(format!(
            "lag filter needs dt > 0 and T_lag >= 0 (dt = {dt}, T_lag = {lag_time_constant})"
        )));
    }
    let a = dt / (dt + lag_time_constant);
    let mut y = [T::zero(); 4];
    for i in 0..4 {
        let (p, u) = (prev.effective_commands[i], raw.channels[i]);
        let v = (T::one() - a) * p + a * u;
        // rounding must not leave the segment [p, u]
        y[i] = v.max(p.min(u)).min(p.max(u));
    }
    Ok(MotorState::new(y))
}

/// Body-frame force (thrust + drag + gravity) and torque (thrust moments + yaw
/// reaction + rotational drag).
pub fn forces_and_torques<T: Real>(
    state: &VehicleState<T>,
    motors: &MotorState<T>,
    params: &MultiRotorParams<T>,
) -> (Vec3<T>, Vec3<T>) {
    let trig = EulerTrig::new(&state.attitude);
    forces_with_trig(state, motors, params, &trig)
}

fn forces_with_trig<T: Real>(
    state: &VehicleState<T>,
    motors: &MotorState<T>,
    params: &MultiRotorParams<T>,
    trig: &EulerTrig<T>,
) -> (Vec3<T>, Vec3<T>) {
    let moment_arm = params.arm_length * T::FRAC_1_SQRT_2();
    let mut total_thrust = T::zero();
    let mut torque = Vec3::zeros();
    for i in 0..4 {
        let f = motors.effective_commands[i] * params.max_thrust_per_motor;
        let (sx, sy) = MOTOR_SIGNS[i];
        total_thrust = total_thrust + f;
        // r x (0, 0, -f) with r = (rx, ry, 0)
        torque[0] = torque[0] - T::of(sy) * moment_arm * f;
        torque[1] = torque[1] + T::of(sx) * moment_arm * f;
        torque[2] = torque[2] + T::of(SPIN[i]) * params.torque_coefficient * f;
    }
    let weight = trig.gravity_body(params.mass * params.gravity);
    let drag = -params.linear_drag_coeffs.hadamard(&state.velocity);
    let force = Vec3::new(T::zero(), T::zero(), -total_thrust) + drag + weight;
    let torque = torque - params.angular_drag_coeffs.hadamard(&state.rates);
    (force, torque)
}

/// Rigid-body accelerations shared by both vehicles: body-frame linear acceleration
/// and angular acceleration for a diagonal inertia.
pub(crate) fn rigid_body_accelerations<T: Real>(
    state: &VehicleState<T>,
    force: &Vec3<T>,
    torque: &Vec3<T>,
    mass: T,
    inertia: &Vec3<T>,
) -> (Vec3<T>, Vec3<T>) {
    let w = state.rates;
    let lin = *force * (T::one() / mass) - w.cross(&state.velocity);
    let gyro = w.cross(&inertia.hadamard(&w));
    let ang = Vec3([
        (torque[0] - gyro[0]) / inertia[0],
        (torque[1] - gyro[1]) / inertia[1],
        (torque[2] - gyro[2]) / inertia[2],
    ]);
    (lin, ang)
}

/// Semi-implicit two-step Euler: velocities and rates first, then position and
/// attitude from the updated velocities and rates.
pub(crate) fn integrate<T: Real>(
    state: &VehicleState<T>,
    trig: &EulerTrig<T>,
    lin_acc: &Vec3<T>,
    ang_acc: &Vec3<T>,
    dt: T,
) -> Result<VehicleState<T>> {
    let velocity = state.velocity + *lin_acc * dt;
    let rates = state.rates + *ang_acc * dt;
    let position = state.position + trig.body_to_world(&velocity) * dt;
    let raw = state.attitude + trig.euler_rates(&rates) * dt;
    let attitude = Vec3([wrap_angle(raw[0]), raw[1], wrap_angle(raw[2])]);
    let next = VehicleState {
        position,
        velocity,
        attitude,
        rates,
    };
    if !next.is_finite() {
        return Err(Error::Numeric("non-finite state after integration".into()));
    }
    check_pitch(attitude[1])?;
    Ok(next)
}

/// Advances the quad by one physics step with the given (already lagged) motor commands.
pub fn step<T: Real>(
    state: &VehicleState<T>,
    motors: &MotorState<T>,
    params: &MultiRotorParams<T>,
    dt: T,
) -> Result<VehicleState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParam(format!("dt = {dt} must be > 0")));
    }
    check_pitch(state.attitude[1])?;
    let trig = EulerTrig::new(&state.attitude);
    let (force, torque) = forces_with_trig(state, motors, params, &trig);
    let (lin, ang) =
        rigid_body_accelerations(state, &force, &torque, params.mass, &params.inertia_diag);
    integrate(state, &trig, &lin, &ang, dt)
}

/// Plant wrapper holding the lag filter state between physics steps.
#[derive(Debug, Clone)]
pub struct MultiRotorPlant<T> {
    pub params: MultiRotorParams<T>,
    pub state: VehicleState<T>,
    pub motors: MotorState<T>,
}

impl<T: Real> MultiRotorPlant<T> {
    pub fn new(params: MultiRotorParams<T>, state: VehicleState<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            state,
            motors: MotorState::default(),
        })
    }

    /// Seeds the lag filter as if `u` had been applied forever.
    pub fn settle_motors(&mut self, u: &ControlVector<T>) {
        self.motors = MotorState::from_control(u);
    }

    pub fn advance(&mut self, raw: &ControlVector<T>, dt: T) -> Result<&VehicleState<T>> {
        self.motors = apply_lag(&self.motors, raw, dt, self.params.lag_time_constant)?;
        self.state = step(&self.state, &self.motors, &self.params, dt)?;
        Ok(&self.state)
    }
}
