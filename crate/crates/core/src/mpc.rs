//! Receding-horizon target-to-platform controller.
//!
//! Each control step rolls the target forward over the horizon, then searches the
//! platform's `N x 4` thrust sequence minimizing
//! `Σ_k q(x̂_k) + p(u_k)` with `q` the weighted squared state error against the
//! target and `p = control_weight · Σ (u - u_ref)²`, `u_ref` the hover command by
//! default ([`ControlReference`]). Only the first control is applied; the
//! rest seeds the next solve (shifted one step, last step repeated).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multirotor::{apply_lag, step, MotorState, MultiRotorParams};
use crate::optimizer::{minimize, BoxBounds, OptimizerConfig, Termination};
use crate::scalar::Real;
use crate::target::{rollout_target, TargetSource};
use crate::vehicle::{ControlKind, ControlVector, CostWeights, Trajectory, VehicleState, CONTROL_DIM};

/// Thrust level the control penalty is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlReference {
    /// Equal-motor hover command (`1 / thrust-to-weight`); no steady-state sag.
    #[default]
    Hover,
    /// Penalize raw thrust, `p = w Σ u²`; trades a gravity sag for lower thrust.
    Zero,
}

/// Distance from a bound under which a channel counts as saturated.
pub const SATURATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct MpcConfig<T> {
    pub horizon: T,
    pub control_dt: T,
    pub physics_substeps: usize,
    pub weights: CostWeights<T>,
    pub control_reference: ControlReference,
    pub control_lower: [T; CONTROL_DIM],
    pub control_upper: [T; CONTROL_DIM],
    pub optimizer: OptimizerConfig<T>,
    /// Predict with the motor lag filter too (model-mismatch studies only).
    pub model_includes_lag: bool,
}

impl<T: Real> Default for MpcConfig<T> {
    fn default() -> Self {
        Self {
            horizon: T::one(),
            control_dt: T::of(0.1),
            physics_substeps: 12,
            weights: CostWeights::default(),
            control_reference: ControlReference::Hover,
            control_lower: [T::zero(); CONTROL_DIM],
            control_upper: [T::one(); CONTROL_DIM],
            optimizer: OptimizerConfig::default(),
            model_includes_lag: false,
        }
    }
}

impl<T: Real> MpcConfig<T> {
    /// Number of decision steps `N = horizon / control_dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.control_dt > T::zero()) || !(self.horizon > T::zero()) {
            return Err(Error::InvalidParam("horizon and control_dt must be > 0".into()));
        }
        let r = self.horizon / self.control_dt;
        let n = r.round();
        if n < T::one() || (r - n).abs() > T::of(1e-9) * r.max(T::one()) {
            return Err(Error::InvalidParam(format!(
                "horizon {} is not an integer multiple of control_dt {}",
                self.horizon, self.control_dt
            )));
        }
        Ok(n.to_usize().unwrap())
    }

    pub fn physics_dt(&self) -> T {
        self.control_dt / T::from_usize(self.physics_substeps.max(1)).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if self.physics_substeps == 0 {
            return Err(Error::InvalidParam("physics_substeps must be >= 1".into()));
        }
        self.weights.validate()?;
        self.optimizer.validate()?;
        for i in 0..CONTROL_DIM {
            let (l, u) = (self.control_lower[i], self.control_upper[i]);
            if !(l >= T::zero() && l <= u && u <= T::one()) {
                return Err(Error::InvalidParam(format!(
                    "channel {i} bounds [{l}, {u}] must satisfy 0 <= lower <= upper <= 1"
                )));
            }
        }
        Ok(())
    }

    pub fn reference_command(&self, params: &MultiRotorParams<T>) -> T {
        match self.control_reference {
            ControlReference::Hover => params.hover_command(),
            ControlReference::Zero => T::zero(),
        }
    }

    pub fn bounds(&self) -> Result<BoxBounds<T>> {
        let n = self.steps()?;
        let lower = (0..n).flat_map(|_| self.control_lower).collect();
        let upper = (0..n).flat_map(|_| self.control_upper).collect();
        BoxBounds::new(lower, upper)
    }
}

/// Channels pinned at their lower / upper bound for one decision step (bit `i` = motor `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaturationMask {
    pub lower: u8,
    pub upper: u8,
}

impl SaturationMask {
    pub fn of<T: Real>(u: &[T; CONTROL_DIM], lower: &[T; CONTROL_DIM], upper: &[T; CONTROL_DIM]) -> Self {
        let tol = T::of(SATURATION_TOLERANCE);
        let mut m = Self::default();
        for i in 0..CONTROL_DIM {
            if (u[i] - lower[i]).abs() <= tol {
                m.lower |= 1 << i;
            }
            if (upper[i] - u[i]).abs() <= tol {
                m.upper |= 1 << i;
            }
        }
        m
    }

    pub fn any(&self) -> bool {
        self.lower | self.upper != 0
    }

    pub fn upper_channel(&self, i: usize) -> bool {
        self.upper & (1 << i) != 0
    }

    pub fn lower_channel(&self, i: usize) -> bool {
        self.lower & (1 << i) != 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult<T> {
    pub control_sequence: Vec<ControlVector<T>>,
    /// `N + 1` predicted platform states at control-step spacing.
    pub predicted_platform: Trajectory<T>,
    pub cost: T,
    pub optimizer_iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub saturation: Vec<SaturationMask>,
}

impl<T: Real> PlanResult<T> {
    pub fn first_control(&self) -> ControlVector<T> {
        self.control_sequence[0]
    }

    pub fn flat(&self) -> Vec<T> {
        flatten(&self.control_sequence)
    }
}

fn flatten<T: Real>(seq: &[ControlVector<T>]) -> Vec<T> {
    seq.iter().flat_map(|c| c.channels).collect()
}

fn unflatten<T: Real>(u: &[T]) -> Vec<ControlVector<T>> {
    u.chunks_exact(CONTROL_DIM)
        .map(|c| ControlVector {
            channels: [c[0], c[1], c[2], c[3]],
            kind: ControlKind::MultiRotor,
        })
        .collect()
}

/// One horizon optimization problem: fixed start state and target samples.
struct HorizonProblem<'a, T> {
    start: &'a VehicleState<T>,
    motors: Option<MotorState<T>>,
    targets: &'a [VehicleState<T>],
    params: &'a MultiRotorParams<T>,
    cfg: &'a MpcConfig<T>,
    steps: usize,
    start_time: T,
    reference: T,
}

impl<'a, T: Real> HorizonProblem<'a, T> {
    fn new(
        start: &'a VehicleState<T>,
        motors: Option<MotorState<T>>,
        target: &'a Trajectory<T>,
        params: &'a MultiRotorParams<T>,
        cfg: &'a MpcConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        let steps = cfg.steps()?;
        if target.len() < steps + 1 {
            return Err(Error::Dimension(format!(
                "target trajectory has {} states, horizon needs {}",
                target.len(),
                steps + 1
            )));
        }
        if (target.dt - cfg.control_dt).abs() > T::of(1e-9) * cfg.control_dt {
            return Err(Error::Dimension(format!(
                "target sample period {} differs from control_dt {}",
                target.dt, cfg.control_dt
            )));
        }
        Ok(Self {
            start,
            motors: if cfg.model_includes_lag { motors } else { None },
            targets: &target.states[..=steps],
            params,
            cfg,
            steps,
            start_time: target.start_time,
            reference: cfg.reference_command(params),
        })
    }

    /// Simulates the platform over the horizon, calling `visit(k, state)` after each
    /// control step `k = 1..=N`.
    fn simulate(&self, u: &[T], mut visit: impl FnMut(usize, &VehicleState<T>)) -> Result<()> {
        if u.len() != self.steps * CONTROL_DIM {
            return Err(Error::Dimension(format!(
                "{} decision variables, expected {}",
                u.len(),
                self.steps * CONTROL_DIM
            )));
        }
        let dt = self.cfg.physics_dt();
        let mut state = *self.start;
        let mut lagged = self.motors;
        for (k, c) in u.chunks_exact(CONTROL_DIM).enumerate() {
            let cmd = ControlVector {
                channels: [c[0], c[1], c[2], c[3]],
                kind: ControlKind::MultiRotor,
            };
            for _ in 0..self.cfg.physics_substeps {
                let motors = match lagged.as_mut() {
                    Some(m) => {
                        *m = apply_lag(m, &cmd, dt, self.params.lag_time_constant)?;
                        *m
                    }
                    None => MotorState::from_control(&cmd),
                };
                state = step(&state, &motors, self.params, dt)?;
            }
            visit(k + 1, &state);
        }
        Ok(())
    }

    fn cost(&self, u: &[T]) -> Result<T> {
        let w = &self.cfg.weights;
        let mut q = T::zero();
        self.simulate(u, |k, s| q = q + w.state_error(s, &self.targets[k]))?;
        Ok(q + w.control_cost(u, self.reference))
    }

    fn predicted(&self, u: &[T]) -> Result<Trajectory<T>> {
        let mut states = Vec::with_capacity(self.steps + 1);
        states.push(*self.start);
        self.simulate(u, |_, s| states.push(*s))?;
        Trajectory::new(self.cfg.control_dt, self.start_time, states, unflatten(u))
    }
}

/// Horizon cost `J(u; x) = Σ_k q(x̂_k) + p(u_k)` for a flattened `N x 4` control
/// sequence (step-major), `p(u_k) = control_weight · Σ_i (u_k,i - reference)²`. The motor lag is not part of the prediction unless
/// `model_includes_lag` is set.
pub fn horizon_cost<T: Real>(
    u_flat: &[T],
    platform_state: &VehicleState<T>,
    target_traj: &Trajectory<T>,
    params: &MultiRotorParams<T>,
    cfg: &MpcConfig<T>,
) -> Result<T> {
    HorizonProblem::new(platform_state, None, target_traj, params, cfg)?.cost(u_flat)
}

/// Shifts a previous solution one step earlier, repeating the final step.
pub fn shift_warm_start<T: Real>(previous: &[ControlVector<T>]) -> Vec<ControlVector<T>> {
    match previous.split_first() {
        None => Vec::new(),
        Some((_, [])) => previous.to_vec(),
        Some((_, rest)) => {
            let mut out = rest.to_vec();
            out.push(*rest.last().unwrap());
            out
        }
    }
}

/// Solves one horizon problem. `warm_start` is the previous control sequence
/// (shifted here) or empty for a cold start from all zeros.
pub fn plan<T: Real>(
    platform_state: &VehicleState<T>,
    target_traj: &Trajectory<T>,
    warm_start: &[ControlVector<T>],
    params: &MultiRotorParams<T>,
    cfg: &MpcConfig<T>,
) -> Result<PlanResult<T>> {
    plan_with_motors(platform_state, None, target_traj, warm_start, params, cfg)
}

fn plan_with_motors<T: Real>(
    platform_state: &VehicleState<T>,
    motors: Option<MotorState<T>>,
    target_traj: &Trajectory<T>,
    warm_start: &[ControlVector<T>],
    params: &MultiRotorParams<T>,
    cfg: &MpcConfig<T>,
) -> Result<PlanResult<T>> {
    let problem = HorizonProblem::new(platform_state, motors, target_traj, params, cfg)?;
    let n = problem.steps;
    let bounds = cfg.bounds()?;
    let x0 = if warm_start.is_empty() {
        vec![T::zero(); n * CONTROL_DIM]
    } else {
        if warm_start.len() != n {
            return Err(Error::Dimension(format!(
                "warm start has {} steps, horizon has {n}",
                warm_start.len()
            )));
        }
        bounds.project(&flatten(&shift_warm_start(warm_start)))
    };

    let objective = |u: &[T]| problem.cost(u).unwrap_or(T::infinity());
    let (x, cost, iterations, termination) = match minimize(objective, &x0, &bounds, &cfg.optimizer) {
        Ok(m) => (m.x, m.cost, m.iterations, m.termination),
        // the start point itself could not be simulated
        Err(Error::Numeric(_)) => (x0, T::infinity(), 0, Termination::NonFinite),
        Err(e) => return Err(e),
    };

    let predicted_platform = match problem.predicted(&x) {
        Ok(p) => p,
        Err(_) => Trajectory::new(
            cfg.control_dt,
            target_traj.start_time,
            vec![*platform_state; n + 1],
            unflatten(&x),
        )?,
    };
    let control_sequence = unflatten(&x);
    let saturation = control_sequence
        .iter()
        .map(|c| SaturationMask::of(&c.channels, &cfg.control_lower, &cfg.control_upper))
        .collect();
    Ok(PlanResult {
        control_sequence,
        predicted_platform,
        cost,
        optimizer_iterations: iterations,
        converged: termination.converged(),
        termination,
        saturation,
    })
}

/// Stateful receding-horizon controller: keeps the last solution as the next warm start.
#[derive(Debug, Clone)]
pub struct MimicController<T> {
    pub params: MultiRotorParams<T>,
    pub config: MpcConfig<T>,
    previous: Vec<ControlVector<T>>,
    motors: Option<MotorState<T>>,
    /// Discard the previous solution and start every solve from zeros.
    pub always_cold_start: bool,
}

impl<T: Real> MimicController<T> {
    pub fn new(params: MultiRotorParams<T>, config: MpcConfig<T>) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        Ok(Self {
            params,
            config,
            previous: Vec::new(),
            motors: None,
            always_cold_start: false,
        })
    }

    pub fn previous_solution(&self) -> &[ControlVector<T>] {
        &self.previous
    }

    pub fn set_warm_start(&mut self, sequence: Vec<ControlVector<T>>) {
        self.previous = sequence;
    }

    pub fn reset(&mut self) {
        self.previous.clear();
    }

    /// Latest plant motor state; only used when the model includes the lag filter.
    pub fn observe_motors(&mut self, motors: MotorState<T>) {
        self.motors = Some(motors);
    }

    /// Rolls out the target from `now`, re-plans and returns the control to apply.
    pub fn control_step(
        &mut self,
        platform_state: &VehicleState<T>,
        target: &TargetSource<T>,
        now: T,
    ) -> Result<(ControlVector<T>, PlanResult<T>)> {
        let target_traj = rollout_target(target, now, self.config.horizon, self.config.control_dt)?;
        self.control_step_with_target(platform_state, &target_traj)
    }

    /// Same as [`Self::control_step`] with an already rolled-out target window.
    pub fn control_step_with_target(
        &mut self,
        platform_state: &VehicleState<T>,
        target_traj: &Trajectory<T>,
    ) -> Result<(ControlVector<T>, PlanResult<T>)> {
        let warm: &[ControlVector<T>] = if self.always_cold_start { &[] } else { &self.previous };
        let result = plan_with_motors(
            platform_state,
            self.motors,
            target_traj,
            warm,
            &self.params,
            &self.config,
        )?;
        self.previous = result.control_sequence.clone();
        Ok((result.first_control(), result))
    }
}
