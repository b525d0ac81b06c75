//! Box-constrained minimization: projected limited-memory quasi-Newton descent with
//! central finite-difference gradients and a backtracking (Armijo) line search.
//!
//! Every point handed to the objective, including finite-difference probes, lies
//! inside the box. Non-finite objective values inside the search are treated as `+∞`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of curvature pairs kept by the quasi-Newton update.
const MEMORY: usize = 8;
/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> BoxBounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "bounds lengths differ: {} vs {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::InvalidParam(format!("bad bound {i}: [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: T, upper: T) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| v.max(l).min(u))
            .collect()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l && v <= u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct OptimizerConfig<T> {
    pub max_iterations: usize,
    /// Converged when an accepted step changes the cost by less than this.
    pub cost_tolerance: T,
    /// Converged when an accepted step moves every coordinate by less than this.
    pub step_tolerance: T,
    pub fd_step: T,
    pub line_search_shrink: T,
    pub line_search_max: usize,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            cost_tolerance: T::of(1e-6),
            step_tolerance: T::of(1e-8),
            fd_step: T::default_fd_step(),
            line_search_shrink: T::of(0.5),
            line_search_max: 20,
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.cost_tolerance, self.step_tolerance, self.fd_step];
        if self.max_iterations == 0
            || self.line_search_max == 0
            || pos.iter().any(|v| !(*v > T::zero()))
            || !(self.line_search_shrink > T::zero() && self.line_search_shrink < T::one())
        {
            return Err(Error::InvalidParam(format!(
                "optimizer config must be positive with shrink in (0, 1): {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostTolerance,
    StepTolerance,
    MaxIterations,
    /// No decrease found along the steepest projected descent direction.
    LineSearchFailed,
    /// The objective or its gradient became non-finite mid-run.
    NonFinite,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::CostTolerance | Termination::StepTolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Cost after each accepted iteration, starting with the projected start point.
    pub history: Vec<T>,
    pub evaluations: usize,
}

fn eval<T: Real>(f: &impl Fn(&[T]) -> T, x: &[T], count: &mut usize) -> T {
    *count += 1;
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        T::infinity()
    }
}

/// Central-difference gradient, one-sided where a probe would leave the box.
pub fn finite_diff_gradient<T: Real>(
    objective: impl Fn(&[T]) -> T,
    x: &[T],
    fd_step: T,
    bounds: &BoxBounds<T>,
) -> Result<Vec<T>> {
    let mut count = 0;
    fd_gradient(&objective, x, None, fd_step, bounds, &mut count)
}

fn fd_gradient<T: Real>(
    objective: &impl Fn(&[T]) -> T,
    x: &[T],
    fx: Option<T>,
    h: T,
    bounds: &BoxBounds<T>,
    count: &mut usize,
) -> Result<Vec<T>> {
    if x.len() != bounds.len() {
        return Err(Error::Dimension(format!(
            "point has {} coordinates, bounds {}",
            x.len(),
            bounds.len()
        )));
    }
    let mut center = fx;
    let mut probe = x.to_vec();
    let mut grad = vec![T::zero(); x.len()];
    let sample = |probe: &[T], count: &mut usize| -> Result<T> {
        *count += 1;
        let v = objective(probe);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("objective = {v} during finite differencing")))
        }
    };
    for i in 0..x.len() {
        let (xi, lo, hi) = (x[i], bounds.lower[i], bounds.upper[i]);
        let up_ok = xi + h <= hi;
        let down_ok = xi - h >= lo;
        let mut center_value = |count: &mut usize| -> Result<T> {
            match center {
                Some(v) => Ok(v),
                None => {
                    let v = sample(x, count)?;
                    center = Some(v);
                    Ok(v)
                }
            }
        };
        grad[i] = if up_ok && down_ok {
            probe[i] = xi + h;
            let fp = sample(&probe, count);
            probe[i] = xi - h;
            let fm = sample(&probe, count);
            match (fp, fm) {
                (Ok(fp), Ok(fm)) => (fp - fm) / (h + h),
                // one probe fell into a non-finite region: use the other side
                (Ok(fp), Err(_)) => (fp - center_value(count)?) / h,
                (Err(_), Ok(fm)) => (center_value(count)? - fm) / h,
                (Err(e), Err(_)) => return Err(e),
            }
        } else if up_ok {
            let f0 = center_value(count)?;
            probe[i] = xi + h;
            (sample(&probe, count)? - f0) / h
        } else if down_ok {
            let f0 = center_value(count)?;
            probe[i] = xi - h;
            (f0 - sample(&probe, count)?) / h
        } else {
            T::zero()
        };
        probe[i] = xi;
    }
    Ok(grad)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn inf_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Gradient with components zeroed where the bound blocks descent.
fn projected_gradient<T: Real>(x: &[T], g: &[T], bounds: &BoxBounds<T>) -> Vec<T> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            let at_lower = xi <= bounds.lower[i] && gi > T::zero();
            let at_upper = xi >= bounds.upper[i] && gi < T::zero();
            if at_lower || at_upper {
                T::zero()
            } else {
                gi
            }
        })
        .collect()
}

/// Two-loop recursion restricted to the free coordinates (`mask[i] == true`).
fn lbfgs_direction<T: Real>(pg: &[T], mask: &[bool], memory: &VecDeque<(Vec<T>, Vec<T>)>) -> Vec<T> {
    let masked = |v: &[T]| -> Vec<T> {
        v.iter()
            .zip(mask)
            .map(|(&x, &m)| if m { x } else { T::zero() })
            .collect()
    };
    let mut q = pg.to_vec();
    let pairs: Vec<(Vec<T>, Vec<T>, T)> = memory
        .iter()
        .filter_map(|(s, y)| {
            let (s, y) = (masked(s), masked(y));
            let sy = dot(&s, &y);
            (sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt()).then(|| {
                let rho = T::one() / sy;
                (s, y, rho)
            })
        })
        .collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi = *qi - a * yi;
        }
        alphas.push(a);
    }
    let gamma = match pairs.last() {
        Some((s, y, _)) => dot(s, y) / dot(y, y),
        None => T::one(),
    };
    for qi in q.iter_mut() {
        *qi = *qi * gamma;
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qi, &si) in q.iter_mut().zip(s) {
            *qi = *qi + (*a - b) * si;
        }
    }
    q.iter()
        .zip(mask)
        .map(|(&v, &m)| if m { -v } else { T::zero() })
        .collect()
}

/// Minimizes `objective` over the box starting from `x0` (projected first).
pub fn minimize<T: Real>(
    objective: impl Fn(&[T]) -> T,
    x0: &[T],
    bounds: &BoxBounds<T>,
    config: &OptimizerConfig<T>,
) -> Result<Minimum<T>> {
    config.validate()?;
    if x0.len() != bounds.len() {
        return Err(Error::Dimension(format!(
            "start point has {} coordinates, bounds {}",
            x0.len(),
            bounds.len()
        )));
    }
    let mut evaluations = 0;
    let mut x = bounds.project(x0);
    let mut fx = eval(&objective, &x, &mut evaluations);
    if !fx.is_finite() {
        return Err(Error::Numeric("objective is not finite at the start point".into()));
    }
    let mut history = vec![fx];
    let finish = |x: Vec<T>, cost, iterations, termination: Termination, history, evaluations| {
        Ok(Minimum {
            x,
            cost,
            iterations,
            converged: termination.converged(),
            termination,
            history,
            evaluations,
        })
    };

    let h = config.fd_step;
    let mut g = match fd_gradient(&objective, &x, Some(fx), h, bounds, &mut evaluations) {
        Ok(g) => g,
        Err(_) => return finish(x, fx, 0, Termination::NonFinite, history, evaluations),
    };
    let mut memory: VecDeque<(Vec<T>, Vec<T>)> = VecDeque::with_capacity(MEMORY);
    let c1 = T::of(ARMIJO);

    for iteration in 1..=config.max_iterations {
        let pg = projected_gradient(&x, &g, bounds);
        let pg_norm = inf_norm(&pg);
        if pg_norm == T::zero() {
            return finish(x, fx, iteration - 1, Termination::StepTolerance, history, evaluations);
        }
        let mask: Vec<bool> = pg.iter().map(|v| *v != T::zero()).collect();
        let mut direction = lbfgs_direction(&pg, &mask, &memory);
        if !(dot(&direction, &pg) < T::zero()) {
            memory.clear();
            direction = pg.iter().map(|v| -*v).collect();
        }
        let steepest = memory.is_empty();
        let mut alpha = if steepest {
            T::one().min(T::one() / inf_norm(&direction))
        } else {
            T::one()
        };

        let mut accepted = None;
        let mut last_change = T::infinity();
        let mut trial = x.clone();
        for _ in 0..config.line_search_max {
            for i in 0..x.len() {
                trial[i] = (x[i] + alpha * direction[i])
                    .max(bounds.lower[i])
                    .min(bounds.upper[i]);
            }
            let ft = eval(&objective, &trial, &mut evaluations);
            last_change = (ft - fx).abs();
            let decrease: T = x
                .iter()
                .zip(&trial)
                .zip(&g)
                .fold(T::zero(), |acc, ((&xi, &ti), &gi)| acc + gi * (ti - xi));
            if ft <= fx + c1 * decrease && ft <= fx {
                accepted = Some(ft);
                break;
            }
            alpha = alpha * config.line_search_shrink;
        }

        let Some(f_new) = accepted else {
            if !steepest {
                memory.clear();
                continue;
            }
            // flat to within tolerance at the shortest trial step: a stationary point
            // as far as finite differences can tell
            if last_change < config.cost_tolerance {
                return finish(x, fx, iteration, Termination::CostTolerance, history, evaluations);
            }
            return finish(x, fx, iteration, Termination::LineSearchFailed, history, evaluations);
        };

        let step: Vec<T> = trial.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let f_old = fx;
        x.copy_from_slice(&trial);
        fx = f_new;
        history.push(fx);

        if (f_old - fx).abs() < config.cost_tolerance {
            return finish(x, fx, iteration, Termination::CostTolerance, history, evaluations);
        }
        if inf_norm(&step) < config.step_tolerance {
            return finish(x, fx, iteration, Termination::StepTolerance, history, evaluations);
        }

        let g_new = match fd_gradient(&objective, &x, Some(fx), h, bounds, &mut evaluations) {
            Ok(g) => g,
            Err(_) => return finish(x, fx, iteration, Termination::NonFinite, history, evaluations),
        };
        let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        if dot(&step, &y) > T::epsilon() * dot(&y, &y).sqrt() * inf_norm(&step) {
            if memory.len() == MEMORY {
                memory.pop_front();
            }
            memory.push_back((step, y));
        }
        g = g_new;
    }
    let iterations = config.max_iterations;
    finish(x, fx, iterations, Termination::MaxIterations, history, evaluations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn cfg() -> OptimizerConfig<f64> {
        OptimizerConfig::default()
    }

    #[test]
    fn interior_quadratic() {
        let b = BoxBounds::uniform(1, 0.0, 1.0).unwrap();
        let m = minimize(|u: &[f64]| (u[0] - 0.3).powi(2), &[0.9], &b, &cfg()).unwrap();
        assert!((m.x[0] - 0.3).abs() < 1e-6, "{m:?}");
        assert!(m.converged);
    }

    #[test]
    fn clipped_quadratic_is_exactly_on_bound() {
        let b = BoxBounds::uniform(1, 0.0, 1.0).unwrap();
        let m = minimize(|u: &[f64]| (u[0] - 2.0).powi(2), &[0.2], &b, &cfg()).unwrap();
        assert_eq!(m.x[0], 1.0);
    }

    #[test]
    fn separable_clipping_oracle() {
        let c = [0.2, 0.8, 1.5, -0.3];
        let oracle: Vec<f64> = c.iter().map(|v: &f64| v.clamp(0.0, 1.0)).collect();
        let b = BoxBounds::uniform(4, 0.0, 1.0).unwrap();
        let f = |u: &[f64]| u.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let m = minimize(f, &[0.5; 4], &b, &cfg()).unwrap();
        for (a, o) in m.x.iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-5, "{:?}", m.x);
        }
    }

    #[test]
    fn start_point_projected_and_never_worse() {
        let b = BoxBounds::uniform(2, 0.0, 1.0).unwrap();
        let f = |u: &[f64]| (u[0] - 0.1).powi(2) + 10.0 * (u[1] - 0.7).powi(4);
        let m = minimize(f, &[5.0, -3.0], &b, &cfg()).unwrap();
        assert!(m.cost <= f(&[1.0, 0.0]));
        assert!(b.contains(&m.x));
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn every_evaluation_is_feasible() {
        let b = BoxBounds::new(vec![0.0, -1.0, 0.2], vec![1.0, 0.0, 0.2]).unwrap();
        let outside = Cell::new(0);
        let f = |u: &[f64]| {
            if !b.contains(u) {
                outside.set(outside.get() + 1);
            }
            (u[0] - 3.0).powi(2) + (u[1] + 0.5).powi(2) * (1.0 + u[0]) + u[2]
        };
        let m = minimize(f, &[0.999_999_9, -0.999_999_9, 0.2], &b, &cfg()).unwrap();
        assert_eq!(outside.get(), 0);
        assert_eq!(m.x[0], 1.0);
        assert!((m.x[1] + 0.5).abs() < 1e-5);
    }

    #[test]
    fn rosenbrock_in_box() {
        let b = BoxBounds::uniform(2, -2.0, 2.0).unwrap();
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let c = OptimizerConfig { max_iterations: 500, cost_tolerance: 1e-14, ..cfg() };
        let m = minimize(f, &[-1.2, 1.0], &b, &c).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 2e-3, "{m:?}");
    }

    #[test]
    fn non_finite_start_is_error() {
        let b = BoxBounds::uniform(1, 0.0, 1.0).unwrap();
        assert!(matches!(
            minimize(|_: &[f64]| f64::NAN, &[0.5], &b, &cfg()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn non_finite_mid_run_returns_best() {
        let b = BoxBounds::uniform(1, 0.0, 1.0).unwrap();
        // finite only on a sliver narrower than the difference step
        let f = |u: &[f64]| if (u[0] - 0.5).abs() < 5e-7 { u[0] } else { f64::INFINITY };
        let m = minimize(f, &[0.5], &b, &cfg()).unwrap();
        assert!(!m.converged);
        assert_eq!(m.termination, Termination::NonFinite);
        assert_eq!(m.cost, 0.5);
    }

    #[test]
    fn one_sided_difference_next_to_non_finite_region() {
        let b = BoxBounds::uniform(1, 0.0, 1.0).unwrap();
        let f = |u: &[f64]| if u[0] > 0.6 { (u[0] - 1.0).powi(2) } else { f64::INFINITY };
        let g = finite_diff_gradient(f, &[0.6 + 1e-7], 1e-6, &b).unwrap();
        assert!((g[0] + 0.8).abs() < 1e-5, "{}", g[0]);
        let m = minimize(f, &[0.6 + 1e-7], &b, &cfg()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn line_search_rejects_infinite_region() {
        let b = BoxBounds::uniform(1, 0.0, 1.0).unwrap();
        let f = |u: &[f64]| if u[0] < 0.25 { f64::INFINITY } else { (u[0] - 0.3).powi(2) };
        let m = minimize(f, &[0.9], &b, &cfg()).unwrap();
        assert!((m.x[0] - 0.3).abs() < 1e-5);
    }

    #[test]
    fn gradients() {
        let b = BoxBounds::uniform(3, -1.0, 1.0).unwrap();
        let x = [0.1, -0.4, 0.7];
        let g = finite_diff_gradient(|u: &[f64]| u.iter().sum(), &x, 1e-6, &b).unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-8));
        let g = finite_diff_gradient(|u: &[f64]| u.iter().map(|v| v * v).sum(), &x, 1e-6, &b).unwrap();
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() < 1e-6);
        }
        // one-sided at the bounds, still inside the box
        let edge = [1.0, -1.0, 0.0];
        let g = finite_diff_gradient(
            |u: &[f64]| {
                assert!(b.contains(u));
                u.iter().map(|v| v * v).sum()
            },
            &edge,
            1e-6,
            &b,
        )
        .unwrap();
        assert!((g[0] - 2.0).abs() < 1e-5 && (g[1] + 2.0).abs() < 1e-5);
        assert!(finite_diff_gradient(|_: &[f64]| f64::NAN, &x, 1e-6, &b).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(OptimizerConfig { line_search_shrink: 1.0, ..cfg() }.validate().is_err());
        assert!(OptimizerConfig { max_iterations: 0, ..cfg() }.validate().is_err());
        assert!(BoxBounds::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn f32_quadratic() {
        let b = BoxBounds::uniform(2, 0.0f32, 1.0).unwrap();
        let f = |u: &[f32]| (u[0] - 0.25).powi(2) + (u[1] - 1.5).powi(2);
        let m = minimize(f, &[0.9, 0.1], &b, &OptimizerConfig::default()).unwrap();
        assert!((m.x[0] - 0.25).abs() < 1e-2);
        assert_eq!(m.x[1], 1.0);
    }
}
