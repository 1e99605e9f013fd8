//! Dense Levenberg-Marquardt for `min ‖r(x)‖²`.
//!
//! Damped normal equations `(JᵀJ + λ·diag(JᵀJ)) δ = -Jᵀr` are solved by
//! Cholesky; a trial step is accepted when the ratio of actual to predicted
//! cost reduction exceeds `1e-4`.

use nalgebra::{DMatrix, DVector};

use crate::error::{EstimationError, Result};
use crate::linalg::{is_finite_mat, is_finite_vec};
use crate::scalar::{lit, Real};

const ACCEPT_RATIO: f64 = 1e-4;
const MAX_DAMPING: f64 = 1e12;
const MIN_DAMPING: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T: Real> {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the solve.
    pub cost_tol: T,
    /// Bound on `max_j |(Jᵀr)_j| / (‖J_j‖ ‖r‖)`.
    pub grad_tol: T,
    /// Relative step length `‖δ‖ / (‖x‖ + step_tol)`.
    pub step_tol: T,
    /// Damping relative to `diag(JᵀJ)` at the first iteration; afterwards it
    /// follows the gain ratio (Nielsen's rule).
    pub initial_damping: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tol: lit(1e-10),
            grad_tol: lit(1e-8),
            step_tol: lit(1e-10),
            initial_damping: lit(1e-3),
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.cost_tol,
            self.grad_tol,
            self.step_tol,
            self.initial_damping,
        ]
        .iter()
        .all(|v| *v > T::zero());
        if !positive || self.max_iterations == 0 {
            return Err(EstimationError::Argument(
                "solver tolerances must be positive and max_iterations >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    CostTol,
    GradTol,
    StepTol,
    MaxIter,
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::CostTol => "cost_tol",
            Termination::GradTol => "grad_tol",
            Termination::StepTol => "step_tol",
            Termination::MaxIter => "max_iter",
            Termination::Stalled => "stalled",
        }
    }

    pub fn converged(&self) -> bool {
        !matches!(self, Termination::MaxIter | Termination::Stalled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats<T: Real> {
    /// Trial steps taken, accepted or not.
    pub iterations: usize,
    pub accepted: usize,
    /// `‖r(x*)‖²`.
    pub final_cost: T,
    /// `‖Jᵀr‖∞` at the last linearisation point.
    pub final_grad_norm: T,
    pub termination: Termination,
    /// Cost at the start and after every accepted step.
    pub cost_history: Vec<T>,
}

/// Minimises `‖residual(x)‖²` from `x0`.
///
/// A failed or non-finite residual at a trial point rejects that step; a
/// failure at `x0` is an error.
pub fn levenberg_marquardt<T, R, J>(
    residual: R,
    jacobian: J,
    x0: DVector<T>,
    cfg: &SolverConfig<T>,
) -> Result<(DVector<T>, SolveStats<T>)>
where
    T: Real,
    R: Fn(&DVector<T>) -> Result<DVector<T>>,
    J: Fn(&DVector<T>) -> Result<DMatrix<T>>,
{
    cfg.validate()?;
    if !is_finite_vec(&x0) {
        return Err(EstimationError::NonFinite("initial parameters".into()));
    }
    let mut x = x0;
    let mut r = residual(&x)?;
    if !is_finite_vec(&r) {
        return Err(EstimationError::NonFinite("residual at initial parameters".into()));
    }
    let mut cost = r.norm_squared();
    let mut damping = cfg.initial_damping;
    let mut growth = lit::<T>(2.0);
    let mut iterations = 0;
    let mut accepted = 0;
    let mut history = vec![cost];
    let two = lit::<T>(2.0);
    let max_damping = lit::<T>(MAX_DAMPING);

    let finish = |x: DVector<T>, cost, grad, termination, iterations, accepted, history| {
        Ok((
            x,
            SolveStats {
                iterations,
                accepted,
                final_cost: cost,
                final_grad_norm: grad,
                termination,
                cost_history: history,
            },
        ))
    };

    loop {
        let jac = jacobian(&x)?;
        if !is_finite_mat(&jac) {
            return Err(EstimationError::NonFinite("Jacobian at accepted point".into()));
        }
        let g = jac.tr_mul(&r);
        let grad_norm = g.amax();
        let r_norm = cost.sqrt();
        let scaled_grad = (0..jac.ncols())
            .map(|j| {
                let col = jac.column(j).norm();
                if col > T::zero() && r_norm > T::zero() {
                    g[j].abs() / (col * r_norm)
                } else {
                    T::zero()
                }
            })
            .fold(T::zero(), |a, b| a.max(b));
        if scaled_grad <= cfg.grad_tol {
            return finish(x, cost, grad_norm, Termination::GradTol, iterations, accepted, history);
        }
        let normal = jac.tr_mul(&jac);
        let diag_floor = normal.diagonal().amax() * T::default_epsilon();
        let scale = normal.diagonal().map(|d| d.max(diag_floor).max(lit(1e-300)));

        let mut last_trial_failed = false;
        loop {
            if iterations >= cfg.max_iterations {
                return finish(x, cost, grad_norm, Termination::MaxIter, iterations, accepted, history);
            }
            iterations += 1;

            let mut damped = normal.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += damping * scale[i];
            }
            let Some(chol) = damped.cholesky() else {
                damping *= growth;
                growth *= lit(2.0);
                if damping > max_damping {
                    return finish(x, cost, grad_norm, Termination::Stalled, iterations, accepted, history);
                }
                continue;
            };
            let step = -chol.solve(&g);
            let step_norm = step.norm();
            if step_norm <= cfg.step_tol * (x.norm() + cfg.step_tol) {
                // a vanishing step after evaluation failures is not convergence
                let why = if last_trial_failed {
                    Termination::Stalled
                } else {
                    Termination::StepTol
                };
                return finish(x, cost, grad_norm, why, iterations, accepted, history);
            }

            let trial = &x + &step;
            let trial_r = residual(&trial).ok().filter(is_finite_vec);
            last_trial_failed = trial_r.is_none();
            let outcome = trial_r.map(|tr| {
                let trial_cost = tr.norm_squared();
                let predicted = -(two * g.dot(&step) + step.dot(&(&normal * &step)));
                (tr, trial_cost, predicted)
            });

            match outcome {
                Some((tr, trial_cost, predicted))
                    if predicted > T::zero()
                        && (cost - trial_cost) > lit::<T>(ACCEPT_RATIO) * predicted =>
                {
                    let decrease = cost - trial_cost;
                    let previous = cost;
                    x = trial;
                    r = tr;
                    cost = trial_cost;
                    accepted += 1;
                    history.push(cost);
                    let rho = decrease / predicted;
                    let shrink = T::one() - (two * rho - T::one()).powi(3);
                    damping = (damping * shrink.max(lit(1.0 / 3.0))).max(lit(MIN_DAMPING));
                    growth = two;
                    if decrease <= cfg.cost_tol * previous {
                        return finish(x, cost, grad_norm, Termination::CostTol, iterations, accepted, history);
                    }
                    if step_norm <= cfg.step_tol * (x.norm() + cfg.step_tol) {
                        return finish(x, cost, grad_norm, Termination::StepTol, iterations, accepted, history);
                    }
                    break;
                }
                Some((_, _, predicted)) if predicted <= T::default_epsilon() * cost => {
                    // no representable model decrease left
                    return finish(x, cost, grad_norm, Termination::CostTol, iterations, accepted, history);
                }
                _ => {
                    damping *= growth;
                    growth *= two;
                    if damping > max_damping {
                        return finish(x, cost, grad_norm, Termination::Stalled, iterations, accepted, history);
                    }
                }
            }
        }
    }
}
