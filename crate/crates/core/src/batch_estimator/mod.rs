//! Batch MAP trajectory estimation with a Chebyshev state expansion.
//!
//! The window's state is a degree-`N` Chebyshev series (or, for noise-free
//! kinematic components, the anchored integral of one). The negative log
//! posterior becomes a plain sum of squares: prior, measurement and
//! quadrature-weighted dynamics residuals, minimised by Levenberg-Marquardt.

mod layout;
mod problem;
mod trajectory;

use nalgebra::DVector;

pub use layout::{ComponentRep, ParamKind, Parameterization};
pub use problem::MapProblem;
pub use trajectory::ChebyshevTrajectory;

use crate::error::{EstimationError, Result};
use crate::linalg::is_finite_vec;
use crate::nlsq_solver::{levenberg_marquardt, SolveStats, SolverConfig, Termination};
use crate::scalar::Real;
use crate::system_models::NoiseStrategy;

/// Minimises the MAP objective from `init`.
///
/// Under the constraint strategy the penalty weight is raised by its growth
/// factor for each round, warm-starting from the previous round. The returned
/// stats are those of the final round with iteration counts summed.
pub fn solve_batch<T: Real>(
    problem: &MapProblem<'_, T>,
    init: DVector<T>,
    cfg: &SolverConfig<T>,
) -> Result<(ChebyshevTrajectory<T>, SolveStats<T>)> {
    problem.layout().check_len(&init)?;
    if !is_finite_vec(&init) {
        return Err(EstimationError::NonFinite("initial parameters".into()));
    }
    let schedule = match problem.partition().strategy {
        NoiseStrategy::Constraint { initial_penalty, growth, rounds }
            if !problem.partition().is_trivial() =>
        {
            let mut w = initial_penalty;
            (0..rounds)
                .map(|_| {
                    let current = w;
                    w *= growth;
                    current
                })
                .collect()
        }
        _ => vec![problem.penalty_weight()],
    };

    let mut params = init;
    let mut total_iter = 0;
    let mut total_accepted = 0;
    let mut stats = None;
    for weight in schedule {
        let round = problem.with_penalty(weight);
        let (p, s) = levenberg_marquardt(
            |x| round.build_residual(x),
            |x| round.build_jacobian(x),
            params,
            cfg,
        )?;
        total_iter += s.iterations;
        total_accepted += s.accepted;
        params = p;
        stats = Some(s);
    }
    let mut stats = stats.expect("at least one round");
    if stats.termination == Termination::Stalled && total_accepted == 0 {
        return Err(EstimationError::Stalled(
            "every trial step failed to evaluate".into(),
        ));
    }
    stats.iterations = total_iter;
    stats.accepted = total_accepted;
    let traj = ChebyshevTrajectory::new(*problem.time_map(), problem.layout().clone(), params)?;
    Ok((traj, stats))
}
