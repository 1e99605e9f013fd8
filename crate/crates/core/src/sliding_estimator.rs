//! Sliding-window MAP estimation.
//!
//! The horizon is cut into back-to-back windows. Each window is solved as a
//! batch MAP problem whose prior is the previous window's end belief; that
//! belief's covariance comes from an EKF-style pass linearised along the
//! window's estimated trajectory.

use nalgebra::{DMatrix, DVector};

use crate::baselines::{ekf_cd, erts_smooth, interpolate_mean, propagate, rts_covariance};
use crate::batch_estimator::{solve_batch, ChebyshevTrajectory, MapProblem};
use crate::cheb_basis::AffineTimeMap;
use crate::error::{EstimationError, Result};
use crate::linalg::{check_covariance, spd_solve};
use crate::nlsq_solver::{SolveStats, SolverConfig};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::system_models::{GaussianBelief, Measurement, NoisePartition, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowInit {
    /// Constant trajectory at the prior mean.
    PriorMean,
    /// Interpolate an EKF pass over the window, RTS-smoothed when the
    /// smoother succeeds. Filtered means jump at every update, which a
    /// near noise-free model reads as a large process-noise cost.
    EkfFit,
}

#[derive(Debug, Clone)]
pub struct WindowConfig<T: Real> {
    /// Window length in seconds; windows do not overlap.
    pub window_size: T,
    pub order: usize,
    /// RK4 step for the covariance pass.
    pub covariance_step: T,
    /// RTS-smooth the in-window covariances reported at measurement times.
    pub smooth_covariance: bool,
    pub init: WindowInit,
    pub solver: SolverConfig<T>,
}

impl<T: Real> WindowConfig<T> {
    pub fn new(window_size: T, order: usize) -> Self {
        Self {
            window_size,
            order,
            covariance_step: lit(0.01),
            smooth_covariance: false,
            init: WindowInit::PriorMean,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_size > T::zero()) {
            return Err(EstimationError::Argument("window size must be positive".into()));
        }
        if self.order < 2 {
            return Err(EstimationError::Argument("window order must be at least 2".into()));
        }
        if !(self.covariance_step > T::zero()) {
            return Err(EstimationError::Argument("covariance step must be positive".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct WindowResult<T: Real> {
    pub trajectory: ChebyshevTrajectory<T>,
    /// Prior for the next window.
    pub end_belief: GaussianBelief<T>,
    /// Trajectory state with the pass covariance at each measurement time.
    pub measurement_beliefs: Vec<GaussianBelief<T>>,
    /// `None` when the solve returned an error.
    pub stats: Option<SolveStats<T>>,
    /// The solve failed or did not converge and the EKF fit stands in.
    pub fallback: bool,
}

/// Covariances from one linearised pass over a window.
#[derive(Debug, Clone)]
pub struct CovariancePass<T: Real> {
    /// Covariance at each measurement time (after its update, or smoothed).
    pub at_measurements: Vec<DMatrix<T>>,
    pub end: DMatrix<T>,
}

/// Integrates `Ṗ = FP + PFᵀ + GQGᵀ` with `F` at the trajectory, applying the
/// linearised measurement update at each measurement time.
pub fn propagate_covariance<T: Real>(
    trajectory: &ChebyshevTrajectory<T>,
    prior_covariance: &DMatrix<T>,
    measurements: &[Measurement<T>],
    model: &dyn SystemModel<T>,
    step: T,
    smooth: bool,
) -> Result<CovariancePass<T>> {
    let t0 = trajectory.time_map.t_start();
    let t_end = trajectory.time_map.t_end();
    let times: Vec<T> = measurements.iter().map(|z| z.time).collect();
    let (grid, at_start) = propagate::time_grid(t0, &times, t_end, step)?;
    let state = |t: T| trajectory.state(t);
    let update = |p: &DMatrix<T>, t: T, z: &DVector<T>| -> Result<DMatrix<T>> {
        let x = state(t)?;
        Ok(propagate::kalman_update(model, &x, p, &x, z, t)?.1)
    };

    let n = prior_covariance.nrows();
    let mut p = prior_covariance.clone();
    check_covariance(&p, t0)?;
    if let Some(k) = at_start {
        p = update(&p, t0, &measurements[k].value)?;
    }
    // (predicted, updated, transition, measurement index)
    let mut steps = vec![(p.clone(), p.clone(), DMatrix::identity(n, n), at_start)];
    let mut t = t0;
    for (tn, meas) in grid {
        let (pp, phi) = propagate::rk4_along(model, &state, None, &p, t, tn - t)?;
        p = match meas {
            Some(k) => update(&pp, tn, &measurements[k].value)?,
            None => pp.clone(),
        };
        steps.push((pp, p.clone(), phi, meas));
        t = tn;
    }

    let mut at_measurements = vec![DMatrix::zeros(n, n); measurements.len()];
    for (_, upd, _, meas) in &steps {
        if let Some(k) = meas {
            at_measurements[*k] = upd.clone();
        }
    }
    if smooth {
        let mut ps = p.clone();
        for k in (0..steps.len() - 1).rev() {
            let (_, filtered, _, meas) = &steps[k];
            let (predicted, _, phi, _) = &steps[k + 1];
            let c = spd_solve(predicted, &(phi * filtered), "predicted covariance in window smoother")?.transpose();
            ps = rts_covariance(filtered, predicted, phi, &c, &ps);
            if let Some(m) = meas {
                at_measurements[*m] = ps.clone();
            }
        }
    }
    Ok(CovariancePass {
        at_measurements,
        end: p,
    })
}

/// Solves one window `[prior.time, t_end]` and hands off its end belief.
pub fn run_window<T: Real>(
    prior: &GaussianBelief<T>,
    measurements: &[Measurement<T>],
    model: &dyn SystemModel<T>,
    partition: &NoisePartition<T>,
    t_end: T,
    cfg: &WindowConfig<T>,
) -> Result<WindowResult<T>> {
    cfg.validate()?;
    let map = AffineTimeMap::new(prior.time, t_end)?;
    let problem = MapProblem::new(
        model,
        partition.clone(),
        prior.clone(),
        measurements.to_vec(),
        map,
        cfg.order,
    )?;
    let ekf_reference = || -> Result<DVector<T>> {
        let trace = ekf_cd(prior, measurements, model, cfg.covariance_step, t_end)?;
        match erts_smooth(&trace) {
            Ok(smoothed) => problem.init_from(|t| interpolate_mean(&smoothed, t)),
            Err(_) => problem.init_from(|t| trace.mean_at(t)),
        }
    };
    let init = match cfg.init {
        WindowInit::PriorMean => problem.default_init(),
        WindowInit::EkfFit => ekf_reference()?,
    };
    let (trajectory, stats, fallback) = match solve_batch(&problem, init, &cfg.solver) {
        Ok((traj, stats)) if stats.termination.converged() => (traj, Some(stats), false),
        Ok((_, stats)) => {
            let params = ekf_reference()?;
            (
                ChebyshevTrajectory::new(map, problem.layout().clone(), params)?,
                Some(stats),
                true,
            )
        }
        Err(_) => {
            let params = ekf_reference()?;
            (
                ChebyshevTrajectory::new(map, problem.layout().clone(), params)?,
                None,
                true,
            )
        }
    };
    let pass = propagate_covariance(
        &trajectory,
        &prior.covariance,
        measurements,
        model,
        cfg.covariance_step,
        cfg.smooth_covariance,
    )?;
    let measurement_beliefs = measurements
        .iter()
        .zip(pass.at_measurements)
        .map(|(z, cov)| {
            Ok(GaussianBelief {
                mean: trajectory.state(z.time)?,
                covariance: cov,
                time: z.time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let end_belief = GaussianBelief::new(trajectory.state(t_end)?, pass.end, t_end)?;
    Ok(WindowResult {
        trajectory,
        end_belief,
        measurement_beliefs,
        stats,
        fallback,
    })
}

/// Window boundaries covering `[t0, t_end]` in steps of `window_size`; the
/// last window is shortened if the horizon is not a multiple.
pub fn window_bounds<T: Real>(t0: T, t_end: T, window_size: T) -> Result<Vec<(T, T)>> {
    if !(window_size > T::zero()) || !(t_end > t0) {
        return Err(EstimationError::Argument("empty horizon or window".into()));
    }
    let ratio = (t_end - t0) / window_size;
    let count = (ratio - lit(1e-9)).ceil().max(T::one());
    let count = count.to_usize().unwrap_or(1);
    Ok((0..count)
        .map(|m| {
            let a = t0 + window_size * from_usize(m);
            let b = if m + 1 == count {
                t_end
            } else {
                t0 + window_size * from_usize(m + 1)
            };
            (a, b)
        })
        .collect())
}

/// Runs windows back to back over `[initial.time, t_end]`.
///
/// A measurement on a boundary belongs to the earlier window; one exactly at
/// the start time goes to the first window.
pub fn run_sequence<T: Real>(
    initial: &GaussianBelief<T>,
    measurements: &[Measurement<T>],
    model: &dyn SystemModel<T>,
    partition: &NoisePartition<T>,
    t_end: T,
    cfg: &WindowConfig<T>,
) -> Result<Vec<WindowResult<T>>> {
    cfg.validate()?;
    if measurements.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(EstimationError::Argument("measurements must be sorted by time".into()));
    }
    let bounds = window_bounds(initial.time, t_end, cfg.window_size)?;
    let eps = cfg.window_size * lit(1e-9);
    let mut prior = initial.clone();
    let mut out = Vec::with_capacity(bounds.len());
    let mut next = 0;
    for (m, &(a, b)) in bounds.iter().enumerate() {
        let start = next;
        while next < measurements.len()
            && measurements[next].time <= b + eps
            && (measurements[next].time > a + eps || m == 0)
        {
            next += 1;
        }
        let window = run_window(&prior, &measurements[start..next], model, partition, b, cfg)?;
        prior = window.end_belief.clone();
        out.push(window);
    }
    if next < measurements.len() {
        return Err(EstimationError::Argument(format!(
            "measurement at t = {} lies beyond the horizon",
            to_f64(measurements[next].time)
        )));
    }
    Ok(out)
}

/// State of a window sequence at `t`; a boundary time takes the earlier
/// window.
pub fn sequence_state<T: Real>(windows: &[WindowResult<T>], t: T) -> Result<DVector<T>> {
    let w = windows
        .iter()
        .find(|w| t <= w.trajectory.time_map.t_end())
        .or(windows.last())
        .ok_or_else(|| EstimationError::Argument("empty window sequence".into()))?;
    w.trajectory.state(t)
}
