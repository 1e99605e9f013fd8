use nalgebra::{DMatrix, DVector};

use super::propagate::{rk4_along, time_grid};
use super::trace::{belief, FilterTrace};
use crate::error::{EstimationError, Result};
use crate::linalg::{check_covariance, psd_part, spd_solve, symmetrize};
use crate::scalar::{lit, Real};
use crate::system_models::{GaussianBelief, SystemModel};

/// Smoother gain `C = P⁺ Φᵀ (P⁻)⁻¹`.
fn smoother_gain<T: Real>(filtered: &DMatrix<T>, transition: &DMatrix<T>, predicted: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(spd_solve(predicted, &(transition * filtered), "predicted covariance in smoother")?.transpose())
}

/// Smoothed covariance `P⁺ + C(Pˢ − P⁻)Cᵀ`, evaluated as
/// `(I − CΦ)P⁺(I − CΦ)ᵀ + C(Q_d + Pˢ)Cᵀ` with `Q_d = P⁻ − ΦP⁺Φᵀ` clipped to
/// its positive part. Every term stays positive semi-definite, which the
/// difference form does not once `Q_d` vanishes.
pub(crate) fn rts_covariance<T: Real>(
    filtered: &DMatrix<T>,
    predicted: &DMatrix<T>,
    transition: &DMatrix<T>,
    gain: &DMatrix<T>,
    smoothed_next: &DMatrix<T>,
) -> DMatrix<T> {
    let n = filtered.nrows();
    let mut qd = predicted - transition * filtered * transition.transpose();
    symmetrize(&mut qd);
    let qd = psd_part(&qd);
    let a = DMatrix::identity(n, n) - gain * transition;
    let mut cov = &a * filtered * a.transpose() + gain * (qd + smoothed_next) * gain.transpose();
    symmetrize(&mut cov);
    cov
}

fn backward_step<T: Real>(
    trace: &FilterTrace<T>,
    k: usize,
    next: &GaussianBelief<T>,
) -> Result<GaussianBelief<T>> {
    let cur = &trace.steps[k].updated;
    let nxt = &trace.steps[k + 1];
    let phi = nxt
        .transition
        .as_ref()
        .ok_or_else(|| EstimationError::Argument("filter trace carries no transition matrices".into()))?;
    let c = smoother_gain(&cur.covariance, phi, &nxt.predicted.covariance)?;
    let mean = &cur.mean + &c * (&next.mean - &nxt.predicted.mean);
    let cov = rts_covariance(&cur.covariance, &nxt.predicted.covariance, phi, &c, &next.covariance);
    check_covariance(&cov, cur.time)?;
    Ok(belief(mean, cov, cur.time))
}

/// Extended RTS smoother over every step of an EKF trace.
pub fn erts_smooth<T: Real>(trace: &FilterTrace<T>) -> Result<Vec<GaussianBelief<T>>> {
    let n = trace.steps.len();
    let mut out = vec![trace.final_belief().clone(); n];
    for k in (0..n - 1).rev() {
        out[k] = backward_step(trace, k, &out[k + 1])?;
    }
    Ok(out)
}

/// Mean at `t` interpolated linearly between time-ordered beliefs, clamped
/// to the covered interval.
pub fn interpolate_mean<T: Real>(beliefs: &[GaussianBelief<T>], t: T) -> DVector<T> {
    let idx = beliefs.partition_point(|b| b.time < t);
    if idx == 0 {
        return beliefs[0].mean.clone();
    }
    if idx >= beliefs.len() {
        return beliefs[beliefs.len() - 1].mean.clone();
    }
    let (a, b) = (&beliefs[idx - 1], &beliefs[idx]);
    let span = b.time - a.time;
    if span <= T::zero() {
        return b.mean.clone();
    }
    let w = (t - a.time) / span;
    &a.mean * (T::one() - w) + &b.mean * w
}

/// Fixed-lag extended RTS smoother: the estimate at each measurement time
/// `t` uses the measurements up to `t + lag` (or the end of the trace).
///
/// Returned in measurement order.
pub fn fixed_lag_erts<T: Real>(trace: &FilterTrace<T>, lag: T) -> Result<Vec<GaussianBelief<T>>> {
    if lag < T::zero() {
        return Err(EstimationError::Argument("lag must be non-negative".into()));
    }
    let times = trace.times();
    let eps = lit::<T>(1e-9) * (lag + T::one());
    trace
        .measurement_steps()
        .into_iter()
        .map(|k| {
            let horizon = times[k] + lag + eps;
            let end = times.partition_point(|&t| t <= horizon) - 1;
            let mut b = trace.steps[end].updated.clone();
            for i in (k..end).rev() {
                b = backward_step(trace, i, &b)?;
            }
            Ok(b)
        })
        .collect()
}

/// Smoother error-covariance bound with all Jacobians taken at the truth.
///
/// Runs the covariance recursions of the EKF forward and of the RTS smoother
/// backward, linearising along `truth`; returns the smoothed covariance at
/// each measurement time. Diffusion diagonals below `diffusion_floor` are
/// raised to it, which keeps the bound finite when some states carry no
/// process noise.
#[allow(clippy::too_many_arguments)]
pub fn crlb_smoother<T: Real>(
    truth: &dyn Fn(T) -> Result<DVector<T>>,
    initial_covariance: &DMatrix<T>,
    t0: T,
    measurement_times: &[T],
    t_end: T,
    model: &dyn SystemModel<T>,
    step: T,
    diffusion_floor: Option<T>,
) -> Result<Vec<DMatrix<T>>> {
    let n = model.state_dim();
    let extra = diffusion_floor.map(|floor| {
        let d = model.diffusion(t0);
        DMatrix::from_fn(n, n, |i, j| {
            if i == j && d[(i, i)] < floor {
                floor - d[(i, i)]
            } else {
                T::zero()
            }
        })
    });
    let (grid, at_start) = time_grid(t0, measurement_times, t_end, step)?;
    let info_update = |p: &DMatrix<T>, t: T| -> Result<DMatrix<T>> {
        let h = model.measurement_jacobian(&truth(t)?);
        let s = &h * p * h.transpose() + model.meas_covariance();
        let chol = s
            .cholesky()
            .ok_or_else(|| EstimationError::NotPositiveDefinite("innovation covariance".into()))?;
        let ph = p * h.transpose();
        let mut pn = p - &ph * chol.solve(&ph.transpose());
        symmetrize(&mut pn);
        check_covariance(&pn, t)?;
        Ok(pn)
    };

    // forward: (predicted, updated, transition, measurement)
    let mut p = initial_covariance.clone();
    if at_start.is_some() {
        p = info_update(&p, t0)?;
    }
    let mut fwd = vec![(p.clone(), p.clone(), DMatrix::identity(n, n), at_start)];
    let mut t = t0;
    for (tn, meas) in grid {
        let (pp, phi) = rk4_along(model, truth, extra.as_ref(), &p, t, tn - t)?;
        p = if meas.is_some() { info_update(&pp, tn)? } else { pp.clone() };
        fwd.push((pp, p.clone(), phi, meas));
        t = tn;
    }

    let mut out = vec![DMatrix::zeros(n, n); measurement_times.len()];
    let mut ps = p;
    if let Some(k) = fwd.last().unwrap().3 {
        out[k] = ps.clone();
    }
    for k in (0..fwd.len() - 1).rev() {
        let (_, filtered, _, meas) = &fwd[k];
        let (predicted, _, phi, _) = &fwd[k + 1];
        let c = smoother_gain(filtered, phi, predicted)?;
        ps = rts_covariance(filtered, predicted, phi, &c, &ps);
        if let Some(m) = meas {
            out[*m] = ps.clone();
        }
    }
    Ok(out)
}
