//! Fixed-step RK4 propagation of means, covariances and transition matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{EstimationError, Result};
use crate::linalg::{check_covariance, symmetrize};
use crate::scalar::{lit, to_f64, Real};
use crate::system_models::SystemModel;

/// Step end-times from `t0` to `t_end`, never stepping over a measurement.
///
/// Each entry is `(time, Some(k))` when measurement `k` falls on that time.
/// A measurement at `t0` itself is reported through the returned flag.
pub fn time_grid<T: Real>(
    t0: T,
    measurement_times: &[T],
    t_end: T,
    step: T,
) -> Result<(Vec<(T, Option<usize>)>, Option<usize>)> {
    if !(step > T::zero()) {
        return Err(EstimationError::Argument("integration step must be positive".into()));
    }
    let eps = step * lit(1e-9);
    let mut grid = Vec::new();
    let mut at_start = None;
    let mut t = t0;
    let mut last = t0;
    for (k, &tk) in measurement_times.iter().enumerate() {
        if tk < last - eps {
            return Err(EstimationError::Argument("measurement times must be sorted".into()));
        }
        if tk < t0 - eps || tk > t_end + eps {
            return Err(EstimationError::Argument(format!(
                "measurement at t = {} outside [{}, {}]",
                to_f64(tk),
                to_f64(t0),
                to_f64(t_end)
            )));
        }
        last = tk;
        if (tk - t0).abs() <= eps {
            if at_start.is_some() {
                return Err(EstimationError::Argument("two measurements at the start time".into()));
            }
            at_start = Some(k);
            continue;
        }
        push_steps(&mut grid, &mut t, tk, step, eps);
        match grid.last_mut() {
            Some((time, slot)) if (*time - tk).abs() <= eps && slot.is_none() => *slot = Some(k),
            _ => {
                return Err(EstimationError::Argument(
                    "measurements must have distinct times".into(),
                ))
            }
        }
    }
    push_steps(&mut grid, &mut t, t_end, step, eps);
    Ok((grid, at_start))
}

fn push_steps<T: Real>(grid: &mut Vec<(T, Option<usize>)>, t: &mut T, until: T, step: T, eps: T) {
    while *t < until - eps {
        let next = if *t + step > until - eps { until } else { *t + step };
        grid.push((next, None));
        *t = next;
    }
}

/// One RK4 step of the mean, covariance and state-transition matrix, with
/// `F` evaluated along the mean being propagated.
pub fn rk4_linearized<T: Real>(
    model: &dyn SystemModel<T>,
    x: &DVector<T>,
    p: &DMatrix<T>,
    t: T,
    h: T,
) -> Result<(DVector<T>, DMatrix<T>, DMatrix<T>)> {
    let n = x.len();
    let deriv = |x: &DVector<T>, p: &DMatrix<T>, phi: &DMatrix<T>, t: T| {
        let f = model.drift_jacobian(x, t);
        let dp = &f * p + p * f.transpose() + model.diffusion(t);
        (model.drift(x, t), dp, &f * phi)
    };
    let half = h * lit(0.5);
    let phi0 = DMatrix::identity(n, n);
    let (k1x, k1p, k1f) = deriv(x, p, &phi0, t);
    let (k2x, k2p, k2f) = deriv(&(x + &k1x * half), &(p + &k1p * half), &(&phi0 + &k1f * half), t + half);
    let (k3x, k3p, k3f) = deriv(&(x + &k2x * half), &(p + &k2p * half), &(&phi0 + &k2f * half), t + half);
    let (k4x, k4p, k4f) = deriv(&(x + &k3x * h), &(p + &k3p * h), &(&phi0 + &k3f * h), t + h);
    let sixth = h / lit(6.0);
    let two = lit::<T>(2.0);
    let xn = x + (k1x + k2x * two + k3x * two + k4x) * sixth;
    let mut pn = p + (k1p + k2p * two + k3p * two + k4p) * sixth;
    let phin = &phi0 + (k1f + k2f * two + k3f * two + k4f) * sixth;
    symmetrize(&mut pn);
    check_covariance(&pn, t + h)?;
    if !crate::linalg::is_finite_vec(&xn) {
        return Err(EstimationError::NonFinite(format!("mean at t = {}", to_f64(t + h))));
    }
    Ok((xn, pn, phin))
}

/// One RK4 step of the covariance and transition matrix with `F` evaluated
/// along an externally supplied state history.
pub fn rk4_along<T: Real>(
    model: &dyn SystemModel<T>,
    state: &dyn Fn(T) -> Result<DVector<T>>,
    extra_diffusion: Option<&DMatrix<T>>,
    p: &DMatrix<T>,
    t: T,
    h: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = p.nrows();
    let half = h * lit(0.5);
    let mut jac = Vec::with_capacity(3);
    let mut diff = Vec::with_capacity(3);
    for s in [t, t + half, t + h] {
        jac.push(model.drift_jacobian(&state(s)?, s));
        let mut d = model.diffusion(s);
        if let Some(e) = extra_diffusion {
            d += e;
        }
        diff.push(d);
    }
    let deriv = |i: usize, p: &DMatrix<T>, phi: &DMatrix<T>| {
        (&jac[i] * p + p * jac[i].transpose() + &diff[i], &jac[i] * phi)
    };
    let phi0 = DMatrix::identity(n, n);
    let (k1p, k1f) = deriv(0, p, &phi0);
    let (k2p, k2f) = deriv(1, &(p + &k1p * half), &(&phi0 + &k1f * half));
    let (k3p, k3f) = deriv(1, &(p + &k2p * half), &(&phi0 + &k2f * half));
    let (k4p, k4f) = deriv(2, &(p + &k3p * h), &(&phi0 + &k3f * h));
    let sixth = h / lit(6.0);
    let two = lit::<T>(2.0);
    let mut pn = p + (k1p + k2p * two + k3p * two + k4p) * sixth;
    let phin = phi0 + (k1f + k2f * two + k3f * two + k4f) * sixth;
    symmetrize(&mut pn);
    check_covariance(&pn, t + h)?;
    Ok((pn, phin))
}

/// Linearised Kalman update. Returns the updated mean, covariance and the
/// innovation `z − h(x)`.
pub fn kalman_update<T: Real>(
    model: &dyn SystemModel<T>,
    x: &DVector<T>,
    p: &DMatrix<T>,
    linearize_at: &DVector<T>,
    z: &DVector<T>,
    t: T,
) -> Result<(DVector<T>, DMatrix<T>, DVector<T>)> {
    let h = model.measurement_jacobian(linearize_at);
    let s = &h * p * h.transpose() + model.meas_covariance();
    let chol = s
        .cholesky()
        .ok_or_else(|| EstimationError::NotPositiveDefinite("innovation covariance".into()))?;
    let ph = p * h.transpose();
    // K = P Hᵀ S⁻¹
    let gain = chol.solve(&ph.transpose()).transpose();
    let innovation = z - model.measurement(x);
    let xn = x + &gain * &innovation;
    // Joseph form keeps the update positive semi-definite under round-off.
    let a = DMatrix::identity(p.nrows(), p.nrows()) - &gain * &h;
    let mut pn = &a * p * a.transpose() + &gain * model.meas_covariance() * gain.transpose();
    symmetrize(&mut pn);
    check_covariance(&pn, t)?;
    Ok((xn, pn, innovation))
}
