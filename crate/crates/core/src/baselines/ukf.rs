use nalgebra::{DMatrix, DVector};

use super::propagate::time_grid;
use super::trace::{belief, start_step, FilterTrace, TraceStep};
use crate::error::{EstimationError, Result};
use crate::linalg::{check_covariance, symmetrize};
use crate::scalar::{from_usize, lit, Real};
use crate::system_models::{GaussianBelief, Measurement, SystemModel};

/// Sigma-point scaling `(α, β, κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub kappa: T,
}

impl<T: Real> Default for UtParams<T> {
    fn default() -> Self {
        Self {
            alpha: lit(1e-3),
            beta: lit(2.0),
            kappa: T::zero(),
        }
    }
}

/// Any `S` with `S Sᵀ = P`: Cholesky, or for a covariance that is singular
/// to working precision (noise-free states collapse onto a manifold) the
/// symmetric root with round-off negative eigenvalues clamped to zero.
fn square_root<T: Real>(p: &DMatrix<T>, time: T) -> Result<DMatrix<T>> {
    if let Some(c) = p.clone().cholesky() {
        return Ok(c.l());
    }
    check_covariance(p, time)?;
    let eig = p.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

struct SigmaSet<T: Real> {
    /// Offsets `X_i − m` for the `2n` non-central points.
    offsets: Vec<DVector<T>>,
    /// Weight shared by every non-central point (mean and covariance alike).
    weight: T,
    /// Extra covariance weight on the central point beyond its mean weight.
    central_extra: T,
}

fn sigma_set<T: Real>(p: &DMatrix<T>, ut: &UtParams<T>, time: T) -> Result<SigmaSet<T>> {
    let n = p.nrows();
    let nf = from_usize::<T>(n);
    let lambda = ut.alpha * ut.alpha * (nf + ut.kappa) - nf;
    let spread = nf + lambda;
    if !(spread > T::zero()) {
        return Err(EstimationError::Argument("sigma-point spread must be positive".into()));
    }
    let l = square_root(p, time)? * spread.sqrt();
    let mut offsets = Vec::with_capacity(2 * n);
    for j in 0..n {
        offsets.push(l.column(j).into_owned());
    }
    for j in 0..n {
        offsets.push(-l.column(j).into_owned());
    }
    Ok(SigmaSet {
        offsets,
        weight: T::one() / (lit::<T>(2.0) * spread),
        central_extra: T::one() - ut.alpha * ut.alpha + ut.beta,
    })
}

/// `(E[g(x)], Cov[x, g(x)], Cov[g(x)])` for `x ~ N(m, P)`, in deviation form
/// about `g(m)` so the large central weight never multiplies raw values.
fn unscented<T: Real>(
    m: &DVector<T>,
    set: &SigmaSet<T>,
    g: impl Fn(&DVector<T>) -> DVector<T>,
) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
    let g0 = g(m);
    let dev: Vec<DVector<T>> = set.offsets.iter().map(|d| g(&(m + d)) - &g0).collect();
    let mut shift = DVector::zeros(g0.len());
    for d in &dev {
        shift += d * set.weight;
    }
    let mean = &g0 + &shift;
    // with symmetric offsets the central point drops out of the cross term,
    // and the large central weight cancels analytically in the covariance
    let mut cross = DMatrix::zeros(m.len(), g0.len());
    let mut cov = DMatrix::zeros(g0.len(), g0.len());
    for (x_off, d) in set.offsets.iter().zip(&dev) {
        cross += x_off * d.transpose() * set.weight;
        cov += d * d.transpose() * set.weight;
    }
    cov += &shift * shift.transpose() * (set.central_extra - T::one());
    (mean, cross, cov)
}

/// Continuous-discrete unscented Kalman filter.
///
/// Between measurements the sigma-point moment equations
/// `ṁ = E[f]`, `Ṗ = Cov[x, f] + Cov[f, x] + GQGᵀ` are integrated by RK4,
/// redrawing the sigma points at every stage.
pub fn ukf_cd<T: Real>(
    initial: &GaussianBelief<T>,
    measurements: &[Measurement<T>],
    model: &dyn SystemModel<T>,
    step: T,
    t_end: T,
    ut: UtParams<T>,
) -> Result<FilterTrace<T>> {
    let times: Vec<T> = measurements.iter().map(|z| z.time).collect();
    let (grid, at_start) = time_grid(initial.time, &times, t_end, step)?;
    let mut steps = Vec::with_capacity(grid.len() + 1);
    let mut first = start_step(initial.clone());
    first.transition = None;
    if let Some(k) = at_start {
        update(&mut first, model, &measurements[k].value, k, &ut)?;
    }
    steps.push(first);

    let mut x = steps[0].updated.mean.clone();
    let mut p = steps[0].updated.covariance.clone();
    let mut t = initial.time;
    for (tn, meas) in grid {
        let (xn, pn) = rk4_moments(model, &x, &p, t, tn - t, &ut)?;
        let mut s = TraceStep {
            time: tn,
            predicted: belief(xn.clone(), pn.clone(), tn),
            updated: belief(xn, pn, tn),
            transition: None,
            measurement: None,
            innovation: None,
        };
        if let Some(k) = meas {
            update(&mut s, model, &measurements[k].value, k, &ut)?;
        }
        x = s.updated.mean.clone();
        p = s.updated.covariance.clone();
        t = tn;
        steps.push(s);
    }
    Ok(FilterTrace { steps })
}

fn rk4_moments<T: Real>(
    model: &dyn SystemModel<T>,
    x: &DVector<T>,
    p: &DMatrix<T>,
    t: T,
    h: T,
    ut: &UtParams<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let deriv = |x: &DVector<T>, p: &DMatrix<T>, t: T| -> Result<(DVector<T>, DMatrix<T>)> {
        let mut p = p.clone();
        symmetrize(&mut p);
        let set = sigma_set(&p, ut, t)?;
        let (mean, cross, _) = unscented(x, &set, |s| model.drift(s, t));
        Ok((mean, &cross + cross.transpose() + model.diffusion(t)))
    };
    let half = h * lit(0.5);
    let (k1x, k1p) = deriv(x, p, t)?;
    let (k2x, k2p) = deriv(&(x + &k1x * half), &(p + &k1p * half), t + half)?;
    let (k3x, k3p) = deriv(&(x + &k2x * half), &(p + &k2p * half), t + half)?;
    let (k4x, k4p) = deriv(&(x + &k3x * h), &(p + &k3p * h), t + h)?;
    let sixth = h / lit(6.0);
    let two = lit::<T>(2.0);
    let xn = x + (k1x + k2x * two + k3x * two + k4x) * sixth;
    let mut pn = p + (k1p + k2p * two + k3p * two + k4p) * sixth;
    symmetrize(&mut pn);
    check_covariance(&pn, t + h)?;
    Ok((xn, pn))
}

fn update<T: Real>(
    step: &mut TraceStep<T>,
    model: &dyn SystemModel<T>,
    z: &DVector<T>,
    k: usize,
    ut: &UtParams<T>,
) -> Result<()> {
    let prior = &step.predicted;
    let set = sigma_set(&prior.covariance, ut, step.time)?;
    let (z_hat, cross, cov) = unscented(&prior.mean, &set, |s| model.measurement(s));
    let s = cov + model.meas_covariance();
    let chol = s
        .cholesky()
        .ok_or_else(|| EstimationError::NotPositiveDefinite("innovation covariance".into()))?;
    let gain = chol.solve(&cross.transpose()).transpose();
    let innov = z - &z_hat;
    let x = &prior.mean + &gain * &innov;
    let mut p = &prior.covariance - &gain * cross.transpose();
    symmetrize(&mut p);
    check_covariance(&p, step.time)?;
    step.updated = belief(x, p, step.time);
    step.measurement = Some(k);
    step.innovation = Some(innov);
    Ok(())
}
