//! Small dense linear-algebra helpers used across estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{EstimationError, Result};
use crate::scalar::{lit, Real};

/// Replaces `p` by `(p + pᵀ) / 2`.
pub fn symmetrize<T: Real>(p: &mut DMatrix<T>) {
    let n = p.nrows();
    let half = lit::<T>(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (p[(i, j)] + p[(j, i)]) * half;
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
    }
}

pub fn is_finite_vec<T: Real>(v: &DVector<T>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn is_finite_mat<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse<T: Real>(p: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| EstimationError::NotPositiveDefinite(what.to_string()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// `p⁻¹ b` for symmetric positive-definite `p`, factorised after scaling to
/// unit diagonal so that badly scaled states do not spoil the Cholesky.
pub fn spd_solve<T: Real>(p: &DMatrix<T>, b: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let n = p.nrows();
    let mut d = DVector::zeros(n);
    for i in 0..n {
        if !(p[(i, i)] > T::zero()) {
            return Err(EstimationError::NotPositiveDefinite(what.to_string()));
        }
        d[i] = T::one() / p[(i, i)].sqrt();
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| p[(i, j)] * d[i] * d[j]);
    let chol = scaled
        .cholesky()
        .ok_or_else(|| EstimationError::NotPositiveDefinite(what.to_string()))?;
    let rhs = DMatrix::from_fn(n, b.ncols(), |i, j| b[(i, j)] * d[i]);
    let y = chol.solve(&rhs);
    Ok(DMatrix::from_fn(n, b.ncols(), |i, j| y[(i, j)] * d[i]))
}

/// Lower-triangular `W` with `W Wᵀ = p⁻¹`.
///
/// Residuals are whitened as `Wᵀ e`, so `‖Wᵀ e‖² = eᵀ p⁻¹ e`.
pub fn information_factor<T: Real>(p: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let inv = spd_inverse(p, what)?;
    inv.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| EstimationError::NotPositiveDefinite(format!("inverse of {what}")))
}

/// Symmetric matrix with its negative eigenvalues set to zero.
pub fn psd_part<T: Real>(p: &DMatrix<T>) -> DMatrix<T> {
    let eig = p.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(T::zero()));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(p: &DMatrix<T>) -> T {
    let eig = p.clone().symmetric_eigen();
    eig.eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Checks that a covariance is (numerically) positive definite: its smallest
/// eigenvalue may not drop below `-1e-9 · trace`.
pub fn check_covariance<T: Real>(p: &DMatrix<T>, time: T) -> Result<()> {
    let tr = p.trace().abs();
    let tol = lit::<T>(1e-9) * tr;
    if !is_finite_mat(p) || min_eigenvalue(p) < -tol {
        return Err(EstimationError::CovarianceNotPd {
            time: crate::scalar::to_f64(time),
        });
    }
    Ok(())
}

/// Outcome of a diagonally pivoted Cholesky factorisation.
#[derive(Debug, Clone)]
pub struct PivotedCholesky<T: Real> {
    /// Numerical rank.
    pub rank: usize,
    /// Pivot order; the first `rank` entries are the retained indices.
    pub order: Vec<usize>,
    /// `n × rank` factor in the original row order: `a ≈ l lᵀ`.
    pub factor: DMatrix<T>,
    /// Smallest pivot that was not accepted, if any.
    pub first_rejected: Option<T>,
    /// Smallest accepted pivot, if any.
    pub last_accepted: Option<T>,
}

/// Pivoted Cholesky of a symmetric PSD matrix; pivots below `threshold`
/// terminate the factorisation.
pub fn pivoted_cholesky<T: Real>(a: &DMatrix<T>, threshold: T) -> PivotedCholesky<T> {
    let n = a.nrows();
    let mut work = a.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut factor = DMatrix::<T>::zeros(n, n);
    let mut rank = 0;
    let mut first_rejected = None;
    let mut last_accepted = None;

    for k in 0..n {
        // choose largest remaining diagonal
        let mut best = k;
        for j in (k + 1)..n {
            if work[(order[j], order[j])] > work[(order[best], order[best])] {
                best = j;
            }
        }
        order.swap(k, best);
        let p = order[k];
        let pivot = work[(p, p)];
        if pivot <= threshold {
            first_rejected = Some(pivot);
            break;
        }
        last_accepted = Some(pivot);
        let root = pivot.sqrt();
        factor[(p, k)] = root;
        for &i in &order[(k + 1)..] {
            factor[(i, k)] = work[(i, p)] / root;
        }
        for &i in &order[(k + 1)..] {
            for &j in &order[(k + 1)..] {
                let upd = factor[(i, k)] * factor[(j, k)];
                work[(i, j)] -= upd;
            }
        }
        rank += 1;
    }

    PivotedCholesky {
        rank,
        order,
        factor: factor.columns(0, rank).into_owned(),
        first_rejected,
        last_accepted,
    }
}
