use nalgebra::{DMatrix, DVector};

use super::layout::Parameterization;
use crate::cheb_basis::{eval_basis, AffineTimeMap};
use crate::error::{EstimationError, Result};
use crate::scalar::{lit, Real};

/// State trajectory over one time window as a Chebyshev expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevTrajectory<T: Real> {
    pub time_map: AffineTimeMap<T>,
    pub layout: Parameterization<T>,
    pub params: DVector<T>,
}

impl<T: Real> ChebyshevTrajectory<T> {
    pub fn new(
        time_map: AffineTimeMap<T>,
        layout: Parameterization<T>,
        params: DVector<T>,
    ) -> Result<Self> {
        layout.check_len(&params)?;
        Ok(Self {
            time_map,
            layout,
            params,
        })
    }

    pub fn order(&self) -> usize {
        self.layout.order()
    }

    fn half_len(&self) -> T {
        self.time_map.length() * lit(0.5)
    }

    fn tau(&self, t: T) -> Result<T> {
        self.time_map.checked_forward(t).map_err(|_| {
            EstimationError::Domain(format!(
                "t = {} outside trajectory window [{}, {}]",
                crate::scalar::to_f64(t),
                crate::scalar::to_f64(self.time_map.t_start()),
                crate::scalar::to_f64(self.time_map.t_end())
            ))
        })
    }

    /// State and rate in τ-units at `tau`.
    pub fn eval_tau(&self, tau: T) -> Result<(DVector<T>, DVector<T>)> {
        let basis = eval_basis(self.order(), tau)?;
        Ok(self.layout.state_and_rate(&basis, self.half_len(), &self.params))
    }

    /// State and time derivative (per second) at `t`.
    pub fn eval(&self, t: T) -> Result<(DVector<T>, DVector<T>)> {
        let (x, dx) = self.eval_tau(self.tau(t)?)?;
        Ok((x, dx * self.time_map.rate_scale()))
    }

    pub fn state(&self, t: T) -> Result<DVector<T>> {
        Ok(self.eval(t)?.0)
    }

    /// `∂x(t)/∂params`, `n × P`.
    pub fn sensitivity(&self, t: T) -> Result<DMatrix<T>> {
        let basis = eval_basis(self.order(), self.tau(t)?)?;
        Ok(self.layout.sensitivity(&basis, self.half_len()).0)
    }

    /// State covariance at `t` from a parameter covariance.
    pub fn state_covariance(&self, param_cov: &DMatrix<T>, t: T) -> Result<DMatrix<T>> {
        let b = self.sensitivity(t)?;
        let mut p = &b * param_cov * b.transpose();
        crate::linalg::symmetrize(&mut p);
        Ok(p)
    }

    /// Plain Chebyshev coefficients of every component, `(N + 2) × n`.
    pub fn coefficients(&self) -> DMatrix<T> {
        self.layout.coefficients(&self.params, self.half_len())
    }
}
