use nalgebra::{dmatrix, DMatrix, DVector};

use super::{check_shape, validate_noise, RateStructure, SystemModel};
use crate::error::Result;
use crate::scalar::{lit, Real};

/// Van der Pol oscillator with position measurements:
/// `ẋ₁ = x₂`, `ẋ₂ = -λ(x₁² - 1)x₂ - x₁`, `z = x₁ + v`.
#[derive(Debug, Clone)]
pub struct VanDerPol<T: Real> {
    pub lambda: T,
    spectral_density: DMatrix<T>,
    meas_covariance: DMatrix<T>,
}

impl<T: Real> VanDerPol<T> {
    /// Noise only on the velocity channel, `Q = diag(0, 1)`, `R = 0.04`.
    pub fn new(lambda: T) -> Self {
        Self {
            lambda,
            spectral_density: dmatrix![T::zero(), T::zero(); T::zero(), T::one()],
            meas_covariance: dmatrix![lit::<T>(0.04)],
        }
    }

    pub fn with_spectral_density(mut self, q: DMatrix<T>) -> Result<Self> {
        check_shape(&q, 2, 2, "spectral density")?;
        self.spectral_density = q;
        validate_noise(&self)?;
        Ok(self)
    }

    pub fn with_meas_covariance(mut self, r: DMatrix<T>) -> Result<Self> {
        check_shape(&r, 1, 1, "measurement covariance")?;
        self.meas_covariance = r;
        validate_noise(&self)?;
        Ok(self)
    }
}

impl<T: Real> SystemModel<T> for VanDerPol<T> {
    fn name(&self) -> &str {
        "van_der_pol"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &DVector<T>, _u: &DVector<T>, _t: T) -> DVector<T> {
        let (x1, x2) = (x[0], x[1]);
        DVector::from_vec(vec![x2, -self.lambda * (x1 * x1 - T::one()) * x2 - x1])
    }

    fn dynamics_jacobian(&self, x: &DVector<T>, _u: &DVector<T>, _t: T) -> DMatrix<T> {
        let (x1, x2) = (x[0], x[1]);
        let two = lit::<T>(2.0);
        dmatrix![
            T::zero(), T::one();
            -two * self.lambda * x1 * x2 - T::one(), -self.lambda * (x1 * x1 - T::one())
        ]
    }

    fn measurement(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_element(1, x[0])
    }

    fn measurement_jacobian(&self, _x: &DVector<T>) -> DMatrix<T> {
        dmatrix![T::one(), T::zero()]
    }

    fn noise_matrix(&self, _t: T) -> DMatrix<T> {
        DMatrix::identity(2, 2)
    }

    fn spectral_density(&self) -> DMatrix<T> {
        self.spectral_density.clone()
    }

    fn meas_covariance(&self) -> DMatrix<T> {
        self.meas_covariance.clone()
    }

    fn rate_structure(&self, component: usize) -> RateStructure<T> {
        match component {
            0 => RateStructure::Linear {
                source: 1,
                gain: T::one(),
            },
            _ => RateStructure::General,
        }
    }
}
