use nalgebra::{DMatrix, DVector};

use super::{check_shape, validate_noise, RateStructure, SystemModel};
use crate::error::{EstimationError, Result};
use crate::scalar::Real;

/// Linear time-invariant model `ẋ = A x + G w`, `z = C x + v`.
///
/// Used as the reference problem on which every estimator must agree with
/// the closed-form Kalman filter and RTS smoother.
#[derive(Debug, Clone)]
pub struct LinearGaussian<T: Real> {
    pub a: DMatrix<T>,
    pub g: DMatrix<T>,
    pub q: DMatrix<T>,
    pub c: DMatrix<T>,
    pub r: DMatrix<T>,
    structure: Vec<RateStructure<T>>,
}

impl<T: Real> LinearGaussian<T> {
    pub fn new(
        a: DMatrix<T>,
        g: DMatrix<T>,
        q: DMatrix<T>,
        c: DMatrix<T>,
        r: DMatrix<T>,
    ) -> Result<Self> {
        let n = a.nrows();
        check_shape(&a, n, n, "A")?;
        check_shape(&g, n, q.nrows(), "G")?;
        check_shape(&c, c.nrows(), n, "C")?;
        let model = Self {
            a,
            g,
            q,
            c,
            r,
            structure: vec![RateStructure::General; n],
        };
        validate_noise(&model)?;
        Ok(model)
    }

    /// Declares the rate structure of one component; it must agree with `A`.
    pub fn with_rate_structure(mut self, component: usize, s: RateStructure<T>) -> Result<Self> {
        let n = self.a.nrows();
        let row = self.a.row(component);
        let consistent = match s {
            RateStructure::General => true,
            RateStructure::Zero => row.iter().all(|v| *v == T::zero()),
            RateStructure::Linear { source, gain } => (0..n).all(|j| {
                let expect = if j == source { gain } else { T::zero() };
                row[j] == expect
            }),
        };
        if !consistent {
            return Err(EstimationError::Argument(format!(
                "rate structure of component {component} disagrees with A"
            )));
        }
        self.structure[component] = s;
        Ok(self)
    }
}

impl<T: Real> SystemModel<T> for LinearGaussian<T> {
    fn name(&self) -> &str {
        "linear_gaussian"
    }

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn meas_dim(&self) -> usize {
        self.c.nrows()
    }

    fn dynamics(&self, x: &DVector<T>, _u: &DVector<T>, _t: T) -> DVector<T> {
        &self.a * x
    }

    fn dynamics_jacobian(&self, _x: &DVector<T>, _u: &DVector<T>, _t: T) -> DMatrix<T> {
        self.a.clone()
    }

    fn measurement(&self, x: &DVector<T>) -> DVector<T> {
        &self.c * x
    }

    fn measurement_jacobian(&self, _x: &DVector<T>) -> DMatrix<T> {
        self.c.clone()
    }

    fn noise_matrix(&self, _t: T) -> DMatrix<T> {
        self.g.clone()
    }

    fn spectral_density(&self) -> DMatrix<T> {
        self.q.clone()
    }

    fn meas_covariance(&self) -> DMatrix<T> {
        self.r.clone()
    }

    fn rate_structure(&self, component: usize) -> RateStructure<T> {
        self.structure[component]
    }
}
