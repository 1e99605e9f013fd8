//! Continuous-discrete system models.
//!
//! A model supplies the drift `f(x, u, t)`, the measurement map `h(x)`, their
//! Jacobians and the noise descriptors `G`, `Q` (spectral density) and `R`.

mod ballistic;
mod linear;
mod partition;
mod van_der_pol;

use nalgebra::{DMatrix, DVector};

pub use ballistic::BallisticReentry;
pub use linear::LinearGaussian;
pub use partition::{partition_covariance, partition_noise, NoisePartition, NoiseStrategy, RankSplit};
pub use van_der_pol::VanDerPol;

use crate::error::{EstimationError, Result};
use crate::linalg::{is_finite_mat, symmetrize};
use crate::scalar::{lit, to_f64, Real};

/// A discrete measurement `z_k` taken at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T: Real> {
    pub time: T,
    pub value: DVector<T>,
}

impl<T: Real> Measurement<T> {
    pub fn new(time: T, value: DVector<T>) -> Self {
        Self { time, value }
    }
}

/// How one state component's rate depends on the rest of the state.
///
/// Used to decide whether a noise-free component can be written as the
/// anchored integral of a noisy one and dropped from the optimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateStructure<T: Real> {
    /// No exploitable structure.
    General,
    /// `ẋ_i ≡ 0`.
    Zero,
    /// `ẋ_i = gain · x_source`.
    Linear { source: usize, gain: T },
}

pub trait SystemModel<T: Real>: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;

    fn control_dim(&self) -> usize {
        0
    }

    /// Known control input; identically zero unless overridden.
    fn control(&self, _t: T) -> DVector<T> {
        DVector::zeros(self.control_dim())
    }

    fn dynamics(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DVector<T>;
    fn dynamics_jacobian(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DMatrix<T>;
    fn measurement(&self, x: &DVector<T>) -> DVector<T>;
    fn measurement_jacobian(&self, x: &DVector<T>) -> DMatrix<T>;

    /// Noise-driving matrix `G(t)`, `n × q`.
    fn noise_matrix(&self, t: T) -> DMatrix<T>;
    /// Spectral density `Q`, `q × q`.
    fn spectral_density(&self) -> DMatrix<T>;
    /// Measurement covariance `R_k`, `m × m`.
    fn meas_covariance(&self) -> DMatrix<T>;

    fn rate_structure(&self, _component: usize) -> RateStructure<T> {
        RateStructure::General
    }

    /// `f(x, u(t), t)`.
    fn drift(&self, x: &DVector<T>, t: T) -> DVector<T> {
        self.dynamics(x, &self.control(t), t)
    }

    fn drift_jacobian(&self, x: &DVector<T>, t: T) -> DMatrix<T> {
        self.dynamics_jacobian(x, &self.control(t), t)
    }

    /// `G Q Gᵀ`.
    fn diffusion(&self, t: T) -> DMatrix<T> {
        let g = self.noise_matrix(t);
        let mut d = &g * self.spectral_density() * g.transpose();
        symmetrize(&mut d);
        d
    }
}

/// Checks `Q` symmetric PSD and `R` symmetric PD.
pub fn validate_noise<T: Real>(model: &dyn SystemModel<T>) -> Result<()> {
    let q = model.spectral_density();
    let r = model.meas_covariance();
    check_symmetric(&q, "spectral density")?;
    check_symmetric(&r, "measurement covariance")?;
    let tol = lit::<T>(1e-12) * q.amax().max(T::one());
    if crate::linalg::min_eigenvalue(&q) < -tol {
        return Err(EstimationError::NotPositiveDefinite(
            "spectral density must be positive semi-definite".into(),
        ));
    }
    if r.clone().cholesky().is_none() {
        return Err(EstimationError::NotPositiveDefinite(
            "measurement covariance".into(),
        ));
    }
    Ok(())
}

fn check_symmetric<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if !m.is_square() || !is_finite_mat(m) {
        return Err(EstimationError::Argument(format!("{what} must be a finite square matrix")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > lit::<T>(1e-12) * m.amax().max(T::one()) {
        return Err(EstimationError::Argument(format!("{what} is not symmetric")));
    }
    Ok(())
}

fn check_shape<T: Real>(m: &DMatrix<T>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(EstimationError::Dimension(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Mean and covariance at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief<T: Real> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
    pub time: T,
}

impl<T: Real> GaussianBelief<T> {
    /// Builds a belief, symmetrising the covariance and requiring it PD.
    pub fn new(mean: DVector<T>, mut covariance: DMatrix<T>, time: T) -> Result<Self> {
        if covariance.nrows() != mean.len() || !covariance.is_square() {
            return Err(EstimationError::Dimension(format!(
                "covariance {}x{} does not match mean of length {}",
                covariance.nrows(),
                covariance.ncols(),
                mean.len()
            )));
        }
        symmetrize(&mut covariance);
        if covariance.clone().cholesky().is_none() {
            return Err(EstimationError::NotPositiveDefinite(format!(
                "belief covariance at t = {}",
                to_f64(time)
            )));
        }
        Ok(Self {
            mean,
            covariance,
            time,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Squared Mahalanobis distance of `truth` from the mean.
    pub fn nees(&self, truth: &DVector<T>) -> Result<T> {
        let chol = self
            .covariance
            .clone()
            .cholesky()
            .ok_or_else(|| EstimationError::NotPositiveDefinite("belief covariance".into()))?;
        let e = &self.mean - truth;
        Ok(e.dot(&chol.solve(&e)))
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn belief_is_symmetrised() {
        let b = GaussianBelief::new(dvector![0.0, 0.0], dmatrix![2.0, 0.2; 0.1, 1.0], 0.0).unwrap();
        assert_eq!(b.covariance[(0, 1)], b.covariance[(1, 0)]);
        assert!(GaussianBelief::new(dvector![0.0], dmatrix![-1.0], 0.0).is_err());
    }

    #[test]
    fn nees_of_unit_offset() {
        let b = GaussianBelief::new(dvector![0.0f64, 0.0], dmatrix![4.0, 0.0; 0.0, 1.0], 1.0).unwrap();
        let v = b.nees(&dvector![2.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn noise_validation() {
        let ok = VanDerPol::new(3.0f64);
        assert!(validate_noise(&ok).is_ok());
        let bad = VanDerPol::new(3.0f64).with_meas_covariance(dmatrix![0.0]);
        assert!(bad.is_err());
        let bad_q = VanDerPol::new(3.0f64).with_spectral_density(dmatrix![0.0, 0.0; 0.0, -1.0]);
        assert!(bad_q.is_err());
    }
}
