use nalgebra::{dmatrix, DMatrix, DVector};

use super::{check_shape, validate_noise, RateStructure, SystemModel};
use crate::error::{EstimationError, Result};
use crate::scalar::{lit, Real};

/// Vertically falling body tracked by a ranging radar.
///
/// State: altitude `x₁` (ft), falling speed `x₂` (ft/s) and ballistic
/// coefficient `x₃`. Dynamics `ẋ₁ = -x₂`, `ẋ₂ = -exp(-γx₁)x₂²x₃`, `ẋ₃ = 0`;
/// range `h = √((x₁ - H)² + M²)` to a radar at altitude `H` and horizontal
/// offset `M`.
#[derive(Debug, Clone)]
pub struct BallisticReentry<T: Real> {
    pub gamma: T,
    pub radar_altitude: T,
    pub radar_distance: T,
    spectral_density: DMatrix<T>,
    meas_covariance: DMatrix<T>,
}

impl<T: Real> BallisticReentry<T> {
    /// Noise-free dynamics (`Q = 0`) and `R = 10⁴ ft²`.
    pub fn new(gamma: T, radar_altitude: T, radar_distance: T) -> Result<Self> {
        if !(gamma > T::zero()) {
            return Err(EstimationError::Argument("gamma must be positive".into()));
        }
        Ok(Self {
            gamma,
            radar_altitude,
            radar_distance,
            spectral_density: DMatrix::zeros(3, 3),
            meas_covariance: dmatrix![lit::<T>(1e4)],
        })
    }

    /// `γ = 5·10⁻⁵`, `H = M = 10⁵ ft`.
    pub fn standard() -> Self {
        Self::new(lit(5e-5), lit(1e5), lit(1e5)).expect("valid constants")
    }

    pub fn with_spectral_density(mut self, q: DMatrix<T>) -> Result<Self> {
        check_shape(&q, 3, 3, "spectral density")?;
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

impl<T: Real> SystemModel<T> for BallisticReentry<T> {
    fn name(&self) -> &str {
        "ballistic_reentry"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &DVector<T>, _u: &DVector<T>, _t: T) -> DVector<T> {
        let decay = (-self.gamma * x[0]).exp();
        DVector::from_vec(vec![-x[1], -decay * x[1] * x[1] * x[2], T::zero()])
    }

    fn dynamics_jacobian(&self, x: &DVector<T>, _u: &DVector<T>, _t: T) -> DMatrix<T> {
        let decay = (-self.gamma * x[0]).exp();
        let (v, beta) = (x[1], x[2]);
        let two = lit::<T>(2.0);
        let z = T::zero();
        dmatrix![
            z, -T::one(), z;
            self.gamma * decay * v * v * beta, -two * decay * v * beta, -decay * v * v;
            z, z, z
        ]
    }

    fn measurement(&self, x: &DVector<T>) -> DVector<T> {
        let dz = x[0] - self.radar_altitude;
        DVector::from_element(1, (dz * dz + self.radar_distance * self.radar_distance).sqrt())
    }

    fn measurement_jacobian(&self, x: &DVector<T>) -> DMatrix<T> {
        let dz = x[0] - self.radar_altitude;
        let range = (dz * dz + self.radar_distance * self.radar_distance).sqrt();
        dmatrix![dz / range, T::zero(), T::zero()]
    }

    fn noise_matrix(&self, _t: T) -> DMatrix<T> {
        DMatrix::identity(3, 3)
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
                gain: -T::one(),
            },
            2 => RateStructure::Zero,
            _ => RateStructure::General,
        }
    }
}
