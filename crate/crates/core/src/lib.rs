//! Continuous-time MAP state estimation with Chebyshev trajectories.
//!
//! Everything numeric is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64`.

pub mod baselines;
pub mod batch_estimator;
pub mod cheb_basis;
pub mod error;
pub mod linalg;
pub mod nlsq_solver;
pub mod scalar;
pub mod sliding_estimator;
pub mod system_models;

pub use error::{EstimationError, Result};
pub use scalar::Real;

pub type AffineTimeMap = cheb_basis::AffineTimeMap<f64>;
pub type CollocationGrid = cheb_basis::CollocationGrid<f64>;
pub type ChebyshevTrajectory = batch_estimator::ChebyshevTrajectory<f64>;
pub type MapProblem<'a> = batch_estimator::MapProblem<'a, f64>;
pub type Parameterization = batch_estimator::Parameterization<f64>;
pub type SolverConfig = nlsq_solver::SolverConfig<f64>;
pub type SolveStats = nlsq_solver::SolveStats<f64>;
pub type GaussianBelief = system_models::GaussianBelief<f64>;
pub type Measurement = system_models::Measurement<f64>;
pub type NoisePartition = system_models::NoisePartition<f64>;
pub type NoiseStrategy = system_models::NoiseStrategy<f64>;
pub type VanDerPol = system_models::VanDerPol<f64>;
pub type BallisticReentry = system_models::BallisticReentry<f64>;
pub type LinearGaussian = system_models::LinearGaussian<f64>;
pub type FilterTrace = baselines::FilterTrace<f64>;
pub type UtParams = baselines::UtParams<f64>;
pub type WindowConfig = sliding_estimator::WindowConfig<f64>;
pub type WindowResult = sliding_estimator::WindowResult<f64>;
