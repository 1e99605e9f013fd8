//! Named models available to experiment configs.

use nalgebra::{dmatrix, DMatrix, DVector};

use chebmap_core::system_models::{BallisticReentry, LinearGaussian, RateStructure, SystemModel, VanDerPol};

use crate::config::ExperimentConfig;
use crate::HarnessError;

pub struct ModelSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub description: &'static str,
    /// Config keys with their defaults.
    pub parameters: &'static [(&'static str, f64)],
}

pub const MODELS: &[ModelSpec] = &[
    ModelSpec {
        name: "van_der_pol",
        state_dim: 2,
        description: "Van der Pol oscillator, position measured",
        parameters: &[("lambda", 3.0)],
    },
    ModelSpec {
        name: "ballistic",
        state_dim: 3,
        description: "falling body (altitude, speed, ballistic coefficient) seen by a ranging radar",
        parameters: &[("gamma", 5e-5), ("radar_altitude", 1e5), ("radar_distance", 1e5)],
    },
    ModelSpec {
        name: "linear_oscillator",
        state_dim: 2,
        description: "damped linear oscillator, position measured",
        parameters: &[("omega", 1.0), ("damping", 0.15)],
    },
];

pub fn lookup(name: &str) -> Option<&'static ModelSpec> {
    MODELS.iter().find(|m| m.name == name)
}

/// Builds the configured model with spectral density `diag(q_diag)`.
pub fn build(cfg: &ExperimentConfig, q_diag: &[f64]) -> Result<Box<dyn SystemModel<f64>>, HarnessError> {
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(q_diag));
    let r = dmatrix![cfg.measurement_covariance];
    let model: Box<dyn SystemModel<f64>> = match cfg.model.as_str() {
        "van_der_pol" => Box::new(
            VanDerPol::new(cfg.lambda.unwrap_or(3.0))
                .with_spectral_density(q)?
                .with_meas_covariance(r)?,
        ),
        "ballistic" => Box::new(
            BallisticReentry::new(
                cfg.gamma.unwrap_or(5e-5),
                cfg.radar_altitude.unwrap_or(1e5),
                cfg.radar_distance.unwrap_or(1e5),
            )?
            .with_spectral_density(q)?
            .with_meas_covariance(r)?,
        ),
        "linear_oscillator" => {
            let w = cfg.omega.unwrap_or(1.0);
            let z = cfg.damping.unwrap_or(0.15);
            let a = dmatrix![0.0, 1.0; -w * w, -2.0 * z * w];
            Box::new(
                LinearGaussian::new(a, DMatrix::identity(2, 2), q, dmatrix![1.0, 0.0], r)?
                    .with_rate_structure(0, RateStructure::Linear { source: 1, gain: 1.0 })?,
            )
        }
        other => return Err(HarnessError::Config(format!("unknown model '{other}'"))),
    };
    Ok(model)
}
