//! Monte-Carlo comparison harness for the Chebyshev MAP estimators and the
//! filter/smoother baselines.

pub mod config;
pub mod metrics;
pub mod models;
pub mod plot;
pub mod report;
pub mod runner;
pub mod simulate;

use chebmap_core::EstimationError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("truth simulation diverged at t = {time}")]
    Simulation { time: f64 },
    #[error("estimator '{0}' saw a different measurement realisation")]
    Fairness(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(String),
    #[error("plot: {0}")]
    Plot(String),
}

pub use config::ExperimentConfig;
pub use report::{ExperimentReport, TimingReport};
pub use runner::{run_monte_carlo, run_single};
