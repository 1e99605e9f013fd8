use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("covariance lost positive definiteness at t = {time}")]
    CovarianceNotPd { time: f64 },
    #[error("least-squares solver stalled: {0}")]
    Stalled(String),
}

pub type Result<T> = std::result::Result<T, EstimationError>;
