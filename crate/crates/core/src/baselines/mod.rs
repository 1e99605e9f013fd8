//! Reference estimators: continuous-discrete EKF and UKF, the extended RTS
//! smoother (batch and fixed-lag) and the smoother error bound evaluated at
//! the true trajectory.

mod ekf;
pub mod propagate;
mod smoother;
mod trace;
mod ukf;

pub use ekf::ekf_cd;
pub use smoother::{crlb_smoother, erts_smooth, fixed_lag_erts, interpolate_mean};
pub(crate) use smoother::rts_covariance;
pub use trace::{FilterTrace, TraceStep};
pub use ukf::{ukf_cd, UtParams};
