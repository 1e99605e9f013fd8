//! Flat key-value experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Chevopt,
    Wchevopt,
    Ekf,
    Ukf,
    Erts,
    FixedLagErts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyChoice {
    /// Integrate out when the model allows it, pseudo-noise otherwise.
    Auto,
    IntegrateOut,
    Constraint,
    PseudoNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    PriorMean,
    EkfFit,
}

fn default_period() -> f64 {
    1.0
}
fn default_truth_step() -> f64 {
    5e-4
}
fn default_filter_step() -> f64 {
    0.01
}
fn default_alpha() -> f64 {
    1e-3
}
fn default_beta() -> f64 {
    2.0
}
fn default_max_iter() -> usize {
    200
}
fn default_cost_tol() -> f64 {
    1e-10
}
fn default_grad_tol() -> f64 {
    1e-8
}
fn default_step_tol() -> f64 {
    1e-10
}
fn default_pseudo() -> f64 {
    1e-6
}
fn default_runs() -> usize {
    100
}
fn default_confidence() -> f64 {
    0.95
}
fn default_true() -> bool {
    true
}
fn default_strategy() -> StrategyChoice {
    StrategyChoice::Auto
}
fn default_init() -> InitChoice {
    InitChoice::PriorMean
}
fn default_output() -> String {
    "out".into()
}

/// Every key is top-level; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    // model parameters (only those belonging to `model` are accepted)
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub radar_altitude: Option<f64>,
    pub radar_distance: Option<f64>,
    pub omega: Option<f64>,
    pub damping: Option<f64>,

    pub horizon: f64,
    #[serde(default = "default_period")]
    pub measurement_period: f64,
    #[serde(default = "default_truth_step")]
    pub truth_step: f64,
    pub true_initial_state: Vec<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_covariance_diag: Vec<f64>,
    /// Spectral density used to simulate the truth.
    pub truth_spectral_density_diag: Vec<f64>,
    /// Used by the Chebyshev estimators; defaults to the truth value.
    pub estimator_spectral_density_diag: Option<Vec<f64>>,
    /// Used by the filters and smoothers; defaults to the truth value.
    pub filter_spectral_density_diag: Option<Vec<f64>>,
    pub measurement_covariance: f64,

    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_true")]
    pub crlb: bool,
    /// Lower bound on the diffusion diagonal used for the CRLB only.
    pub crlb_diffusion_floor: Option<f64>,

    pub chevopt_order: Option<usize>,
    #[serde(default)]
    pub window_sizes: Vec<f64>,
    #[serde(default)]
    pub window_orders: Vec<usize>,
    #[serde(default = "default_init")]
    pub chevopt_init: InitChoice,
    #[serde(default = "default_init")]
    pub window_init: InitChoice,
    #[serde(default)]
    pub smooth_window_covariance: bool,
    #[serde(default = "default_strategy")]
    pub noise_strategy: StrategyChoice,
    #[serde(default = "default_pseudo")]
    pub pseudo_noise_variance: f64,

    #[serde(default = "default_filter_step")]
    pub filter_step: f64,
    #[serde(default = "default_filter_step")]
    pub covariance_step: f64,
    pub fixed_lag: Option<f64>,
    #[serde(default = "default_alpha")]
    pub ukf_alpha: f64,
    #[serde(default = "default_beta")]
    pub ukf_beta: f64,
    #[serde(default)]
    pub ukf_kappa: f64,

    #[serde(default = "default_max_iter")]
    pub solver_max_iterations: usize,
    #[serde(default = "default_cost_tol")]
    pub solver_cost_tol: f64,
    #[serde(default = "default_grad_tol")]
    pub solver_grad_tol: f64,
    #[serde(default = "default_step_tol")]
    pub solver_step_tol: f64,

    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for Monte-Carlo runs; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_confidence")]
    pub nees_confidence: f64,
    #[serde(default = "default_output")]
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn estimator_q(&self) -> &[f64] {
        self.estimator_spectral_density_diag
            .as_deref()
            .unwrap_or(&self.truth_spectral_density_diag)
    }

    pub fn filter_q(&self) -> &[f64] {
        self.filter_spectral_density_diag
            .as_deref()
            .unwrap_or(&self.truth_spectral_density_diag)
    }

    /// Measurement epochs `period, 2·period, …` up to the horizon.
    pub fn measurement_times(&self) -> Vec<f64> {
        let count = (self.horizon / self.measurement_period + 1e-9).floor() as usize;
        (1..=count).map(|k| k as f64 * self.measurement_period).collect()
    }

    pub fn has(&self, kind: EstimatorKind) -> bool {
        self.estimators.contains(&kind)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let spec = crate::models::lookup(&self.model)
            .ok_or_else(|| HarnessError::Config(format!("unknown model '{}'", self.model)))?;
        let given = [
            ("lambda", self.lambda.is_some()),
            ("gamma", self.gamma.is_some()),
            ("radar_altitude", self.radar_altitude.is_some()),
            ("radar_distance", self.radar_distance.is_some()),
            ("omega", self.omega.is_some()),
            ("damping", self.damping.is_some()),
        ];
        for (key, present) in given {
            if present && !spec.parameters.iter().any(|(k, _)| *k == key) {
                return bad(format!("key '{key}' does not apply to model '{}'", self.model));
            }
        }
        let n = spec.state_dim;
        for (name, v) in [
            ("true_initial_state", &self.true_initial_state),
            ("prior_mean", &self.prior_mean),
            ("prior_covariance_diag", &self.prior_covariance_diag),
            ("truth_spectral_density_diag", &self.truth_spectral_density_diag),
        ] {
            if v.len() != n {
                return bad(format!("{name} must have {n} entries"));
            }
        }
        for (name, v) in [
            ("estimator_spectral_density_diag", &self.estimator_spectral_density_diag),
            ("filter_spectral_density_diag", &self.filter_spectral_density_diag),
        ] {
            if v.as_ref().is_some_and(|v| v.len() != n) {
                return bad(format!("{name} must have {n} entries"));
            }
        }
        if !(self.horizon > 0.0) || !(self.measurement_period > 0.0) || !(self.truth_step > 0.0) {
            return bad("horizon, measurement_period and truth_step must be positive".into());
        }
        let ratio = self.measurement_period / self.truth_step;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return bad("truth_step must divide measurement_period".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.prior_covariance_diag.iter().any(|v| !(*v > 0.0)) || !(self.measurement_covariance > 0.0) {
            return bad("prior and measurement covariances must be positive".into());
        }
        if self.has(EstimatorKind::Chevopt) && self.chevopt_order.is_none() {
            return bad("chevopt needs chevopt_order".into());
        }
        if self.has(EstimatorKind::Wchevopt)
            && (self.window_sizes.is_empty() || self.window_sizes.len() != self.window_orders.len())
        {
            return bad("wchevopt needs window_sizes and window_orders of equal length".into());
        }
        if self.has(EstimatorKind::FixedLagErts) && self.fixed_lag.is_none() {
            return bad("fixed_lag_erts needs fixed_lag".into());
        }
        if !(self.nees_confidence > 0.0 && self.nees_confidence < 1.0) {
            return bad("nees_confidence must lie in (0, 1)".into());
        }
        Ok(())
    }
}
