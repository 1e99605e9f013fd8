//! Error statistics over Monte-Carlo runs, all evaluated at the
//! measurement epochs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// One estimator's output for one run at every epoch.
#[derive(Debug, Clone)]
pub struct EstimateSeries {
    pub states: Vec<DVector<f64>>,
    pub covariances: Option<Vec<DMatrix<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    /// Per component, over all runs and epochs.
    pub armse: Vec<f64>,
    /// Per run (`None` if the run failed), per component.
    pub rmse_per_run: Vec<Option<Vec<f64>>>,
    /// Per epoch, per component: mean absolute error over successful runs.
    pub avg_abs_error: Vec<Vec<f64>>,
    /// Per epoch, per component: RMS error over successful runs.
    pub rms_error: Vec<Vec<f64>>,
    /// Per epoch mean NEES over successful runs, when covariances exist;
    /// `None` at epochs where no run had a usable covariance.
    pub nees: Option<Vec<Option<f64>>>,
    /// Fraction of epochs whose NEES lies inside the chi-square band.
    pub nees_in_band: Option<f64>,
    pub failed_runs: Vec<usize>,
    pub failure_messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbMetrics {
    /// `√(mean over epochs of the run-averaged bound)` per component.
    pub rmse: Vec<f64>,
    /// Per epoch, per component: square root of the run-averaged bound.
    pub sqrt_bound: Vec<Vec<f64>>,
    pub failed_runs: Vec<usize>,
}

/// Two-sided chi-square acceptance band for the run-averaged NEES:
/// quantiles of `χ²(L·n)` at `(1 ∓ confidence)/2`, divided by `L`.
pub fn nees_bounds(runs: usize, dim: usize, confidence: f64) -> (f64, f64) {
    let dof = (runs * dim) as f64;
    let chi = ChiSquared::new(dof).expect("positive degrees of freedom");
    let lo = chi.inverse_cdf((1.0 - confidence) / 2.0);
    let hi = chi.inverse_cdf((1.0 + confidence) / 2.0);
    (lo / runs as f64, hi / runs as f64)
}

/// `eᵀ P⁻¹ e`, or `None` if `P` is not positive definite.
pub fn nees(error: &DVector<f64>, covariance: &DMatrix<f64>) -> Option<f64> {
    let chol = covariance.clone().cholesky()?;
    Some(error.dot(&chol.solve(error)))
}

pub fn estimator_metrics(
    truths: &[Vec<DVector<f64>>],
    estimates: &[Result<EstimateSeries, String>],
    bounds: (f64, f64),
) -> EstimatorMetrics {
    let k_count = truths.first().map_or(0, |t| t.len());
    let n = truths.first().and_then(|t| t.first()).map_or(0, |x| x.len());
    let mut sq_total = vec![0.0; n];
    let mut abs_sum = vec![vec![0.0; n]; k_count];
    let mut sq_sum = vec![vec![0.0; n]; k_count];
    let mut nees_sum = vec![0.0; k_count];
    let mut nees_count = vec![0usize; k_count];
    let mut has_cov = true;
    let mut ok_runs = 0usize;
    let mut rmse_per_run = Vec::with_capacity(estimates.len());
    let mut failed_runs = Vec::new();
    let mut failure_messages = Vec::new();

    for (run, (truth, est)) in truths.iter().zip(estimates).enumerate() {
        let est = match est {
            Ok(e) => e,
            Err(msg) => {
                failed_runs.push(run);
                failure_messages.push(msg.clone());
                rmse_per_run.push(None);
                continue;
            }
        };
        ok_runs += 1;
        let mut run_sq = vec![0.0; n];
        for k in 0..k_count {
            let e = &est.states[k] - &truth[k];
            for i in 0..n {
                abs_sum[k][i] += e[i].abs();
                sq_sum[k][i] += e[i] * e[i];
                run_sq[i] += e[i] * e[i];
            }
            match &est.covariances {
                Some(covs) => {
                    if let Some(v) = nees(&e, &covs[k]) {
                        nees_sum[k] += v;
                        nees_count[k] += 1;
                    }
                }
                None => has_cov = false,
            }
        }
        for i in 0..n {
            sq_total[i] += run_sq[i];
        }
        rmse_per_run.push(Some(run_sq.iter().map(|s| (s / k_count as f64).sqrt()).collect()));
    }

    let denom = ok_runs.max(1) as f64;
    let armse = sq_total
        .iter()
        .map(|s| (s / (denom * k_count as f64)).sqrt())
        .collect();
    let avg_abs_error = abs_sum
        .iter()
        .map(|row| row.iter().map(|v| v / denom).collect())
        .collect();
    let rms_error = sq_sum
        .iter()
        .map(|row| row.iter().map(|v| (v / denom).sqrt()).collect())
        .collect();
    let nees: Option<Vec<Option<f64>>> = (has_cov && ok_runs > 0).then(|| {
        nees_sum
            .iter()
            .zip(&nees_count)
            .map(|(s, c)| (*c > 0).then(|| s / *c as f64))
            .collect()
    });
    let nees_in_band = nees.as_ref().map(|v| {
        let inside = v
            .iter()
            .filter(|z| z.is_some_and(|z| z >= bounds.0 && z <= bounds.1))
            .count();
        inside as f64 / v.len().max(1) as f64
    });
    EstimatorMetrics {
        armse,
        rmse_per_run,
        avg_abs_error,
        rms_error,
        nees,
        nees_in_band,
        failed_runs,
        failure_messages,
    }
}

pub fn crlb_metrics(bounds: &[Result<Vec<DMatrix<f64>>, String>]) -> CrlbMetrics {
    let ok: Vec<&Vec<DMatrix<f64>>> = bounds.iter().filter_map(|b| b.as_ref().ok()).collect();
    let failed_runs = bounds
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.is_err().then_some(i))
        .collect();
    let k_count = ok.first().map_or(0, |b| b.len());
    let n = ok.first().and_then(|b| b.first()).map_or(0, |p| p.nrows());
    let mut mean = vec![vec![0.0; n]; k_count];
    for run in &ok {
        for (k, p) in run.iter().enumerate() {
            for i in 0..n {
                mean[k][i] += p[(i, i)] / ok.len() as f64;
            }
        }
    }
    let rmse = (0..n)
        .map(|i| (mean.iter().map(|row| row[i]).sum::<f64>() / k_count.max(1) as f64).sqrt())
        .collect();
    let sqrt_bound = mean
        .iter()
        .map(|row| row.iter().map(|v| v.sqrt()).collect())
        .collect();
    CrlbMetrics {
        rmse,
        sqrt_bound,
        failed_runs,
    }
}
