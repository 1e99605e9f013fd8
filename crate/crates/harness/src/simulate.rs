//! Ground-truth paths and noisy measurements.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use chebmap_core::system_models::{Measurement, SystemModel};

use crate::HarnessError;

/// Truth sampled on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub step: f64,
    pub states: Vec<DVector<f64>>,
}

impl TruthTrajectory {
    pub fn end_time(&self) -> f64 {
        self.step * (self.states.len() - 1) as f64
    }

    /// Linear interpolation between grid points (clamped at the ends).
    pub fn at(&self, t: f64) -> DVector<f64> {
        let s = (t / self.step).max(0.0);
        let i = (s.floor() as usize).min(self.states.len() - 1);
        let frac = s - i as f64;
        if i + 1 >= self.states.len() || frac <= 1e-9 {
            return self.states[i].clone();
        }
        if frac >= 1.0 - 1e-9 {
            return self.states[i + 1].clone();
        }
        &self.states[i] * (1.0 - frac) + &self.states[i + 1] * frac
    }
}

/// Square-root factor of a PSD matrix (exact zeros allowed).
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = m.clone().cholesky() {
        return c.l();
    }
    let eig = m.clone().symmetric_eigen();
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sq)
}

fn standard_normal(rng: &mut impl Rng, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.sample(StandardNormal))
}

/// Euler-Maruyama: `x ← x + f(x)Δt + √(GQGᵀΔt)·η`.
pub fn simulate_truth(
    model: &dyn SystemModel<f64>,
    x0: &DVector<f64>,
    horizon: f64,
    step: f64,
    rng: &mut impl Rng,
) -> Result<TruthTrajectory, HarnessError> {
    if !(step > 0.0) || !(horizon > 0.0) {
        return Err(HarnessError::Config("truth step and horizon must be positive".into()));
    }
    let count = (horizon / step).round() as usize;
    let n = model.state_dim();
    let mut states = Vec::with_capacity(count + 1);
    let mut x = x0.clone();
    states.push(x.clone());
    let sqrt_dt = step.sqrt();
    let mut diffusion = model.diffusion(0.0);
    let mut factor = psd_factor(&diffusion);
    for k in 0..count {
        let t = k as f64 * step;
        let current = model.diffusion(t);
        if current != diffusion {
            factor = psd_factor(&current);
            diffusion = current;
        }
        let noise = standard_normal(rng, n);
        x = &x + model.drift(&x, t) * step + &factor * noise * sqrt_dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Simulation { time: t + step });
        }
        states.push(x.clone());
    }
    Ok(TruthTrajectory { step, states })
}

/// `z_k = h(x(t_k)) + chol(R)·η` at the given times.
pub fn generate_measurements(
    truth: &TruthTrajectory,
    model: &dyn SystemModel<f64>,
    times: &[f64],
    rng: &mut impl Rng,
) -> Vec<Measurement<f64>> {
    let factor = psd_factor(&model.meas_covariance());
    times
        .iter()
        .map(|&t| {
            let noise = standard_normal(rng, model.meas_dim());
            Measurement::new(t, model.measurement(&truth.at(t)) + &factor * noise)
        })
        .collect()
}
