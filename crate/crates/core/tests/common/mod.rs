//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use chebmap_core::system_models::{Measurement, SystemModel};

/// Exact discretisation of `ẋ = Ax + w`, `E[wwᵀ] = S δ`, over `dt`:
/// returns `(Φ, Q_d)` from the block matrix exponential.
pub fn van_loan(a: &DMatrix<f64>, s: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-a * dt));
    m.view_mut((0, n), (n, n)).copy_from(&(s * dt));
    m.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * dt));
    let e = m.exp();
    let phi = e.view((n, n), (n, n)).transpose();
    let qd = &phi * e.view((0, n), (n, n));
    let qd = (&qd + qd.transpose()) * 0.5;
    (phi, qd)
}

pub struct LinearReference {
    /// Filtered moments at each measurement time.
    pub filtered: Vec<(DVector<f64>, DMatrix<f64>)>,
    /// Smoothed moments at the start time followed by each measurement time.
    pub smoothed: Vec<(DVector<f64>, DMatrix<f64>)>,
}

/// Closed-form Kalman filter and RTS smoother for a linear model whose
/// measurements all lie strictly after `t0`.
pub fn linear_reference(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
    t0: f64,
    meas: &[Measurement<f64>],
) -> LinearReference {
    let mut x = x0.clone();
    let mut p = p0.clone();
    let mut t = t0;
    let mut filt = vec![(x.clone(), p.clone())];
    let mut pred = Vec::new();
    let mut trans = Vec::new();
    for z in meas {
        let (phi, qd) = van_loan(a, s, z.time - t);
        let xp = &phi * &x;
        let pp = &phi * &p * phi.transpose() + qd;
        let sm = c * &pp * c.transpose() + r;
        let k = &pp * c.transpose() * sm.try_inverse().unwrap();
        x = &xp + &k * (&z.value - c * &xp);
        p = &pp - &k * c * &pp;
        p = (&p + p.transpose()) * 0.5;
        pred.push((xp, pp));
        trans.push(phi);
        filt.push((x.clone(), p.clone()));
        t = z.time;
    }
    let mut smoothed = vec![filt.last().unwrap().clone()];
    for k in (0..meas.len()).rev() {
        let (xf, pf) = &filt[k];
        let (xp, pp) = &pred[k];
        let gain = pf * trans[k].transpose() * pp.clone().try_inverse().unwrap();
        let (xs_next, ps_next) = smoothed.last().unwrap();
        let xs = xf + &gain * (xs_next - xp);
        let ps = pf + &gain * (ps_next - pp) * gain.transpose();
        smoothed.push((xs, (&ps + ps.transpose()) * 0.5));
    }
    smoothed.reverse();
    LinearReference {
        filtered: filt[1..].to_vec(),
        smoothed,
    }
}

/// Classical RK4 on `ẋ = f(x, t)` with a fixed step, returning `x(t1)`.
pub fn rk4_flow(
    f: impl Fn(&DVector<f64>, f64) -> DVector<f64>,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    h: f64,
) -> DVector<f64> {
    let steps = ((t1 - t0) / h).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut x = x0.clone();
    let mut t = t0;
    for _ in 0..steps {
        let k1 = f(&x, t);
        let k2 = f(&(&x + &k1 * (h / 2.0)), t + h / 2.0);
        let k3 = f(&(&x + &k2 * (h / 2.0)), t + h / 2.0);
        let k4 = f(&(&x + &k3 * h), t + h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
    }
    x
}

/// Euler-Maruyama path of `model` plus noisy measurements at `times`.
pub fn simulate(
    model: &dyn SystemModel<f64>,
    x0: &DVector<f64>,
    times: &[f64],
    dt: f64,
    seed: u64,
) -> (Vec<DVector<f64>>, Vec<Measurement<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |k: usize| DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
    let n = model.state_dim();
    let noise_factor = model
        .diffusion(0.0)
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| {
            let eig = model.diffusion(0.0).symmetric_eigen();
            let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sq)
        });
    let r_factor = model.meas_covariance().cholesky().unwrap().l();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut truth = Vec::new();
    let mut meas = Vec::new();
    for &tk in times {
        while t < tk - 1e-12 {
            let h = dt.min(tk - t);
            let w = normal(n);
            x = &x + model.drift(&x, t) * h + &noise_factor * w * h.sqrt();
            t += h;
        }
        let v = normal(model.meas_dim());
        meas.push(Measurement::new(tk, model.measurement(&x) + &r_factor * v));
        truth.push(x.clone());
    }
    (truth, meas)
}

/// Clenshaw-Curtis weights by the cosine-sum formula.
pub fn cc_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..=n)
        .map(|k| {
            let theta = k as f64 * std::f64::consts::PI / nf;
            let mut sum = 0.0;
            for j in 0..=n / 2 {
                let b = if j == 0 || (n % 2 == 0 && 2 * j == n) { 1.0 } else { 2.0 };
                sum += b / (1.0 - 4.0 * (j * j) as f64) * (2.0 * j as f64 * theta).cos();
            }
            let c = if k == 0 || k == n { 1.0 } else { 2.0 };
            c / nf * sum
        })
        .collect()
}

/// Chebyshev series value and `d/dτ` via the trigonometric definition.
pub fn cheb_series(coeffs: &[f64], tau: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    let theta = tau.clamp(-1.0, 1.0).acos();
    for (k, c) in coeffs.iter().enumerate() {
        let kf = k as f64;
        v += c * (kf * theta).cos();
        let dk = if (1.0 - tau.abs()) < 1e-14 {
            tau.signum().powi(k as i32 + 1) * kf * kf
        } else {
            kf * (kf * theta).sin() / theta.sin()
        };
        d += c * dk;
    }
    (v, d)
}
