use nalgebra::{DMatrix, DVector};

use super::layout::{ParamKind, Parameterization};
use crate::cheb_basis::{eval_basis, AffineTimeMap, BasisEval, CollocationGrid};
use crate::error::{EstimationError, Result};
use crate::linalg::{information_factor, is_finite_mat, is_finite_vec, symmetrize};
use crate::scalar::{lit, to_f64, Real};
use crate::system_models::{GaussianBelief, Measurement, NoisePartition, NoiseStrategy, SystemModel};

/// Slack on the window edges when placing measurements, relative to length.
const WINDOW_SLACK: f64 = 1e-9;

/// Weighted MAP least-squares problem over one time window.
///
/// Residual blocks, in order: prior at the window start, one block per
/// measurement, one block per collocation node for the noisy dynamics, and
/// (constraint strategy only) one penalty block per node for the noise-free
/// dynamics.
#[derive(Clone)]
pub struct MapProblem<'a, T: Real> {
    model: &'a dyn SystemModel<T>,
    partition: NoisePartition<T>,
    prior: GaussianBelief<T>,
    measurements: Vec<Measurement<T>>,
    time_map: AffineTimeMap<T>,
    grid: CollocationGrid<T>,
    layout: Parameterization<T>,
    prior_weight: DMatrix<T>,
    meas_weight: DMatrix<T>,
    dyn_rows: Vec<usize>,
    dyn_weight: DMatrix<T>,
    penalty_map: Option<DMatrix<T>>,
    penalty_weight: T,
    node_basis: Vec<BasisEval<T>>,
    meas_basis: Vec<BasisEval<T>>,
    start_basis: BasisEval<T>,
}

impl<'a, T: Real> MapProblem<'a, T> {
    /// The prior applies at `time_map.t_start()`; its own `time` field is
    /// not consulted.
    pub fn new(
        model: &'a dyn SystemModel<T>,
        partition: NoisePartition<T>,
        prior: GaussianBelief<T>,
        measurements: Vec<Measurement<T>>,
        time_map: AffineTimeMap<T>,
        order: usize,
    ) -> Result<Self> {
        let n = model.state_dim();
        let m = model.meas_dim();
        if prior.dim() != n || partition.state_dim != n {
            return Err(EstimationError::Dimension(format!(
                "prior/partition dimension does not match state dimension {n}"
            )));
        }
        let slack = time_map.length() * lit(WINDOW_SLACK);
        let mut meas_basis = Vec::with_capacity(measurements.len());
        for z in &measurements {
            if z.value.len() != m {
                return Err(EstimationError::Dimension(format!(
                    "measurement has {} entries, model expects {m}",
                    z.value.len()
                )));
            }
            if z.time < time_map.t_start() - slack || z.time > time_map.t_end() + slack {
                return Err(EstimationError::Argument(format!(
                    "measurement at t = {} outside window [{}, {}]",
                    to_f64(z.time),
                    to_f64(time_map.t_start()),
                    to_f64(time_map.t_end())
                )));
            }
            meas_basis.push(eval_basis(order, time_map.forward(z.time))?);
        }

        let layout = match partition.strategy {
            NoiseStrategy::IntegrateOut => Parameterization::integrated(model, &partition, order)?,
            _ => Parameterization::full_state(n, order),
        };

        let diffusion = model.diffusion(time_map.t_start());
        let (dyn_rows, dyn_cov, penalty_map) = match partition.strategy {
            _ if partition.is_trivial() => ((0..n).collect(), diffusion, None),
            NoiseStrategy::IntegrateOut => {
                (partition.noisy.clone(), partition.noisy_covariance(), None)
            }
            NoiseStrategy::Constraint { .. } => {
                let mut map = DMatrix::zeros(partition.noise_free.len(), n);
                for (a, &j) in partition.noise_free.iter().enumerate() {
                    map[(a, j)] = T::one();
                    for (b, &i) in partition.noisy.iter().enumerate() {
                        map[(a, i)] = -partition.coupling[(a, b)];
                    }
                }
                (partition.noisy.clone(), partition.noisy_covariance(), Some(map))
            }
            NoiseStrategy::PseudoNoise { variance } => {
                let mut cov = diffusion;
                for &j in &partition.noise_free {
                    cov[(j, j)] += variance;
                }
                ((0..n).collect(), cov, None)
            }
        };
        let penalty_weight = match partition.strategy {
            NoiseStrategy::Constraint { initial_penalty, .. } => initial_penalty,
            _ => T::zero(),
        };

        let grid = CollocationGrid::new(order)?;
        let node_basis = grid
            .nodes
            .iter()
            .map(|&tau| eval_basis(order, tau))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            prior_weight: information_factor(&prior.covariance, "prior covariance")?,
            meas_weight: information_factor(&model.meas_covariance(), "measurement covariance")?,
            dyn_weight: information_factor(&dyn_cov, "dynamics noise covariance")?,
            partition,
            prior,
            measurements,
            time_map,
            grid,
            layout,
            dyn_rows,
            penalty_map,
            penalty_weight,
            node_basis,
            meas_basis,
            start_basis: eval_basis(order, -T::one())?,
        })
    }

    /// Copy with a different penalty weight on the noise-free dynamics.
    pub fn with_penalty(&self, weight: T) -> Self {
        let mut p = self.clone();
        p.penalty_weight = weight;
        p
    }

    pub fn model(&self) -> &'a dyn SystemModel<T> {
        self.model
    }

    pub fn partition(&self) -> &NoisePartition<T> {
        &self.partition
    }

    pub fn prior(&self) -> &GaussianBelief<T> {
        &self.prior
    }

    pub fn measurements(&self) -> &[Measurement<T>] {
        &self.measurements
    }

    pub fn time_map(&self) -> &AffineTimeMap<T> {
        &self.time_map
    }

    pub fn grid(&self) -> &CollocationGrid<T> {
        &self.grid
    }

    pub fn layout(&self) -> &Parameterization<T> {
        &self.layout
    }

    pub fn order(&self) -> usize {
        self.layout.order()
    }

    pub fn n_params(&self) -> usize {
        self.layout.n_params()
    }

    pub fn penalty_weight(&self) -> T {
        self.penalty_weight
    }

    /// Components whose dynamics enter the weighted dynamics residual.
    pub fn dynamics_rows(&self) -> &[usize] {
        &self.dyn_rows
    }

    /// `W_x0` with `W Wᵀ = P₀⁻¹`.
    pub fn prior_weight(&self) -> &DMatrix<T> {
        &self.prior_weight
    }

    /// `W_z` with `W Wᵀ = R⁻¹`.
    pub fn measurement_weight(&self) -> &DMatrix<T> {
        &self.meas_weight
    }

    /// `W_v` with `W Wᵀ` the inverse of the dynamics noise on `dynamics_rows`.
    pub fn dynamics_weight(&self) -> &DMatrix<T> {
        &self.dyn_weight
    }

    pub fn residual_len(&self) -> usize {
        let n = self.model.state_dim();
        let nodes = self.grid.len();
        let penalty = self.penalty_map.as_ref().map_or(0, |m| m.nrows());
        n + self.measurements.len() * self.model.meas_dim() + nodes * (self.dyn_rows.len() + penalty)
    }

    fn half_len(&self) -> T {
        self.time_map.length() * lit(0.5)
    }

    fn node_time(&self, i: usize) -> T {
        self.time_map.inverse(self.grid.nodes[i])
    }

    /// `√((t_end − t_start)/2 · ω_i)`.
    fn node_scale(&self, i: usize) -> T {
        (self.half_len() * self.grid.weights[i]).max(T::zero()).sqrt()
    }

    /// Constant trajectory at the prior mean.
    pub fn default_init(&self) -> DVector<T> {
        self.layout.constant_params(&self.prior.mean)
    }

    /// Initial parameters interpolating `reference` on the collocation grid.
    pub fn init_from(&self, reference: impl Fn(T) -> DVector<T>) -> Result<DVector<T>> {
        let n = self.model.state_dim();
        let len = self.grid.len();
        let mut nodal = DMatrix::zeros(len, n);
        for i in 0..len {
            let x = reference(self.node_time(i));
            if x.len() != n {
                return Err(EstimationError::Dimension("reference state has wrong length".into()));
            }
            nodal.set_row(i, &x.transpose());
        }
        let transform = crate::cheb_basis::ChebyshevTransform::new(self.order())?;
        self.layout.params_from_nodal(&transform, &nodal)
    }

    pub fn build_residual(&self, params: &DVector<T>) -> Result<DVector<T>> {
        self.layout.check_len(params)?;
        let n = self.model.state_dim();
        let m = self.model.meas_dim();
        let half = self.half_len();
        let rate = self.time_map.rate_scale();
        let mut r = DVector::zeros(self.residual_len());
        let mut row = 0;

        let (x0, _) = self.layout.state_and_rate(&self.start_basis, half, params);
        r.rows_mut(row, n)
            .copy_from(&(self.prior_weight.transpose() * (x0 - &self.prior.mean)));
        row += n;

        for (z, basis) in self.measurements.iter().zip(&self.meas_basis) {
            let (x, _) = self.layout.state_and_rate(basis, half, params);
            let innov = &z.value - self.model.measurement(&x);
            r.rows_mut(row, m)
                .copy_from(&(self.meas_weight.transpose() * innov));
            row += m;
        }

        let d = self.dyn_rows.len();
        let penalty_rows = self.penalty_map.as_ref().map_or(0, |p| p.nrows());
        let penalty_scale = self.penalty_weight.sqrt();
        for (i, basis) in self.node_basis.iter().enumerate() {
            let (x, dx) = self.layout.state_and_rate(basis, half, params);
            let defect = dx * rate - self.model.drift(&x, self.node_time(i));
            let scale = self.node_scale(i);
            let sel = DVector::from_fn(d, |k, _| defect[self.dyn_rows[k]]);
            r.rows_mut(row, d)
                .copy_from(&(self.dyn_weight.transpose() * sel * scale));
            row += d;
            if let Some(map) = &self.penalty_map {
                r.rows_mut(row, penalty_rows)
                    .copy_from(&(map * &defect * (scale * penalty_scale)));
                row += penalty_rows;
            }
        }
        if !is_finite_vec(&r) {
            return Err(EstimationError::NonFinite("dynamics or measurement residual".into()));
        }
        Ok(r)
    }

    pub fn build_jacobian(&self, params: &DVector<T>) -> Result<DMatrix<T>> {
        self.layout.check_len(params)?;
        let n = self.model.state_dim();
        let m = self.model.meas_dim();
        let p = self.n_params();
        let half = self.half_len();
        let rate = self.time_map.rate_scale();
        let mut jac = DMatrix::zeros(self.residual_len(), p);
        let mut row = 0;

        let (b0, _) = self.layout.sensitivity(&self.start_basis, half);
        jac.rows_mut(row, n)
            .copy_from(&(self.prior_weight.transpose() * b0));
        row += n;

        let wz = -self.meas_weight.transpose();
        for basis in &self.meas_basis {
            let (x, _) = self.layout.state_and_rate(basis, half, params);
            let (b, _) = self.layout.sensitivity(basis, half);
            let h = self.model.measurement_jacobian(&x);
            jac.rows_mut(row, m).copy_from(&(&wz * h * b));
            row += m;
        }

        let d = self.dyn_rows.len();
        let penalty_rows = self.penalty_map.as_ref().map_or(0, |p| p.nrows());
        let penalty_scale = self.penalty_weight.sqrt();
        let wv = self.dyn_weight.transpose();
        for (i, basis) in self.node_basis.iter().enumerate() {
            let (x, _) = self.layout.state_and_rate(basis, half, params);
            let (b, db) = self.layout.sensitivity(basis, half);
            let f = self.model.drift_jacobian(&x, self.node_time(i));
            let defect = db * rate - f * b;
            let scale = self.node_scale(i);
            let sel = DMatrix::from_fn(d, p, |k, j| defect[(self.dyn_rows[k], j)]);
            jac.rows_mut(row, d).copy_from(&(&wv * sel * scale));
            row += d;
            if let Some(map) = &self.penalty_map {
                jac.rows_mut(row, penalty_rows)
                    .copy_from(&(map * &defect * (scale * penalty_scale)));
                row += penalty_rows;
            }
        }
        if !is_finite_mat(&jac) {
            return Err(EstimationError::NonFinite("residual Jacobian".into()));
        }
        Ok(jac)
    }

    /// `(prior, measurement, dynamics, penalty)` parts of the squared residual.
    pub fn objective_terms(&self, params: &DVector<T>) -> Result<[T; 4]> {
        let r = self.build_residual(params)?;
        let n = self.model.state_dim();
        let nz = self.measurements.len() * self.model.meas_dim();
        let d = self.dyn_rows.len();
        let penalty_rows = self.penalty_map.as_ref().map_or(0, |p| p.nrows());
        let mut terms = [T::zero(); 4];
        terms[0] = r.rows(0, n).norm_squared();
        terms[1] = r.rows(n, nz).norm_squared();
        let mut row = n + nz;
        for _ in 0..self.grid.len() {
            terms[2] += r.rows(row, d).norm_squared();
            row += d;
            terms[3] += r.rows(row, penalty_rows).norm_squared();
            row += penalty_rows;
        }
        Ok(terms)
    }

    /// Gauss-Newton (Laplace) covariance of the parameters, `(JᵀJ)⁻¹`.
    pub fn parameter_covariance(&self, params: &DVector<T>) -> Result<DMatrix<T>> {
        let j = self.build_jacobian(params)?;
        let mut info = j.transpose() * &j;
        symmetrize(&mut info);
        let mut cov = match info.clone().cholesky() {
            Some(c) => c.inverse(),
            None => info
                .pseudo_inverse(lit(1e-14))
                .map_err(|e| EstimationError::NotPositiveDefinite(e.to_string()))?,
        };
        symmetrize(&mut cov);
        Ok(cov)
    }

    pub fn is_integrated(&self) -> bool {
        self.layout.kind() == ParamKind::Integrated
    }
}
