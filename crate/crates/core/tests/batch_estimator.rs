mod common;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chebmap_core::batch_estimator::{solve_batch, ComponentRep, ChebyshevTrajectory, MapProblem, Parameterization};
use chebmap_core::cheb_basis::{clenshaw_curtis_weights, AffineTimeMap, CollocationGrid};
use chebmap_core::error::EstimationError;
use chebmap_core::nlsq_solver::SolverConfig;
use chebmap_core::system_models::{
    partition_noise, BallisticReentry, GaussianBelief, LinearGaussian, Measurement,
    NoiseStrategy, RateStructure, SystemModel, VanDerPol,
};
use common::{cc_weights, cheb_series, linear_reference, rk4_flow, simulate};

fn tight() -> SolverConfig<f64> {
    SolverConfig {
        max_iterations: 500,
        cost_tol: 1e-15,
        grad_tol: 1e-13,
        step_tol: 1e-15,
        ..SolverConfig::default()
    }
}

fn vdp_prior() -> GaussianBelief<f64> {
    GaussianBelief::new(dvector![1.0, 1.0], DMatrix::identity(2, 2) * 0.25, 0.0).unwrap()
}

fn vdp_measurements(seed: u64) -> Vec<Measurement<f64>> {
    let model = VanDerPol::new(3.0);
    let times: Vec<f64> = (1..=10).map(f64::from).collect();
    simulate(&model, &dvector![0.5, 0.5], &times, 5e-4, seed).1
}

fn problem_with<'a>(
    model: &'a dyn SystemModel<f64>,
    strategy: Option<NoiseStrategy<f64>>,
    prior: GaussianBelief<f64>,
    meas: Vec<Measurement<f64>>,
    t_end: f64,
    order: usize,
) -> MapProblem<'a, f64> {
    let mut partition = partition_noise(model).unwrap();
    if let Some(s) = strategy {
        partition = partition.with_strategy(s, model).unwrap();
    }
    MapProblem::new(model, partition, prior, meas, AffineTimeMap::new(0.0, t_end).unwrap(), order).unwrap()
}

fn random_params(problem: &MapProblem<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    problem
        .default_init()
        .map(|p| p * (1.0 + 0.2 * rng.random_range(-1.0..1.0)) + 0.05 * rng.random_range(-1.0..1.0))
}

fn component_scales(problem: &MapProblem<f64>) -> Vec<f64> {
    let layout = problem.layout();
    let mut scale = vec![1.0; layout.n_params()];
    for (i, rep) in layout.reps().iter().enumerate() {
        let s = problem.prior().mean[i].abs().max(1.0);
        match *rep {
            ComponentRep::Series { offset } => scale[offset..=offset + layout.order()].fill(s),
            ComponentRep::Integrated { anchor, .. } => scale[anchor] = s,
            ComponentRep::Constant { index } => scale[index] = s,
        }
    }
    scale
}

fn assert_jacobian_matches_fd(problem: &MapProblem<f64>, params: &DVector<f64>) {
    let jac = problem.build_jacobian(params).unwrap();
    let floor = jac.amax() * 1e-9;
    let scale = component_scales(problem);
    for j in 0..params.len() {
        // relative to the magnitude of the state component the parameter drives
        let h = 1e-7 * params[j].abs().max(scale[j]);
        let mut up = params.clone();
        up[j] += h;
        let mut down = params.clone();
        down[j] -= h;
        let fd = (problem.build_residual(&up).unwrap() - problem.build_residual(&down).unwrap()) / (2.0 * h);
        let col = jac.column(j);
        let err = (&fd - col).amax();
        let scale = col.amax().max(floor);
        assert!(err <= 1e-5 * scale, "column {j}: error {err:e} vs scale {scale:e}");
    }
}

#[test]
fn jacobian_matches_finite_differences_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vdp = VanDerPol::new(3.0);
    let ballistic = BallisticReentry::standard().with_spectral_density(DMatrix::from_diagonal(&dvector![0.0, 1e-6, 0.0])).unwrap();
    let b_prior = GaussianBelief::new(
        dvector![3e5, 2e4, 3e-5],
        DMatrix::from_diagonal(&dvector![1e6, 4e6, 1e-4]),
        0.0,
    )
    .unwrap();
    let b_meas: Vec<_> = (1..=5)
        .map(|k| Measurement::new(k as f64, dvector![1.2e5 - 1e3 * k as f64]))
        .collect();
    let problems = vec![
        problem_with(&vdp, None, vdp_prior(), vdp_measurements(1), 10.0, 20),
        problem_with(&vdp, Some(NoiseStrategy::pseudo_noise()), vdp_prior(), vdp_measurements(1), 10.0, 20),
        problem_with(&vdp, Some(NoiseStrategy::constraint()), vdp_prior(), vdp_measurements(1), 10.0, 20),
        problem_with(&ballistic, None, b_prior.clone(), b_meas.clone(), 5.0, 12),
        problem_with(&ballistic, Some(NoiseStrategy::pseudo_noise()), b_prior, b_meas, 5.0, 12),
    ];
    for problem in &problems {
        for _ in 0..20 {
            let p = random_params(problem, &mut rng);
            assert_jacobian_matches_fd(problem, &p);
        }
    }
}

struct Still;

impl SystemModel<f64> for Still {
    fn name(&self) -> &str {
        "still"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn meas_dim(&self) -> usize {
        1
    }
    fn dynamics(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn dynamics_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn measurement(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn measurement_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 2)
    }
    fn noise_matrix(&self, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn spectral_density(&self) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn meas_covariance(&self) -> DMatrix<f64> {
        dmatrix![1.0]
    }
}

/// Blows up once the first component leaves `[-5, 5]`.
struct Fragile;

impl SystemModel<f64> for Fragile {
    fn name(&self) -> &str {
        "fragile"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn meas_dim(&self) -> usize {
        1
    }
    fn dynamics(&self, x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        dvector![if x[0].abs() > 5.0 { f64::NAN } else { -x[0] }]
    }
    fn dynamics_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        dmatrix![-1.0]
    }
    fn measurement(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn measurement_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        dmatrix![1.0]
    }
    fn noise_matrix(&self, _t: f64) -> DMatrix<f64> {
        dmatrix![1.0]
    }
    fn spectral_density(&self) -> DMatrix<f64> {
        dmatrix![1.0]
    }
    fn meas_covariance(&self) -> DMatrix<f64> {
        dmatrix![1.0]
    }
}

#[test]
fn still_model_constant_at_prior_has_zero_residual_and_constant_dynamics_jacobian() {
    let prior = GaussianBelief::new(dvector![0.3, -2.0], DMatrix::identity(2, 2) * 2.0, 0.0).unwrap();
    let problem = problem_with(&Still, None, prior, vec![], 4.0, 8);
    let p0 = problem.default_init();
    assert_eq!(problem.build_residual(&p0).unwrap().amax(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let j0 = problem.build_jacobian(&p0).unwrap();
    let j1 = problem.build_jacobian(&random_params(&problem, &mut rng)).unwrap();
    assert_eq!(j0, j1);
}

#[test]
fn prior_rows_are_weighted_endpoint_values() {
    let problem = problem_with(&Still, None, vdp_prior(), vec![], 4.0, 6);
    let jac = problem.build_jacobian(&problem.default_init()).unwrap();
    let w = problem.prior_weight().transpose();
    let mut endpoint = DMatrix::zeros(2, 14);
    for comp in 0..2 {
        for i in 0..7 {
            endpoint[(comp, comp * 7 + i)] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    assert!((jac.rows(0, 2) - w * endpoint).amax() < 1e-15);
}

#[test]
fn weight_factors_invert_their_covariances() {
    let model = BallisticReentry::standard().with_spectral_density(DMatrix::from_diagonal(&dvector![0.0, 1e-6, 0.0])).unwrap();
    let p0 = DMatrix::from_diagonal(&dvector![1e6, 4e6, 1e-4]);
    let prior = GaussianBelief::new(dvector![3e5, 2e4, 3e-5], p0.clone(), 0.0).unwrap();
    let problem = problem_with(&model, None, prior, vec![], 10.0, 6);
    let rel = |w: &DMatrix<f64>, cov: DMatrix<f64>| {
        let target = cov.try_inverse().unwrap();
        (w * w.transpose() - &target).amax() / target.amax()
    };
    assert!(rel(problem.prior_weight(), p0) < 1e-10);
    assert!(rel(problem.measurement_weight(), model.meas_covariance()) < 1e-10);
    assert!(rel(problem.dynamics_weight(), problem.partition().noisy_covariance()) < 1e-10);
}

#[test]
fn measurement_outside_window_is_an_argument_error() {
    let model = VanDerPol::new(3.0);
    let partition = partition_noise(&model).unwrap();
    let err = MapProblem::new(
        &model,
        partition,
        vdp_prior(),
        vec![Measurement::new(10.5, dvector![0.0])],
        AffineTimeMap::new(0.0, 10.0).unwrap(),
        10,
    )
    .err()
    .unwrap();
    assert!(matches!(err, EstimationError::Argument(_)));
}

#[test]
fn blow_up_is_an_evaluation_failure_not_a_crash() {
    let prior = GaussianBelief::new(dvector![0.0], dmatrix![1.0], 0.0).unwrap();
    let meas = vec![Measurement::new(1.0, dvector![20.0])];
    let problem = problem_with(&Fragile, None, prior, meas, 1.0, 6);
    let bad = DVector::from_element(7, 10.0);
    assert!(matches!(problem.build_residual(&bad), Err(EstimationError::NonFinite(_))));
    // the solver must route around the failure or report it, never panic
    let _ = solve_batch(&problem, problem.default_init(), &tight());
}

#[test]
fn objective_equals_independently_assembled_terms() {
    let model = VanDerPol::new(3.0);
    let meas = vdp_measurements(7);
    let prior = vdp_prior();
    let t_len = 10.0;
    let order = 300;
    let problem = problem_with(&model, None, prior.clone(), meas.clone(), t_len, order);
    let (traj, stats) = solve_batch(&problem, problem.default_init(), &SolverConfig::default()).unwrap();
    assert!(stats.termination.converged());

    let coeffs = traj.coefficients();
    let eval = |tau: f64| {
        let mut x = DVector::zeros(2);
        let mut dx = DVector::zeros(2);
        for c in 0..2 {
            let col: Vec<f64> = coeffs.column(c).iter().copied().collect();
            let (v, d) = cheb_series(&col, tau);
            x[c] = v;
            dx[c] = d;
        }
        (x, dx)
    };
    let p0_inv = prior.covariance.clone().try_inverse().unwrap();
    let d0 = eval(-1.0).0 - &prior.mean;
    let j_prior = (d0.transpose() * p0_inv * &d0)[0];
    let j_meas: f64 = meas
        .iter()
        .map(|z| {
            let x = eval(2.0 * z.time / t_len - 1.0).0;
            (z.value[0] - x[0]).powi(2) / 0.04
        })
        .sum();
    let w = cc_weights(order);
    let mut j_dyn = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let tau = -(i as f64 * std::f64::consts::PI / order as f64).cos();
        let (x, dx) = eval(tau);
        let defect = dx * (2.0 / t_len) - model.drift(&x, 0.0);
        j_dyn += t_len / 2.0 * wi * defect[1] * defect[1];
    }
    let oracle = j_prior + j_meas + j_dyn;
    let cost = problem.build_residual(&traj.params).unwrap().norm_squared();
    assert!(((cost - oracle) / oracle).abs() < 1e-10, "{cost} vs {oracle}");
}

#[test]
fn trajectory_evaluation_cases() {
    let map = AffineTimeMap::new(0.0, 2.0).unwrap();
    let full = Parameterization::full_state(2, 5);
    let mut p = DVector::zeros(12);
    p[0] = 1.5;
    p[6] = -0.25;
    let traj = ChebyshevTrajectory::new(map, full, p).unwrap();
    for t in [0.0, 0.3, 1.7, 2.0] {
        let (x, dx) = traj.eval(t).unwrap();
        assert_eq!(x, dvector![1.5, -0.25]);
        assert_eq!(dx, dvector![0.0, 0.0]);
    }
    assert!(matches!(traj.eval(2.5), Err(EstimationError::Domain(_))));

    // x₁ integrates x₂ ≡ 1 from p₀ = 0
    let model = VanDerPol::new(1.0);
    let partition = partition_noise(&model).unwrap();
    let integrated = Parameterization::integrated(&model, &partition, 5).unwrap();
    let mut p = DVector::zeros(integrated.n_params());
    p[1] = 1.0;
    let traj = ChebyshevTrajectory::new(map, integrated, p).unwrap();
    for t in [0.0f64, 0.5, 1.25, 2.0] {
        assert!((traj.state(t).unwrap()[0] - t).abs() < 1e-14);
    }
    assert_eq!(traj.state(0.0).unwrap()[0], 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layout = Parameterization::integrated(&model, &partition, 12).unwrap();
    let p = DVector::from_fn(layout.n_params(), |_, _| rng.random_range(-1.0..1.0));
    let traj = ChebyshevTrajectory::new(AffineTimeMap::new(1.0, 4.0).unwrap(), layout, p).unwrap();
    for t in [1.1, 2.0, 3.3, 3.9] {
        let h = 1e-6;
        let fd = (traj.state(t + h).unwrap() - traj.state(t - h).unwrap()) / (2.0 * h);
        assert!((fd - traj.eval(t).unwrap().1).amax() < 1e-6);
    }
    // the plain-coefficient view reproduces the integrated evaluation
    let coeffs = traj.coefficients();
    for tau in [-1.0, -0.4, 0.2, 1.0] {
        let col: Vec<f64> = coeffs.column(0).iter().copied().collect();
        assert!((cheb_series(&col, tau).0 - traj.eval_tau(tau).unwrap().0[0]).abs() < 1e-12);
    }
}

#[test]
fn matches_linear_rts_smoother_mean() {
    let a = dmatrix![0.0, 1.0; -1.0, -0.3];
    let q = DMatrix::identity(2, 2) * 1e-3;
    let c = dmatrix![1.0, 0.0];
    let r = dmatrix![0.05];
    let model = LinearGaussian::new(a.clone(), DMatrix::identity(2, 2), q.clone(), c.clone(), r.clone()).unwrap();
    let times: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
    let (_, meas) = simulate(&model, &dvector![1.0, 0.0], &times, 1e-3, 21);
    let prior = GaussianBelief::new(dvector![0.8, 0.2], DMatrix::identity(2, 2) * 0.1, 0.0).unwrap();
    let problem = problem_with(&model, None, prior.clone(), meas.clone(), 5.0, 100);
    let (traj, _) = solve_batch(&problem, problem.default_init(), &tight()).unwrap();
    let reference = linear_reference(&a, &q, &c, &r, &prior.mean, &prior.covariance, 0.0, &meas);
    let mut worst: f64 = (traj.state(0.0).unwrap() - &reference.smoothed[0].0).amax();
    for (z, (xs, _)) in meas.iter().zip(&reference.smoothed[1..]) {
        worst = worst.max((traj.state(z.time).unwrap() - xs).amax());
    }
    assert!(worst < 1e-3, "max deviation {worst:e}");
}

#[test]
fn matches_linear_rts_smoother_with_integrated_component() {
    // double integrator, noise on velocity only
    let a = dmatrix![0.0, 1.0; 0.0, -0.5];
    let g = dmatrix![0.0; 1.0];
    let q = dmatrix![0.01];
    let c = dmatrix![1.0, 0.0];
    let r = dmatrix![0.1];
    let model = LinearGaussian::new(a.clone(), g.clone(), q.clone(), c.clone(), r.clone())
        .unwrap()
        .with_rate_structure(0, RateStructure::Linear { source: 1, gain: 1.0 })
        .unwrap();
    let times: Vec<f64> = (1..=8).map(f64::from).collect();
    let (_, meas) = simulate(&model, &dvector![0.0, 1.0], &times, 1e-3, 4);
    let prior = GaussianBelief::new(dvector![0.1, 0.8], DMatrix::identity(2, 2) * 0.2, 0.0).unwrap();
    let problem = problem_with(&model, None, prior.clone(), meas.clone(), 8.0, 100);
    assert!(problem.is_integrated());
    let (traj, _) = solve_batch(&problem, problem.default_init(), &tight()).unwrap();
    let s = &g * &q * g.transpose();
    let reference = linear_reference(&a, &s, &c, &r, &prior.mean, &prior.covariance, 0.0, &meas);
    for (z, (xs, _)) in meas.iter().zip(&reference.smoothed[1..]) {
        let dev = (traj.state(z.time).unwrap() - xs).amax();
        assert!(dev < 1e-3, "t = {}: {dev:e}", z.time);
    }
}

#[test]
fn without_measurements_reproduces_the_ode_flow() {
    let model = VanDerPol::new(1.0).with_spectral_density(DMatrix::identity(2, 2) * 0.1).unwrap();
    let prior = GaussianBelief::new(dvector![1.0, 0.5], DMatrix::identity(2, 2) * 0.1, 0.0).unwrap();
    let problem = problem_with(&model, None, prior.clone(), vec![], 3.0, 40);
    let (traj, _) = solve_batch(&problem, problem.default_init(), &tight()).unwrap();
    let f = |x: &DVector<f64>, t: f64| model.drift(x, t);
    for t in [0.5, 1.0, 2.0, 3.0] {
        let fine = rk4_flow(f, &prior.mean, 0.0, t, 1e-3);
        let finer = rk4_flow(f, &prior.mean, 0.0, t, 5e-4);
        assert!((&fine - &finer).amax() < 1e-10, "oracle not converged");
        let dev = (traj.state(t).unwrap() - finer).amax();
        assert!(dev < 1e-6, "t = {t}: {dev:e}");
    }
}

#[test]
fn integrated_and_pseudo_noise_solutions_agree() {
    let model = VanDerPol::new(3.0);
    let meas = vdp_measurements(2);
    let integrated = problem_with(&model, None, vdp_prior(), meas.clone(), 10.0, 150);
    let pseudo = problem_with(&model, Some(NoiseStrategy::pseudo_noise()), vdp_prior(), meas, 10.0, 150);
    let (a, _) = solve_batch(&integrated, integrated.default_init(), &tight()).unwrap();
    let (b, _) = solve_batch(&pseudo, pseudo.default_init(), &tight()).unwrap();
    // five pseudo-noise standard deviations
    let tol = 5.0 * 1e-6f64.sqrt();
    for k in 0..=100 {
        let t = 0.1 * k as f64;
        let dev = (a.state(t).unwrap() - b.state(t).unwrap()).amax();
        assert!(dev < tol, "t = {t}: {dev:e}");
    }
}

#[test]
fn constraint_strategy_approaches_the_integrated_solution() {
    let model = VanDerPol::new(3.0);
    let meas = vdp_measurements(2);
    let integrated = problem_with(&model, None, vdp_prior(), meas.clone(), 10.0, 150);
    let penalised = problem_with(&model, Some(NoiseStrategy::constraint()), vdp_prior(), meas, 10.0, 150);
    let (a, _) = solve_batch(&integrated, integrated.default_init(), &tight()).unwrap();
    let (b, stats) = solve_batch(&penalised, penalised.default_init(), &tight()).unwrap();
    assert!(stats.termination.converged());
    for k in 0..=20 {
        let t = 0.5 * k as f64;
        let dev = (a.state(t).unwrap() - b.state(t).unwrap()).amax();
        assert!(dev < 2e-2, "t = {t}: {dev:e}");
    }
}

#[test]
fn dynamics_quadrature_converges_on_a_fixed_trajectory() {
    let model = VanDerPol::new(3.0);
    let problem = problem_with(&model, None, vdp_prior(), vdp_measurements(9), 10.0, 100);
    let (traj, _) = solve_batch(&problem, problem.default_init(), &SolverConfig::default()).unwrap();
    let dyn_cost = |n: usize| {
        let grid = CollocationGrid::<f64>::new(n).unwrap();
        assert_eq!(grid.weights, clenshaw_curtis_weights(n).unwrap());
        let vals = DVector::from_fn(grid.len(), |i, _| {
            let tau = grid.nodes[i];
            let (x, dx) = traj.eval_tau(tau).unwrap();
            let e = dx[1] * 0.2 - model.drift(&x, 0.0)[1];
            e * e
        });
        5.0 * grid.integrate(&vals)
    };
    let gaps: Vec<f64> = [20, 40, 80].iter().map(|&n| (dyn_cost(n) - dyn_cost(2 * n)).abs()).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn parameter_covariance_maps_to_state_covariance() {
    let model = VanDerPol::new(3.0);
    let problem = problem_with(&model, None, vdp_prior(), vdp_measurements(4), 10.0, 60);
    let (traj, _) = solve_batch(&problem, problem.default_init(), &SolverConfig::default()).unwrap();
    let cov = problem.parameter_covariance(&traj.params).unwrap();
    for t in [0.0, 5.0, 10.0] {
        let p = traj.state_covariance(&cov, t).unwrap();
        assert!(p.clone().cholesky().is_some());
        // the posterior should be tighter than the prior at the start
        if t == 0.0 {
            assert!(p[(0, 0)] < 0.25);
        }
    }
}
