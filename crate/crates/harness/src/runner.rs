//! Monte-Carlo orchestration: one truth and measurement realisation per run,
//! shared by every estimator.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use chebmap_core::baselines::{crlb_smoother, ekf_cd, erts_smooth, fixed_lag_erts, interpolate_mean, ukf_cd, UtParams};
use chebmap_core::batch_estimator::{solve_batch, ChebyshevTrajectory, MapProblem};
use chebmap_core::cheb_basis::AffineTimeMap;
use chebmap_core::nlsq_solver::SolverConfig;
use chebmap_core::sliding_estimator::{run_sequence, WindowConfig, WindowInit};
use chebmap_core::system_models::{
    partition_noise, GaussianBelief, Measurement, NoisePartition, NoiseStrategy, SystemModel,
};

use crate::config::{EstimatorKind, ExperimentConfig, InitChoice, StrategyChoice};
use crate::metrics::{crlb_metrics, estimator_metrics, nees_bounds, EstimateSeries};
use crate::report::{ExperimentReport, TimingReport};
use crate::simulate::{generate_measurements, simulate_truth};
use crate::HarnessError;

/// Everything produced by one Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub index: usize,
    pub truth_at_epochs: Vec<DVector<f64>>,
    pub measurements: Vec<Measurement<f64>>,
    pub measurement_hash: String,
    pub estimates: BTreeMap<String, Result<EstimateSeries, String>>,
    pub crlb: Option<Result<Vec<DMatrix<f64>>, String>>,
    /// Wall-clock seconds per estimator.
    pub timings: BTreeMap<String, f64>,
}

/// Independent truth and measurement streams for `run` under `seed`.
pub fn run_streams(seed: u64, run: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut truth = ChaCha8Rng::seed_from_u64(seed);
    truth.set_stream(2 * run as u64);
    let mut meas = ChaCha8Rng::seed_from_u64(seed);
    meas.set_stream(2 * run as u64 + 1);
    (truth, meas)
}

pub fn measurement_hash(meas: &[Measurement<f64>]) -> String {
    let mut h = Sha256::new();
    for z in meas {
        h.update(z.time.to_le_bytes());
        for v in z.value.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn window_label(size: f64) -> String {
    format!("wchevopt_{size}s")
}

/// Estimator labels in report order.
pub fn estimator_labels(cfg: &ExperimentConfig) -> Vec<String> {
    let mut kinds = cfg.estimators.clone();
    kinds.sort();
    kinds.dedup();
    let mut out = Vec::new();
    for kind in kinds {
        match kind {
            EstimatorKind::Chevopt => out.push("chevopt".to_string()),
            EstimatorKind::Wchevopt => out.extend(cfg.window_sizes.iter().map(|&s| window_label(s))),
            EstimatorKind::Ekf => out.push("ekf".into()),
            EstimatorKind::Ukf => out.push("ukf".into()),
            EstimatorKind::Erts => out.push("erts".into()),
            EstimatorKind::FixedLagErts => out.push("fixed_lag_erts".into()),
        }
    }
    out
}

pub fn solver_config(cfg: &ExperimentConfig) -> SolverConfig<f64> {
    SolverConfig {
        max_iterations: cfg.solver_max_iterations,
        cost_tol: cfg.solver_cost_tol,
        grad_tol: cfg.solver_grad_tol,
        step_tol: cfg.solver_step_tol,
        ..SolverConfig::default()
    }
}

pub fn prior(cfg: &ExperimentConfig) -> GaussianBelief<f64> {
    GaussianBelief::new(
        DVector::from_column_slice(&cfg.prior_mean),
        DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.prior_covariance_diag)),
        0.0,
    )
    .expect("validated prior")
}

pub fn partition(cfg: &ExperimentConfig, model: &dyn SystemModel<f64>) -> Result<NoisePartition<f64>, HarnessError> {
    let p = partition_noise(model)?;
    let p = match cfg.noise_strategy {
        StrategyChoice::Auto => p,
        StrategyChoice::IntegrateOut => p.with_strategy(NoiseStrategy::IntegrateOut, model)?,
        StrategyChoice::Constraint => p.with_strategy(NoiseStrategy::constraint(), model)?,
        StrategyChoice::PseudoNoise => p.with_strategy(
            NoiseStrategy::PseudoNoise {
                variance: cfg.pseudo_noise_variance,
            },
            model,
        )?,
    };
    Ok(p)
}

/// Batch solve over the whole horizon.
pub fn solve_chevopt<'a>(
    cfg: &ExperimentConfig,
    model: &'a dyn SystemModel<f64>,
    measurements: &[Measurement<f64>],
    order: usize,
) -> Result<(MapProblem<'a, f64>, ChebyshevTrajectory<f64>), HarnessError> {
    let prior = prior(cfg);
    let problem = MapProblem::new(
        model,
        partition(cfg, model)?,
        prior.clone(),
        measurements.to_vec(),
        AffineTimeMap::new(0.0, cfg.horizon)?,
        order,
    )?;
    let init = match cfg.chevopt_init {
        InitChoice::PriorMean => problem.default_init(),
        InitChoice::EkfFit => {
            let trace = ekf_cd(&prior, measurements, model, cfg.filter_step, cfg.horizon)?;
            match erts_smooth(&trace) {
                Ok(smoothed) => problem.init_from(|t| interpolate_mean(&smoothed, t))?,
                Err(_) => problem.init_from(|t| trace.mean_at(t))?,
            }
        }
    };
    let (traj, _) = solve_batch(&problem, init, &solver_config(cfg))?;
    Ok((problem, traj))
}

fn chevopt_series(
    cfg: &ExperimentConfig,
    model: &dyn SystemModel<f64>,
    measurements: &[Measurement<f64>],
) -> Result<EstimateSeries, HarnessError> {
    let order = cfg.chevopt_order.expect("validated");
    let (problem, traj) = solve_chevopt(cfg, model, measurements, order)?;
    let cov = problem.parameter_covariance(&traj.params)?;
    let mut states = Vec::new();
    let mut covs = Vec::new();
    for z in measurements {
        states.push(traj.state(z.time)?);
        covs.push(traj.state_covariance(&cov, z.time)?);
    }
    Ok(EstimateSeries {
        states,
        covariances: Some(covs),
    })
}

fn wchevopt_series(
    cfg: &ExperimentConfig,
    model: &dyn SystemModel<f64>,
    measurements: &[Measurement<f64>],
    size: f64,
    order: usize,
) -> Result<EstimateSeries, HarnessError> {
    let wcfg = WindowConfig {
        covariance_step: cfg.covariance_step,
        smooth_covariance: cfg.smooth_window_covariance,
        init: match cfg.window_init {
            InitChoice::PriorMean => WindowInit::PriorMean,
            InitChoice::EkfFit => WindowInit::EkfFit,
        },
        solver: solver_config(cfg),
        ..WindowConfig::new(size, order)
    };
    let windows = run_sequence(&prior(cfg), measurements, model, &partition(cfg, model)?, cfg.horizon, &wcfg)?;
    let beliefs: Vec<_> = windows.into_iter().flat_map(|w| w.measurement_beliefs).collect();
    Ok(EstimateSeries {
        states: beliefs.iter().map(|b| b.mean.clone()).collect(),
        covariances: Some(beliefs.into_iter().map(|b| b.covariance).collect()),
    })
}

fn beliefs_series(beliefs: Vec<GaussianBelief<f64>>) -> EstimateSeries {
    EstimateSeries {
        states: beliefs.iter().map(|b| b.mean.clone()).collect(),
        covariances: Some(beliefs.into_iter().map(|b| b.covariance).collect()),
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *timings.entry(label.to_string()).or_default() += start.elapsed().as_secs_f64();
    out
}

/// Runs every configured estimator on realisation `index`.
pub fn run_single(cfg: &ExperimentConfig, index: usize) -> Result<RunData, HarnessError> {
    let truth_model = crate::models::build(cfg, &cfg.truth_spectral_density_diag)?;
    let est_model = crate::models::build(cfg, cfg.estimator_q())?;
    let filter_model = crate::models::build(cfg, cfg.filter_q())?;
    let (mut truth_rng, mut meas_rng) = run_streams(cfg.seed, index);
    let x0 = DVector::from_column_slice(&cfg.true_initial_state);
    let truth = simulate_truth(truth_model.as_ref(), &x0, cfg.horizon, cfg.truth_step, &mut truth_rng)?;
    let times = cfg.measurement_times();
    let measurements = generate_measurements(&truth, truth_model.as_ref(), &times, &mut meas_rng);
    let hash = measurement_hash(&measurements);
    let truth_at_epochs: Vec<_> = times.iter().map(|&t| truth.at(t)).collect();

    let mut estimates = BTreeMap::new();
    let mut timings = BTreeMap::new();
    let fair = |label: &str| -> Result<(), HarnessError> {
        // every estimator must see the realisation recorded in the report
        if measurement_hash(&measurements) != hash {
            return Err(HarnessError::Fairness(label.to_string()));
        }
        Ok(())
    };
    let record = |r: Result<EstimateSeries, HarnessError>| r.map_err(|e| e.to_string());
    let p0 = prior(cfg);

    if cfg.has(EstimatorKind::Chevopt) {
        fair("chevopt")?;
        let r = timed(&mut timings, "chevopt", || chevopt_series(cfg, est_model.as_ref(), &measurements));
        estimates.insert("chevopt".to_string(), record(r));
    }
    if cfg.has(EstimatorKind::Wchevopt) {
        for (&size, &order) in cfg.window_sizes.iter().zip(&cfg.window_orders) {
            let label = window_label(size);
            fair(&label)?;
            let r = timed(&mut timings, &label, || {
                wchevopt_series(cfg, est_model.as_ref(), &measurements, size, order)
            });
            estimates.insert(label, record(r));
        }
    }
    let needs_ekf = [EstimatorKind::Ekf, EstimatorKind::Erts, EstimatorKind::FixedLagErts]
        .iter()
        .any(|k| cfg.has(*k));
    if needs_ekf {
        fair("ekf")?;
        let trace = timed(&mut timings, "ekf", || {
            ekf_cd(&p0, &measurements, filter_model.as_ref(), cfg.filter_step, cfg.horizon)
                .map_err(|e| e.to_string())
        });
        let ekf_time = timings["ekf"];
        if cfg.has(EstimatorKind::Ekf) {
            let r = trace.as_ref().map(|t| beliefs_series(t.measurement_beliefs()));
            estimates.insert("ekf".to_string(), r.map_err(Clone::clone));
        } else {
            timings.remove("ekf");
        }
        if cfg.has(EstimatorKind::Erts) {
            let r = timed(&mut timings, "erts", || -> Result<EstimateSeries, String> {
                let trace = trace.as_ref().map_err(Clone::clone)?;
                let smoothed = erts_smooth(trace).map_err(|e| e.to_string())?;
                Ok(beliefs_series(
                    trace.measurement_steps().into_iter().map(|k| smoothed[k].clone()).collect(),
                ))
            });
            *timings.get_mut("erts").expect("timed") += ekf_time;
            estimates.insert("erts".to_string(), r);
        }
        if cfg.has(EstimatorKind::FixedLagErts) {
            let lag = cfg.fixed_lag.expect("validated");
            let r = timed(&mut timings, "fixed_lag_erts", || -> Result<EstimateSeries, String> {
                let trace = trace.as_ref().map_err(Clone::clone)?;
                Ok(beliefs_series(fixed_lag_erts(trace, lag).map_err(|e| e.to_string())?))
            });
            *timings.get_mut("fixed_lag_erts").expect("timed") += ekf_time;
            estimates.insert("fixed_lag_erts".to_string(), r);
        }
    }
    if cfg.has(EstimatorKind::Ukf) {
        fair("ukf")?;
        let ut = UtParams {
            alpha: cfg.ukf_alpha,
            beta: cfg.ukf_beta,
            kappa: cfg.ukf_kappa,
        };
        let r = timed(&mut timings, "ukf", || -> Result<EstimateSeries, HarnessError> {
            let trace = ukf_cd(&p0, &measurements, filter_model.as_ref(), cfg.filter_step, cfg.horizon, ut)?;
            Ok(beliefs_series(trace.measurement_beliefs()))
        });
        estimates.insert("ukf".to_string(), record(r));
    }
    let crlb = cfg.crlb.then(|| {
        crlb_smoother(
            &|t| Ok(truth.at(t)),
            &p0.covariance,
            0.0,
            &times,
            cfg.horizon,
            truth_model.as_ref(),
            cfg.filter_step,
            cfg.crlb_diffusion_floor,
        )
        .map_err(|e| e.to_string())
    });

    Ok(RunData {
        index,
        truth_at_epochs,
        measurements,
        measurement_hash: hash,
        estimates,
        crlb,
        timings,
    })
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

/// Runs all Monte-Carlo realisations and aggregates them in run order, so the
/// report does not depend on scheduling.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<(ExperimentReport, TimingReport), HarnessError> {
    cfg.validate()?;
    let pool = thread_pool(cfg.workers)?;
    let runs: Vec<RunData> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| run_single(cfg, i))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(aggregate(cfg, &runs))
}

pub fn aggregate(cfg: &ExperimentConfig, runs: &[RunData]) -> (ExperimentReport, TimingReport) {
    let dim = cfg.true_initial_state.len();
    let bounds = nees_bounds(runs.len(), dim, cfg.nees_confidence);
    let truths: Vec<_> = runs.iter().map(|r| r.truth_at_epochs.clone()).collect();
    let mut estimators = BTreeMap::new();
    let mut timing = BTreeMap::new();
    for label in estimator_labels(cfg) {
        let series: Vec<_> = runs
            .iter()
            .map(|r| r.estimates.get(&label).cloned().unwrap_or_else(|| Err("not run".into())))
            .collect();
        estimators.insert(label.clone(), estimator_metrics(&truths, &series, bounds));
        let total: f64 = runs.iter().filter_map(|r| r.timings.get(&label)).sum();
        timing.insert(label, total / runs.len() as f64);
    }
    let crlb = cfg.crlb.then(|| {
        let per_run: Vec<_> = runs.iter().map(|r| r.crlb.clone().expect("crlb requested")).collect();
        crlb_metrics(&per_run)
    });
    let report = ExperimentReport {
        config: cfg.clone(),
        times: cfg.measurement_times(),
        state_dim: dim,
        nees_bounds: bounds,
        measurement_hashes: runs.iter().map(|r| r.measurement_hash.clone()).collect(),
        estimators,
        crlb,
    };
    (report, TimingReport { mean_seconds: timing })
}
