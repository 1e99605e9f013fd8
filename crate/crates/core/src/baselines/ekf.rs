use nalgebra::DVector;

use super::propagate::{kalman_update, rk4_linearized, time_grid};
use super::trace::{belief, start_step, FilterTrace, TraceStep};
use crate::error::Result;
use crate::scalar::Real;
use crate::system_models::{GaussianBelief, Measurement, SystemModel};

/// Continuous-discrete extended Kalman filter from `initial.time` to `t_end`.
///
/// Mean and covariance move together under RK4 with `F` at the running mean;
/// each measurement gets the linearised update at the predicted mean.
pub fn ekf_cd<T: Real>(
    initial: &GaussianBelief<T>,
    measurements: &[Measurement<T>],
    model: &dyn SystemModel<T>,
    step: T,
    t_end: T,
) -> Result<FilterTrace<T>> {
    let times: Vec<T> = measurements.iter().map(|z| z.time).collect();
    let (grid, at_start) = time_grid(initial.time, &times, t_end, step)?;
    let mut steps = Vec::with_capacity(grid.len() + 1);
    let mut first = start_step(initial.clone());
    if let Some(k) = at_start {
        apply_update(&mut first, model, &measurements[k].value, k)?;
    }
    steps.push(first);

    let mut x = steps[0].updated.mean.clone();
    let mut p = steps[0].updated.covariance.clone();
    let mut t = initial.time;
    for (tn, meas) in grid {
        let (xn, pn, phi) = rk4_linearized(model, &x, &p, t, tn - t)?;
        let mut s = TraceStep {
            time: tn,
            predicted: belief(xn.clone(), pn.clone(), tn),
            updated: belief(xn, pn, tn),
            transition: Some(phi),
            measurement: None,
            innovation: None,
        };
        if let Some(k) = meas {
            apply_update(&mut s, model, &measurements[k].value, k)?;
        }
        x = s.updated.mean.clone();
        p = s.updated.covariance.clone();
        t = tn;
        steps.push(s);
    }
    Ok(FilterTrace { steps })
}

fn apply_update<T: Real>(
    step: &mut TraceStep<T>,
    model: &dyn SystemModel<T>,
    z: &DVector<T>,
    k: usize,
) -> Result<()> {
    let prior = &step.predicted;
    let (x, p, innov) = kalman_update(model, &prior.mean, &prior.covariance, &prior.mean, z, step.time)?;
    step.updated = belief(x, p, step.time);
    step.measurement = Some(k);
    step.innovation = Some(innov);
    Ok(())
}
