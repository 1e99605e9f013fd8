use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;
use crate::system_models::GaussianBelief;

/// One propagation step of a filter.
#[derive(Debug, Clone)]
pub struct TraceStep<T: Real> {
    pub time: T,
    pub predicted: GaussianBelief<T>,
    /// Equal to `predicted` unless a measurement was processed here.
    pub updated: GaussianBelief<T>,
    /// Linearised transition from the previous step (identity at step 0).
    pub transition: Option<DMatrix<T>>,
    pub measurement: Option<usize>,
    pub innovation: Option<DVector<T>>,
}

/// Forward pass of a continuous-discrete filter.
#[derive(Debug, Clone)]
pub struct FilterTrace<T: Real> {
    pub steps: Vec<TraceStep<T>>,
}

impl<T: Real> FilterTrace<T> {
    pub fn final_belief(&self) -> &GaussianBelief<T> {
        &self.steps.last().expect("trace has an initial step").updated
    }

    /// Indices of the steps at which a measurement was processed.
    pub fn measurement_steps(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.measurement.map(|_| i))
            .collect()
    }

    /// Updated beliefs at the measurement times, in measurement order.
    pub fn measurement_beliefs(&self) -> Vec<GaussianBelief<T>> {
        self.measurement_steps()
            .into_iter()
            .map(|i| self.steps[i].updated.clone())
            .collect()
    }

    pub fn times(&self) -> Vec<T> {
        self.steps.iter().map(|s| s.time).collect()
    }

    /// Updated mean at `t`, linearly interpolated between steps and clamped
    /// to the covered interval.
    pub fn mean_at(&self, t: T) -> DVector<T> {
        let steps = &self.steps;
        let idx = steps.partition_point(|s| s.time < t);
        if idx == 0 {
            return steps[0].updated.mean.clone();
        }
        if idx >= steps.len() {
            return steps[steps.len() - 1].updated.mean.clone();
        }
        let (a, b) = (&steps[idx - 1], &steps[idx]);
        let span = b.time - a.time;
        if span <= T::zero() {
            return b.updated.mean.clone();
        }
        // left limit: use the pre-update mean at the right end
        let w = (t - a.time) / span;
        let right = if w >= T::one() { &b.updated.mean } else { &b.predicted.mean };
        &a.updated.mean * (T::one() - w) + right * w
    }
}

pub(crate) fn start_step<T: Real>(belief: GaussianBelief<T>) -> TraceStep<T> {
    let n = belief.dim();
    TraceStep {
        time: belief.time,
        predicted: belief.clone(),
        updated: belief,
        transition: Some(DMatrix::identity(n, n)),
        measurement: None,
        innovation: None,
    }
}

pub(crate) fn belief<T: Real>(mean: DVector<T>, covariance: DMatrix<T>, time: T) -> GaussianBelief<T> {
    GaussianBelief {
        mean,
        covariance,
        time,
    }
}

