//! Split of the state into a sub-system driven by positive-definite noise
//! and a noise-free remainder.
//!
//! With `G Q Gᵀ = Ḡ Ḡᵀ` of rank `r` (so `Q̄ = I_r`), the rows are permuted so
//! the `r` noisy components come first and the mixing matrix
//! `L = [[I, 0], [-Ḡ₂Ḡ₁⁻¹, I]]` removes the noise from the remaining rows.

use nalgebra::{DMatrix, DVector};

use super::{RateStructure, SystemModel};
use crate::error::{EstimationError, Result};
use crate::linalg::pivoted_cholesky;
use crate::scalar::{lit, Real};

/// Relative pivot threshold for the rank decision.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// How the noise-free sub-dynamics enter the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseStrategy<T: Real> {
    /// Noise-free components are integrals of noisy ones (or constants) and
    /// are removed from the coefficient set.
    IntegrateOut,
    /// Noise-free dynamics become quadratic penalties whose weight grows by
    /// `growth` over `rounds` warm-started solves.
    Constraint {
        initial_penalty: T,
        growth: T,
        rounds: usize,
    },
    /// A small spectral density is added to the noise-free diagonal.
    PseudoNoise { variance: T },
}

impl<T: Real> NoiseStrategy<T> {
    pub fn constraint() -> Self {
        NoiseStrategy::Constraint {
            initial_penalty: lit(1e2),
            growth: lit(10.0),
            rounds: 4,
        }
    }

    pub fn pseudo_noise() -> Self {
        NoiseStrategy::PseudoNoise { variance: lit(1e-6) }
    }
}

/// Result of the rank analysis of a diffusion matrix.
#[derive(Debug, Clone)]
pub struct RankSplit<T: Real> {
    pub rank: usize,
    /// Ascending indices of the noise-carrying components.
    pub noisy: Vec<usize>,
    pub noise_free: Vec<usize>,
    /// `n × r` factor with `factor · factorᵀ = G Q Gᵀ` (original row order).
    pub factor: DMatrix<T>,
    /// A pivot fell within a factor of ten of the threshold.
    pub ambiguous: bool,
}

/// Numerical rank split of a symmetric PSD diffusion matrix by pivoted
/// Cholesky; pivots below `1e-10 · trace` count as zero.
pub fn partition_covariance<T: Real>(diffusion: &DMatrix<T>) -> RankSplit<T> {
    let n = diffusion.nrows();
    let trace = diffusion.trace();
    if !(trace > T::zero()) {
        return RankSplit {
            rank: 0,
            noisy: vec![],
            noise_free: (0..n).collect(),
            factor: DMatrix::zeros(n, 0),
            ambiguous: false,
        };
    }
    let threshold = lit::<T>(RANK_THRESHOLD) * trace;
    let pc = pivoted_cholesky(diffusion, threshold);
    let ten = lit::<T>(10.0);
    let ambiguous = pc.last_accepted.is_some_and(|p| p <= ten * threshold)
        || pc.first_rejected.is_some_and(|p| p * ten >= threshold);

    let mut noisy: Vec<usize> = pc.order[..pc.rank].to_vec();
    noisy.sort_unstable();
    let noise_free: Vec<usize> = (0..n).filter(|i| !noisy.contains(i)).collect();
    RankSplit {
        rank: pc.rank,
        noisy,
        noise_free,
        factor: pc.factor,
        ambiguous,
    }
}

#[derive(Debug, Clone)]
pub struct NoisePartition<T: Real> {
    pub state_dim: usize,
    pub noisy: Vec<usize>,
    pub noise_free: Vec<usize>,
    /// `Ḡ₁`, the rows of `Ḡ` belonging to the noisy components.
    pub noisy_block: DMatrix<T>,
    /// `Q̄`; the identity because `Ḡ` absorbs the noise scale.
    pub reduced_noise_covariance: DMatrix<T>,
    /// `Ḡ₂ Ḡ₁⁻¹`.
    pub coupling: DMatrix<T>,
    /// `L` in the permuted (noisy-first) ordering.
    pub mixing: DMatrix<T>,
    pub strategy: NoiseStrategy<T>,
    pub ambiguous_rank: bool,
    full_bar_g: DMatrix<T>,
}

impl<T: Real> NoisePartition<T> {
    fn from_split(split: RankSplit<T>, n: usize) -> Result<Self> {
        let r = split.rank;
        let select = |rows: &[usize]| {
            DMatrix::from_fn(rows.len(), r, |i, j| split.factor[(rows[i], j)])
        };
        let g1 = select(&split.noisy);
        let g2 = select(&split.noise_free);
        let coupling = if r == 0 {
            DMatrix::zeros(n, 0)
        } else {
            let g1_inv = g1.clone().try_inverse().ok_or_else(|| {
                EstimationError::NotPositiveDefinite("noisy block of the noise matrix".into())
            })?;
            &g2 * g1_inv
        };
        let mut mixing = DMatrix::identity(n, n);
        for i in 0..(n - r) {
            for j in 0..r {
                mixing[(r + i, j)] = -coupling[(i, j)];
            }
        }
        Ok(Self {
            state_dim: n,
            noisy: split.noisy,
            noise_free: split.noise_free,
            noisy_block: g1,
            reduced_noise_covariance: DMatrix::identity(r, r),
            coupling,
            mixing,
            strategy: NoiseStrategy::IntegrateOut,
            ambiguous_rank: split.ambiguous,
            full_bar_g: split.factor,
        })
    }

    pub fn noisy_dim(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.noise_free.is_empty()
    }

    /// Noisy components followed by noise-free ones.
    pub fn permutation(&self) -> Vec<usize> {
        self.noisy.iter().chain(self.noise_free.iter()).copied().collect()
    }

    fn permute(&self, v: &DVector<T>) -> DVector<T> {
        let p = self.permutation();
        DVector::from_fn(p.len(), |i, _| v[p[i]])
    }

    /// `Ḡ₁ Q̄ Ḡ₁ᵀ`.
    pub fn noisy_covariance(&self) -> DMatrix<T> {
        &self.noisy_block * &self.reduced_noise_covariance * self.noisy_block.transpose()
    }

    /// `Ḡ` in the permuted ordering.
    pub fn bar_g(&self) -> DMatrix<T> {
        let p = self.permutation();
        DMatrix::from_fn(p.len(), self.noisy_dim(), |i, j| self.full_bar_g[(p[i], j)])
    }

    /// `L Ḡ`; the last `n - r` rows vanish.
    pub fn mixed_noise_matrix(&self) -> DMatrix<T> {
        &self.mixing * self.bar_g()
    }

    /// `g = L f` in the permuted ordering.
    pub fn transformed_dynamics(
        &self,
        model: &dyn SystemModel<T>,
        x: &DVector<T>,
        t: T,
    ) -> DVector<T> {
        &self.mixing * self.permute(&model.drift(x, t))
    }

    /// Whether every noise-free component is a constant or a scaled copy of
    /// a noisy component's integral, with no noise leaking through `L`.
    pub fn integrate_out_eligible(&self, model: &dyn SystemModel<T>) -> bool {
        if self.noisy.is_empty() {
            return false;
        }
        let tol = lit::<T>(1e-12);
        let uncoupled = self.coupling.iter().all(|c| c.abs() <= tol);
        uncoupled
            && self.noise_free.iter().all(|&i| match model.rate_structure(i) {
                RateStructure::Zero => true,
                RateStructure::Linear { source, .. } => self.noisy.contains(&source),
                RateStructure::General => false,
            })
    }

    /// Overrides the strategy, refusing `IntegrateOut` where it does not apply.
    pub fn with_strategy(
        mut self,
        strategy: NoiseStrategy<T>,
        model: &dyn SystemModel<T>,
    ) -> Result<Self> {
        if strategy == NoiseStrategy::IntegrateOut
            && !self.is_trivial()
            && !self.integrate_out_eligible(model)
        {
            return Err(EstimationError::Argument(
                "noise-free sub-dynamics cannot be integrated out for this model".into(),
            ));
        }
        if let NoiseStrategy::PseudoNoise { variance } = strategy {
            if !(variance > T::zero()) {
                return Err(EstimationError::Argument("pseudo-noise variance must be positive".into()));
            }
        }
        if let NoiseStrategy::Constraint { initial_penalty, growth, rounds } = strategy {
            if !(initial_penalty > T::zero()) || !(growth >= T::one()) || rounds == 0 {
                return Err(EstimationError::Argument("invalid penalty schedule".into()));
            }
        }
        self.strategy = strategy;
        Ok(self)
    }
}

/// Partitions a model's noise and picks a default strategy: integrate out
/// when the structure allows it, pseudo-noise otherwise.
pub fn partition_noise<T: Real>(model: &dyn SystemModel<T>) -> Result<NoisePartition<T>> {
    let n = model.state_dim();
    let diffusion = model.diffusion(T::zero());
    let mut part = NoisePartition::from_split(partition_covariance(&diffusion), n)?;
    if !part.is_trivial() && !part.integrate_out_eligible(model) {
        part.strategy = NoiseStrategy::pseudo_noise();
    }
    Ok(part)
}
