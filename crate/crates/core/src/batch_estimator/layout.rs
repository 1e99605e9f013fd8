use nalgebra::{DMatrix, DVector};

use crate::cheb_basis::BasisEval;
use crate::error::{EstimationError, Result};
use crate::scalar::{lit, Real};
use crate::system_models::{NoisePartition, RateStructure, SystemModel};

/// How one state component is generated from the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentRep<T: Real> {
    /// Own Chebyshev series; coefficients at `offset .. offset + N + 1`.
    Series { offset: usize },
    /// `x(τ) = p[anchor] + gain · (t_len/2) · Σ c_k G_k(τ)` where `c` are the
    /// coefficients of component `source`.
    Integrated { anchor: usize, source: usize, gain: T },
    /// Time-invariant component `p[index]`.
    Constant { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    FullState,
    Integrated,
}

/// Map from the parameter vector to the state trajectory over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameterization<T: Real> {
    order: usize,
    reps: Vec<ComponentRep<T>>,
    n_params: usize,
    kind: ParamKind,
}

impl<T: Real> Parameterization<T> {
    /// Every component carries its own `N + 1` coefficients.
    pub fn full_state(state_dim: usize, order: usize) -> Self {
        let reps = (0..state_dim)
            .map(|i| ComponentRep::Series {
                offset: i * (order + 1),
            })
            .collect();
        Self {
            order,
            reps,
            n_params: state_dim * (order + 1),
            kind: ParamKind::FullState,
        }
    }

    /// Noisy components are series; noise-free ones become anchored
    /// integrals or constants according to the model's rate structure.
    pub fn integrated(
        model: &dyn SystemModel<T>,
        partition: &NoisePartition<T>,
        order: usize,
    ) -> Result<Self> {
        let n = model.state_dim();
        if partition.is_trivial() {
            return Ok(Self::full_state(n, order));
        }
        if !partition.integrate_out_eligible(model) {
            return Err(EstimationError::Argument(
                "model structure does not allow integrating out the noise-free states".into(),
            ));
        }
        let mut next = 0;
        let mut scalar_slot = vec![usize::MAX; n];
        for &i in &partition.noise_free {
            scalar_slot[i] = next;
            next += 1;
        }
        let mut series_offset = vec![usize::MAX; n];
        for &i in &partition.noisy {
            series_offset[i] = next;
            next += order + 1;
        }
        let reps = (0..n)
            .map(|i| {
                if series_offset[i] != usize::MAX {
                    return ComponentRep::Series {
                        offset: series_offset[i],
                    };
                }
                match model.rate_structure(i) {
                    RateStructure::Zero => ComponentRep::Constant {
                        index: scalar_slot[i],
                    },
                    RateStructure::Linear { source, gain } => ComponentRep::Integrated {
                        anchor: scalar_slot[i],
                        source,
                        gain,
                    },
                    RateStructure::General => unreachable!("eligibility checked above"),
                }
            })
            .collect();
        Ok(Self {
            order,
            reps,
            n_params: next,
            kind: ParamKind::Integrated,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn state_dim(&self) -> usize {
        self.reps.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn rep(&self, component: usize) -> ComponentRep<T> {
        self.reps[component]
    }

    pub fn reps(&self) -> &[ComponentRep<T>] {
        &self.reps
    }

    fn series_offset(&self, component: usize) -> usize {
        match self.reps[component] {
            ComponentRep::Series { offset } => offset,
            _ => unreachable!("integration source is always a series component"),
        }
    }

    pub fn check_len(&self, params: &DVector<T>) -> Result<()> {
        if params.len() != self.n_params {
            return Err(EstimationError::Dimension(format!(
                "expected {} parameters, got {}",
                self.n_params,
                params.len()
            )));
        }
        Ok(())
    }

    /// State and `dx/dτ` at one point; `half_len` is `(t_end - t_start)/2`.
    pub fn state_and_rate(
        &self,
        basis: &BasisEval<T>,
        half_len: T,
        params: &DVector<T>,
    ) -> (DVector<T>, DVector<T>) {
        let n = self.state_dim();
        let len = self.order + 1;
        let mut x = DVector::zeros(n);
        let mut dx = DVector::zeros(n);
        for (i, rep) in self.reps.iter().enumerate() {
            match *rep {
                ComponentRep::Series { offset } => {
                    let c = params.rows(offset, len);
                    x[i] = c.dot(&basis.values);
                    dx[i] = c.dot(&basis.derivatives);
                }
                ComponentRep::Integrated { anchor, source, gain } => {
                    let c = params.rows(self.series_offset(source), len);
                    let scale = gain * half_len;
                    x[i] = params[anchor] + scale * c.dot(&basis.integrals);
                    dx[i] = scale * c.dot(&basis.values);
                }
                ComponentRep::Constant { index } => {
                    x[i] = params[index];
                }
            }
        }
        (x, dx)
    }

    /// `(∂x/∂p, ∂(dx/dτ)/∂p)`, both `n × P`. The map is linear in `p`.
    pub fn sensitivity(&self, basis: &BasisEval<T>, half_len: T) -> (DMatrix<T>, DMatrix<T>) {
        let n = self.state_dim();
        let len = self.order + 1;
        let mut b = DMatrix::zeros(n, self.n_params);
        let mut db = DMatrix::zeros(n, self.n_params);
        for (i, rep) in self.reps.iter().enumerate() {
            match *rep {
                ComponentRep::Series { offset } => {
                    for k in 0..len {
                        b[(i, offset + k)] = basis.values[k];
                        db[(i, offset + k)] = basis.derivatives[k];
                    }
                }
                ComponentRep::Integrated { anchor, source, gain } => {
                    let off = self.series_offset(source);
                    let scale = gain * half_len;
                    b[(i, anchor)] = T::one();
                    for k in 0..len {
                        b[(i, off + k)] = scale * basis.integrals[k];
                        db[(i, off + k)] = scale * basis.values[k];
                    }
                }
                ComponentRep::Constant { index } => {
                    b[(i, index)] = T::one();
                }
            }
        }
        (b, db)
    }

    /// Parameters of the trajectory that sits at `state` for all time
    /// (integrated components grow linearly at the source's rate).
    pub fn constant_params(&self, state: &DVector<T>) -> DVector<T> {
        let mut p = DVector::zeros(self.n_params);
        for (i, rep) in self.reps.iter().enumerate() {
            match *rep {
                ComponentRep::Series { offset } => p[offset] = state[i],
                ComponentRep::Integrated { anchor, .. } => p[anchor] = state[i],
                ComponentRep::Constant { index } => p[index] = state[i],
            }
        }
        p
    }

    /// Parameters from nodal samples (`(N + 1) × n`, rows on the Chebyshev
    /// points) of a reference trajectory.
    pub fn params_from_nodal(
        &self,
        transform: &crate::cheb_basis::ChebyshevTransform<T>,
        nodal: &DMatrix<T>,
    ) -> Result<DVector<T>> {
        let coeffs = transform.nodal_to_coeffs(nodal)?;
        let mut p = DVector::zeros(self.n_params);
        let len = self.order + 1;
        for (i, rep) in self.reps.iter().enumerate() {
            match *rep {
                ComponentRep::Series { offset } => {
                    p.rows_mut(offset, len).copy_from(&coeffs.column(i));
                }
                ComponentRep::Integrated { anchor, .. } => p[anchor] = nodal[(0, i)],
                ComponentRep::Constant { index } => {
                    p[index] = nodal.column(i).sum() / crate::scalar::from_usize::<T>(nodal.nrows());
                }
            }
        }
        Ok(p)
    }

    /// Equivalent plain Chebyshev coefficients, `(N + 2) × n`.
    ///
    /// Integrated components need one extra degree; series components have a
    /// zero in the last row.
    pub fn coefficients(&self, params: &DVector<T>, half_len: T) -> DMatrix<T> {
        let n = self.state_dim();
        let len = self.order + 1;
        let mut out = DMatrix::zeros(len + 1, n);
        let two = lit::<T>(2.0);
        for (i, rep) in self.reps.iter().enumerate() {
            match *rep {
                ComponentRep::Series { offset } => {
                    for k in 0..len {
                        out[(k, i)] = params[offset + k];
                    }
                }
                ComponentRep::Constant { index } => out[(0, i)] = params[index],
                ComponentRep::Integrated { anchor, source, gain } => {
                    let off = self.series_offset(source);
                    let scale = gain * half_len;
                    let mut col = DVector::<T>::zeros(len + 1);
                    for k in 0..len {
                        let c = params[off + k] * scale;
                        // antiderivative of T_k in the T basis, fixed by G_k(-1) = 0
                        match k {
                            0 => {
                                col[1] += c;
                                col[0] += c;
                            }
                            1 => {
                                col[2] += c / lit(4.0);
                                col[0] -= c / lit(4.0);
                            }
                            _ => {
                                let kf = crate::scalar::from_usize::<T>(k);
                                col[k + 1] += c / (two * (kf + T::one()));
                                col[k - 1] -= c / (two * (kf - T::one()));
                                let sign = if k % 2 == 0 { T::one() } else { -T::one() };
                                col[0] -= sign / (kf * kf - T::one()) * c;
                            }
                        }
                    }
                    col[0] += params[anchor];
                    out.set_column(i, &col);
                }
            }
        }
        out
    }
}
