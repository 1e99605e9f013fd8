//! Chebyshev polynomial primitives on `[-1, 1]`.
//!
//! Evaluation of the first-kind basis `F_i`, its derivative and its running
//! integral from `-1`, the Chebyshev extreme points used as collocation nodes,
//! Clenshaw-Curtis weights on those nodes, the affine map between a time
//! window and `[-1, 1]`, and the coefficient/nodal transforms.

use nalgebra::{DMatrix, DVector};

use crate::error::{EstimationError, Result};
use crate::scalar::{from_usize, lit, Real};

/// Inputs this far outside `[-1, 1]` are clamped instead of rejected.
pub const TAU_CLAMP: f64 = 1e-12;

fn check_tau<T: Real>(tau: T) -> Result<T> {
    let one = T::one();
    let eps = lit::<T>(TAU_CLAMP);
    if !tau.is_finite() || tau.abs() > one + eps {
        return Err(EstimationError::Domain(format!(
            "tau = {} outside [-1, 1]",
            crate::scalar::to_f64(tau)
        )));
    }
    Ok(tau.max(-one).min(one))
}

/// Affine map between a time window `[t_start, t_end]` and `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTimeMap<T: Real> {
    t_start: T,
    t_end: T,
}

impl<T: Real> AffineTimeMap<T> {
    pub fn new(t_start: T, t_end: T) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(EstimationError::Argument(format!(
                "time window requires t_end > t_start, got [{}, {}]",
                crate::scalar::to_f64(t_start),
                crate::scalar::to_f64(t_end)
            )));
        }
        Ok(Self { t_start, t_end })
    }

    pub fn t_start(&self) -> T {
        self.t_start
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn length(&self) -> T {
        self.t_end - self.t_start
    }

    /// `dτ/dt = 2 / (t_end - t_start)`.
    pub fn rate_scale(&self) -> T {
        lit::<T>(2.0) / self.length()
    }

    /// Maps `t` to `τ`. The endpoints land exactly on `∓1`.
    pub fn forward(&self, t: T) -> T {
        ((t - self.t_start) - (self.t_end - t)) / self.length()
    }

    /// Maps `τ` back to `t`. Exact at `τ = ∓1`.
    pub fn inverse(&self, tau: T) -> T {
        let half = lit::<T>(0.5);
        if tau >= T::zero() {
            self.t_end - (T::one() - tau) * half * self.length()
        } else {
            self.t_start + (T::one() + tau) * half * self.length()
        }
    }

    /// Maps `t` to `τ`, tolerating `t` marginally outside the window.
    pub fn checked_forward(&self, t: T) -> Result<T> {
        check_tau(self.forward(t))
    }
}

/// Basis values, derivatives and integrals at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval<T: Real> {
    pub order: usize,
    /// `F_0(τ) .. F_N(τ)`.
    pub values: DVector<T>,
    /// `dF_i/dτ`.
    pub derivatives: DVector<T>,
    /// `∫_{-1}^{τ} F_i`.
    pub integrals: DVector<T>,
}

/// Evaluates the Chebyshev basis of order `order` at `tau`.
pub fn eval_basis<T: Real>(order: usize, tau: T) -> Result<BasisEval<T>> {
    let tau = check_tau(tau)?;
    // one extra degree for the integral recurrence
    let (vals, ders) = recurrences(order + 1, tau);
    let two = lit::<T>(2.0);

    let mut integrals = DVector::zeros(order + 1);
    for i in 0..=order {
        integrals[i] = match i {
            0 => vals[1] + vals[0],
            1 => (vals[2] - vals[0]) / lit(4.0),
            _ => {
                let up = two * from_usize::<T>(i + 1);
                let down = two * from_usize::<T>(i - 1);
                let at_tau = vals[i + 1] / up - vals[i - 1] / down;
                // same expression at τ = -1, so G_i(-1) cancels exactly
                let sign_up = if (i + 1) % 2 == 0 { T::one() } else { -T::one() };
                let sign_down = if (i - 1) % 2 == 0 { T::one() } else { -T::one() };
                at_tau - (sign_up / up - sign_down / down)
            }
        };
    }

    Ok(BasisEval {
        order,
        values: DVector::from_iterator(order + 1, vals.into_iter().take(order + 1)),
        derivatives: DVector::from_iterator(order + 1, ders.into_iter().take(order + 1)),
        integrals,
    })
}

/// Three-term recurrences for `F_i` and `dF_i/dτ`, `i = 0..=top`.
fn recurrences<T: Real>(top: usize, tau: T) -> (Vec<T>, Vec<T>) {
    let two = lit::<T>(2.0);
    let mut vals = Vec::with_capacity(top + 1);
    let mut ders = Vec::with_capacity(top + 1);
    vals.push(T::one());
    ders.push(T::zero());
    if top >= 1 {
        vals.push(tau);
        ders.push(T::one());
    }
    for i in 1..top {
        let v = two * tau * vals[i] - vals[i - 1];
        let d = two * vals[i] + two * tau * ders[i] - ders[i - 1];
        vals.push(v);
        ders.push(d);
    }
    (vals, ders)
}

/// Collocation nodes and Clenshaw-Curtis weights of one order.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid<T: Real> {
    pub order: usize,
    pub nodes: DVector<T>,
    pub weights: DVector<T>,
}

impl<T: Real> CollocationGrid<T> {
    pub fn new(order: usize) -> Result<Self> {
        Ok(Self {
            order,
            nodes: chebyshev_points(order)?,
            weights: clenshaw_curtis_weights(order)?,
        })
    }

    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `Σ ω_i f(τ_i)`.
    pub fn integrate(&self, values: &DVector<T>) -> T {
        self.weights.dot(values)
    }
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        return Err(EstimationError::Argument(
            "collocation grid needs order >= 1".into(),
        ));
    }
    Ok(())
}

/// Chebyshev extreme points `τ_k = -cos(kπ/N)`, ascending from `-1` to `1`.
pub fn chebyshev_points<T: Real>(order: usize) -> Result<DVector<T>> {
    check_order(order)?;
    let n = from_usize::<T>(order);
    // sin form keeps the grid exactly antisymmetric
    Ok(DVector::from_fn(order + 1, |k, _| {
        let m = lit::<T>(2.0 * k as f64 - order as f64);
        (T::pi() * m / (lit::<T>(2.0) * n)).sin()
    }))
}

/// Clenshaw-Curtis weights on the Chebyshev extreme points.
///
/// Closed-form cosine sum; equals `∫ ℓ_i` over `[-1, 1]` for the Lagrange
/// basis on the same nodes.
pub fn clenshaw_curtis_weights<T: Real>(order: usize) -> Result<DVector<T>> {
    check_order(order)?;
    let n = order;
    let nf = from_usize::<T>(n);
    let one = T::one();
    let two = lit::<T>(2.0);
    let mut w = DVector::zeros(n + 1);
    if n == 1 {
        w[0] = one;
        w[1] = one;
        return Ok(w);
    }
    let mut v = vec![one; n - 1];
    let theta = |k: usize| T::pi() * from_usize::<T>(k) / nf;
    if n % 2 == 0 {
        let end = one / (nf * nf - one);
        w[0] = end;
        w[n] = end;
        for k in 1..(n / 2) {
            let kf = from_usize::<T>(k);
            let denom = lit::<T>(4.0) * kf * kf - one;
            for (j, vj) in v.iter_mut().enumerate() {
                *vj -= two * (two * kf * theta(j + 1)).cos() / denom;
            }
        }
        for (j, vj) in v.iter_mut().enumerate() {
            *vj -= (nf * theta(j + 1)).cos() / (nf * nf - one);
        }
    } else {
        let end = one / (nf * nf);
        w[0] = end;
        w[n] = end;
        for k in 1..=((n - 1) / 2) {
            let kf = from_usize::<T>(k);
            let denom = lit::<T>(4.0) * kf * kf - one;
            for (j, vj) in v.iter_mut().enumerate() {
                *vj -= two * (two * kf * theta(j + 1)).cos() / denom;
            }
        }
    }
    for (j, vj) in v.into_iter().enumerate() {
        w[j + 1] = two * vj / nf;
    }
    Ok(w)
}

/// Evaluates a Chebyshev series with one column per state component.
///
/// Returns the state and its derivative with respect to `τ`.
pub fn series_eval<T: Real>(coeffs: &DMatrix<T>, tau: T) -> Result<(DVector<T>, DVector<T>)> {
    if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
        return Err(EstimationError::Dimension(
            "empty coefficient matrix".into(),
        ));
    }
    let basis = eval_basis(coeffs.nrows() - 1, tau)?;
    let state = coeffs.tr_mul(&basis.values);
    let rate = coeffs.tr_mul(&basis.derivatives);
    Ok((state, rate))
}

/// Coefficient/nodal transform pair for one grid order.
///
/// Explicit dense matrices; orders in this crate stay in the hundreds.
#[derive(Debug, Clone)]
pub struct ChebyshevTransform<T: Real> {
    order: usize,
    to_nodal: DMatrix<T>,
    to_coeffs: DMatrix<T>,
}

impl<T: Real> ChebyshevTransform<T> {
    pub fn new(order: usize) -> Result<Self> {
        check_order(order)?;
        let nf = from_usize::<T>(order);
        // F_i(τ_k) = (-1)^i cos(i k π / N)
        let entry = |k: usize, i: usize| {
            let sign = if i % 2 == 0 { T::one() } else { -T::one() };
            let angle = T::pi() * from_usize::<T>((i * k) % (2 * order)) / nf;
            sign * angle.cos()
        };
        let to_nodal = DMatrix::from_fn(order + 1, order + 1, entry);
        let half = lit::<T>(0.5);
        let to_coeffs = DMatrix::from_fn(order + 1, order + 1, |i, k| {
            let mut c = entry(k, i) * lit::<T>(2.0) / nf;
            if k == 0 || k == order {
                c *= half;
            }
            if i == 0 || i == order {
                c *= half;
            }
            c
        });
        Ok(Self {
            order,
            to_nodal,
            to_coeffs,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn check_rows(&self, m: &DMatrix<T>) -> Result<()> {
        if m.nrows() != self.order + 1 {
            return Err(EstimationError::Dimension(format!(
                "expected {} rows for order {}, got {}",
                self.order + 1,
                self.order,
                m.nrows()
            )));
        }
        Ok(())
    }

    /// Values at the Chebyshev points, one column per component.
    pub fn coeffs_to_nodal(&self, coeffs: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_rows(coeffs)?;
        Ok(&self.to_nodal * coeffs)
    }

    pub fn nodal_to_coeffs(&self, nodal: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_rows(nodal)?;
        Ok(&self.to_coeffs * nodal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature used as an independent integral oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            // a few forced levels so integrands vanishing on the coarse samples are resolved
            if depth == 0 || (depth < 46 && delta.abs() <= 15.0 * tol) {
                return left + right + delta / 15.0;
            }
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
        let fa = f(a);
        let fb = f(b);
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
    }

    #[test]
    fn basis_order_two_at_half() {
        let b = eval_basis(2, 0.5).unwrap();
        assert_relative_eq!(b.values[0], 1.0);
        assert_relative_eq!(b.values[1], 0.5);
        assert_relative_eq!(b.values[2], -0.5);
        assert_eq!(b.derivatives[0], 0.0);
        assert_eq!(b.derivatives[1], 1.0);
    }

    #[test]
    fn integral_of_tau_over_full_interval_vanishes() {
        let b = eval_basis(2, 1.0).unwrap();
        assert_eq!(b.integrals[1], 0.0);
        assert_relative_eq!(b.integrals[0], 2.0);
    }

    #[test]
    fn integrals_match_adaptive_quadrature() {
        let b = eval_basis(5, 0.3).unwrap();
        for i in 0..=5 {
            let f = |t: f64| eval_basis(5, t).unwrap().values[i];
            let oracle = adaptive_simpson(&f, -1.0, 0.3, 1e-14);
            assert!(
                (b.integrals[i] - oracle).abs() <= 1e-12,
                "i = {i}: {} vs {oracle}",
                b.integrals[i]
            );
        }
    }

    #[test]
    fn integrals_vanish_exactly_at_left_end() {
        let b = eval_basis(40, -1.0).unwrap();
        assert!(b.integrals.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn out_of_domain_tau_is_rejected_but_rounding_is_clamped() {
        assert!(matches!(eval_basis(3, 1.1), Err(EstimationError::Domain(_))));
        assert!(matches!(eval_basis(3, f64::NAN), Err(EstimationError::Domain(_))));
        let b = eval_basis(3, 1.0 + 1e-13).unwrap();
        assert_eq!(b.values[3], 1.0);
    }

    #[test]
    fn chebyshev_points_small_orders() {
        let p2 = chebyshev_points::<f64>(2).unwrap();
        assert_eq!(p2.as_slice(), &[-1.0, 0.0, 1.0]);
        let p4 = chebyshev_points::<f64>(4).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (a, b) in p4.iter().zip([-1.0, -h, 0.0, h, 1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(chebyshev_points::<f64>(0).is_err());
    }

    #[test]
    fn chebyshev_points_are_symmetric_and_match_cosine() {
        let n = 31;
        let p = chebyshev_points::<f64>(n).unwrap();
        assert_eq!(p[0], -1.0);
        assert_eq!(p[n], 1.0);
        for k in 0..=n {
            assert_eq!(p[k] + p[n - k], 0.0);
            let c = -(k as f64 * std::f64::consts::PI / n as f64).cos();
            assert!((p[k] - c).abs() < 1e-15);
            if k > 0 {
                assert!(p[k] > p[k - 1]);
            }
        }
    }

    #[test]
    fn clenshaw_curtis_order_two() {
        let w = clenshaw_curtis_weights::<f64>(2).unwrap();
        assert_relative_eq!(w[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(w[2], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn clenshaw_curtis_matches_lagrange_integrals() {
        for n in [1usize, 2, 3, 6, 9] {
            let nodes = chebyshev_points::<f64>(n).unwrap();
            let w = clenshaw_curtis_weights::<f64>(n).unwrap();
            for i in 0..=n {
                let ell = |t: f64| {
                    (0..=n)
                        .filter(|&k| k != i)
                        .map(|k| (t - nodes[k]) / (nodes[i] - nodes[k]))
                        .product::<f64>()
                };
                let oracle = adaptive_simpson(&ell, -1.0, 1.0, 1e-14);
                assert!((w[i] - oracle).abs() < 1e-12, "n={n} i={i}: {} vs {oracle}", w[i]);
            }
        }
    }

    #[test]
    fn clenshaw_curtis_integrates_tau_six() {
        let g = CollocationGrid::<f64>::new(8).unwrap();
        let f = g.nodes.map(|t| t.powi(6));
        assert_relative_eq!(g.integrate(&f), 2.0 / 7.0, epsilon = 1e-14);
    }

    #[test]
    fn clenshaw_curtis_exact_for_monomials() {
        for n in [1usize, 2, 5, 8, 17, 64, 301] {
            let g = CollocationGrid::<f64>::new(n).unwrap();
            assert!((g.weights.sum() - 2.0).abs() < 1e-12);
            assert!(g.weights.iter().all(|&w| w > 0.0));
            for j in 0..=n.min(40) {
                let exact = if j % 2 == 1 { 0.0 } else { 2.0 / (j as f64 + 1.0) };
                let got = g.integrate(&g.nodes.map(|t| t.powi(j as i32)));
                assert!(
                    (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                    "n={n} j={j}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn series_of_constant_and_square() {
        let c = DMatrix::from_row_slice(1, 1, &[2.5]);
        let (x, r) = series_eval(&c, 0.37).unwrap();
        assert_eq!(x[0], 2.5);
        assert_eq!(r[0], 0.0);

        let sq = DMatrix::from_row_slice(3, 1, &[0.5, 0.0, 0.5]);
        let (x, r) = series_eval(&sq, 0.6).unwrap();
        assert_relative_eq!(x[0], 0.36, epsilon = 1e-15);
        assert_relative_eq!(r[0], 1.2, epsilon = 1e-15);
    }

    #[test]
    fn transform_reproduces_constant_and_basis_vector() {
        let t = ChebyshevTransform::<f64>::new(5).unwrap();
        let mut one = DMatrix::zeros(6, 1);
        one[0] = 1.0;
        let nodal = t.coeffs_to_nodal(&one).unwrap();
        assert!(nodal.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let nodes = chebyshev_points::<f64>(5).unwrap();
        let f3 = DMatrix::from_fn(6, 1, |k, _| {
            let x = nodes[k];
            4.0 * x * x * x - 3.0 * x
        });
        let c = t.nodal_to_coeffs(&f3).unwrap();
        for i in 0..6 {
            let expect = if i == 3 { 1.0 } else { 0.0 };
            assert!((c[i] - expect).abs() < 1e-14);
        }
        assert!(matches!(
            t.coeffs_to_nodal(&DMatrix::zeros(4, 1)),
            Err(EstimationError::Dimension(_))
        ));
    }

    #[test]
    fn affine_map_endpoints_are_exact() {
        let m = AffineTimeMap::new(0.1f64, 0.7).unwrap();
        assert_eq!(m.forward(0.1), -1.0);
        assert_eq!(m.forward(0.7), 1.0);
        assert_eq!(m.inverse(-1.0), 0.1);
        assert_eq!(m.inverse(1.0), 0.7);
        assert!(AffineTimeMap::new(1.0f64, 1.0).is_err());
        assert!(AffineTimeMap::new(2.0f64, 1.0).is_err());
    }

    #[test]
    fn single_precision_basis() {
        let b = eval_basis(3, 0.5f32).unwrap();
        assert!((b.values[3] - (4.0 * 0.125 - 1.5)).abs() < 1e-6);
        let w = clenshaw_curtis_weights::<f32>(10).unwrap();
        assert!((w.sum() - 2.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn recurrence_matches_closed_form(tau in -1.0f64..=1.0) {
            let b = eval_basis(12, tau).unwrap();
            for i in 0..=12 {
                let closed = (i as f64 * tau.acos()).cos();
                prop_assert!((b.values[i] - closed).abs() <= 1e-10);
                prop_assert!(b.values[i].abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn derivatives_match_finite_differences(tau in -0.99f64..0.99) {
            let h = 1e-6;
            let b = eval_basis(12, tau).unwrap();
            let p = eval_basis(12, tau + h).unwrap();
            let m = eval_basis(12, tau - h).unwrap();
            for i in 0..=12 {
                let fd = (p.values[i] - m.values[i]) / (2.0 * h);
                prop_assert!((b.derivatives[i] - fd).abs() <= 1e-5 * b.derivatives[i].abs().max(1.0));
                let fd_int = (p.integrals[i] - m.integrals[i]) / (2.0 * h);
                prop_assert!((fd_int - b.values[i]).abs() <= 1e-5);
            }
        }

        #[test]
        fn affine_map_round_trip(a in -100.0f64..100.0, len in 1e-3f64..50.0, s in 0.0f64..=1.0) {
            let m = AffineTimeMap::new(a, a + len).unwrap();
            let t = a + s * len;
            let back = m.inverse(m.forward(t));
            prop_assert!((back - t).abs() <= 1e-12 * (a.abs() + len));
        }

        #[test]
        fn series_rate_matches_finite_difference(
            seed in proptest::collection::vec(-1.0f64..1.0, 11),
            tau in -0.99f64..0.99,
        ) {
            let c = DMatrix::from_column_slice(11, 1, &seed);
            let h = 1e-6;
            let (_, rate) = series_eval(&c, tau).unwrap();
            let (xp, _) = series_eval(&c, tau + h).unwrap();
            let (xm, _) = series_eval(&c, tau - h).unwrap();
            let fd = (xp[0] - xm[0]) / (2.0 * h);
            prop_assert!((rate[0] - fd).abs() <= 1e-6 * rate[0].abs().max(1.0));
        }

        #[test]
        fn transform_round_trip(seed in proptest::collection::vec(-1.0f64..1.0, 21)) {
            let t = ChebyshevTransform::<f64>::new(20).unwrap();
            let c = DMatrix::from_column_slice(21, 1, &seed);
            let back = t.nodal_to_coeffs(&t.coeffs_to_nodal(&c).unwrap()).unwrap();
            prop_assert!((back - &c).amax() <= 1e-12 * c.amax().max(1.0));
        }
    }
}
