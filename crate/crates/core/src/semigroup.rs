//! Diagonal sectorial generators and their semigroups.
//!
//! A generator `A` is given by its eigenvalues `-a_n` with `0 < a_1 < a_2 < ...` in
//! an orthonormal basis `{w_n}`. All operators of interest act as multipliers on
//! the coefficients:
//!
//! | operator | multiplier |
//! |---|---|
//! | `S'(t)` | `e^{-a t}` |
//! | `R(λ, A)` | `1/(λ + a)` |
//! | `B_λ = λ R(λ, A)` | `λ/(λ + a)` |
//! | `(-A)^α` | `a^α` |
//! | `S(t) = ∫₀ᵗ S'` | `(1 - e^{-a t})/a` |

use std::f64::consts::PI;

use thiserror::Error;

use crate::phase_space::euclid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemigroupError {
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("lambda {0} is not in the resolvent set used here (need lambda > -a_1)")]
    LambdaOutOfResolventSet(f64),
    #[error("vector is not in the domain of the fractional power: {0}")]
    DomainViolation(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("analytic bound does not saturate on the sampled grid (last value {0})")]
    UnboundedConstant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `w_n(x) = √(2/π) sin(n x)` on `[0, π]`, `a_n = n²`.
    SineDirichlet,
    /// Abstract orthonormal basis of `R^N`.
    Scalar,
}

/// A diagonal generator with strictly increasing positive rates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGenerator {
    rates: Vec<f64>,
    kind: BasisKind,
}

/// Coefficients of a state in the generator's eigenbasis.
pub type SpectralVector = Vec<f64>;

impl DiagonalGenerator {
    /// The Dirichlet Laplacian `∂²/∂x²` on `[0, π]` truncated to `modes` modes.
    pub fn sine_dirichlet(modes: usize) -> Result<Self, SemigroupError> {
        if modes == 0 {
            return Err(SemigroupError::InvalidGenerator(
                "need at least one mode".into(),
            ));
        }
        Ok(DiagonalGenerator {
            rates: (1..=modes).map(|n| (n * n) as f64).collect(),
            kind: BasisKind::SineDirichlet,
        })
    }

    /// A generator with the given decay rates `a_n`.
    pub fn scalar(rates: Vec<f64>) -> Result<Self, SemigroupError> {
        if rates.is_empty() {
            return Err(SemigroupError::InvalidGenerator("no rates".into()));
        }
        if !(rates[0].is_finite() && rates[0] > 0.0) {
            return Err(SemigroupError::InvalidGenerator(format!(
                "first rate {} must be positive",
                rates[0]
            )));
        }
        if rates.windows(2).any(|w| !(w[1] > w[0] && w[1].is_finite())) {
            return Err(SemigroupError::InvalidGenerator(
                "rates must be finite and strictly increasing".into(),
            ));
        }
        Ok(DiagonalGenerator {
            rates,
            kind: BasisKind::Scalar,
        })
    }

    pub fn modes(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// `a_1`, the exponential decay rate of `S'(t)`.
    pub fn first_rate(&self) -> f64 {
        self.rates[0]
    }

    fn check(&self, v: &[f64]) -> Result<(), SemigroupError> {
        if v.len() != self.rates.len() {
            return Err(SemigroupError::DimensionMismatch {
                expected: self.rates.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    fn map(&self, v: &[f64], m: impl Fn(f64) -> f64) -> Result<SpectralVector, SemigroupError> {
        self.check(v)?;
        Ok(v.iter().zip(&self.rates).map(|(c, &a)| c * m(a)).collect())
    }

    /// `S'(t) v`.
    pub fn apply_semigroup(&self, v: &[f64], t: f64) -> Result<SpectralVector, SemigroupError> {
        if t < 0.0 {
            return Err(SemigroupError::NegativeTime(t));
        }
        self.map(v, |a| (-a * t).exp())
    }

    /// `S(t) v = ∫₀ᵗ S'(s) v ds`.
    pub fn integrated_semigroup(
        &self,
        v: &[f64],
        t: f64,
    ) -> Result<SpectralVector, SemigroupError> {
        if t < 0.0 {
            return Err(SemigroupError::NegativeTime(t));
        }
        self.map(v, |a| -(-a * t).exp_m1() / a)
    }

    /// `R(λ, A) v = (λ - A)^{-1} v`.
    pub fn resolvent(&self, v: &[f64], lambda: f64) -> Result<SpectralVector, SemigroupError> {
        self.check_lambda(lambda)?;
        self.map(v, |a| 1.0 / (lambda + a))
    }

    /// `B_λ v = λ R(λ, A) v`.
    pub fn b_lambda(&self, v: &[f64], lambda: f64) -> Result<SpectralVector, SemigroupError> {
        self.check_lambda(lambda)?;
        self.map(v, |a| lambda / (lambda + a))
    }

    /// Multipliers of `B_λ`.
    pub fn b_lambda_multipliers(&self, lambda: f64) -> Result<Vec<f64>, SemigroupError> {
        self.check_lambda(lambda)?;
        Ok(self.rates.iter().map(|a| lambda / (lambda + a)).collect())
    }

    fn check_lambda(&self, lambda: f64) -> Result<(), SemigroupError> {
        if !(lambda.is_finite() && lambda > -self.rates[0]) {
            return Err(SemigroupError::LambdaOutOfResolventSet(lambda));
        }
        Ok(())
    }

    /// `(-A)^α v`, `α ∈ [0, 1]`.
    ///
    /// For the sine basis the result must stay square-summable, which is checked by
    /// requiring the top quarter of the weighted coefficients to carry a negligible
    /// share of the norm.
    pub fn fractional_power(
        &self,
        v: &[f64],
        alpha: f64,
    ) -> Result<SpectralVector, SemigroupError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SemigroupError::InvalidParameter(format!(
                "fractional exponent {alpha} outside [0, 1]"
            )));
        }
        let out = self.map(v, |a| a.powf(alpha))?;
        if out.iter().any(|x| !x.is_finite()) {
            return Err(SemigroupError::DomainViolation(
                "non-finite coefficient".into(),
            ));
        }
        Ok(out)
    }

    /// `‖S'(t)‖ = e^{-a_1 t}`.
    pub fn semigroup_norm(&self, t: f64) -> f64 {
        (-self.rates[0] * t).exp()
    }

    /// `w_n(x)` for the sine basis (`n ≥ 1`).
    pub fn basis_fn(n: usize, x: f64) -> f64 {
        (2.0 / PI).sqrt() * (n as f64 * x).sin()
    }

    /// `max_t t^{1-α} e^{λ t} ‖(-A)^{1-α} S'(t)‖` over `t_grid`, refined near the
    /// sampled maximum.
    ///
    /// Extends the grid towards zero and checks that the maximum saturates; a
    /// maximum that keeps growing is reported as `UnboundedConstant`.
    pub fn analytic_bound(
        &self,
        alpha: f64,
        lambda_decay: f64,
        t_grid: &[f64],
    ) -> Result<f64, SemigroupError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SemigroupError::InvalidParameter(format!(
                "alpha {alpha} outside (0, 1)"
            )));
        }
        if !(lambda_decay >= 0.0 && lambda_decay < self.rates[0]) {
            return Err(SemigroupError::InvalidParameter(format!(
                "decay {lambda_decay} must lie in [0, a_1)"
            )));
        }
        if t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.is_empty() {
            return Err(SemigroupError::InvalidParameter(
                "time grid must be positive and non-empty".into(),
            ));
        }
        let beta = 1.0 - alpha;
        let value = |t: f64| -> f64 {
            let sup = self
                .rates
                .iter()
                .map(|&a| a.powf(beta) * (-a * t).exp())
                .fold(0.0, f64::max);
            t.powf(beta) * (lambda_decay * t).exp() * sup
        };
        let grid_max = |ts: &[f64]| ts.iter().map(|&t| value(t)).fold(0.0, f64::max);
        let mut best = grid_max(t_grid);
        let t0 = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
        // extend towards zero in decades; the maximum must stop growing
        let mut growth = 0;
        for k in 1..=3 {
            let lo = t0 * 10f64.powi(-k);
            let ext: Vec<f64> = (0..50)
                .map(|i| lo * (10f64).powf(i as f64 / 50.0))
                .collect();
            let m = grid_max(&ext);
            if m > best * (1.0 + 1e-3) {
                growth += 1;
            }
            best = best.max(m);
        }
        if growth == 3 {
            return Err(SemigroupError::UnboundedConstant(best));
        }
        // local refinement around each mode's peak t = β / (a - λ)
        for &a in &self.rates {
            let tp = beta / (a - lambda_decay);
            if tp >= t0 * 1e-3 {
                best = best.max(value(tp));
            }
        }
        Ok(best)
    }

    /// `sup (λ - δ)^k ‖R(λ, A)^k‖` over the sampled `λ > 0` and `k ≤ max_power`
    /// (`δ = 0` for these generators).
    pub fn hille_yosida_sup(&self, lambdas: &[f64], max_power: u32) -> f64 {
        let a1 = self.rates[0];
        let mut sup = 0.0f64;
        for &l in lambdas.iter().filter(|l| **l > 0.0) {
            for k in 1..=max_power {
                sup = sup.max((l / (l + a1)).powi(k as i32));
            }
        }
        sup
    }

    /// Constants of the semigroup on `[0, horizon]`.
    pub fn bounds(
        &self,
        alpha: f64,
        lambda_decay: f64,
        horizon: f64,
    ) -> Result<SemigroupBounds, SemigroupError> {
        let grid: Vec<f64> = (0..=2000)
            .map(|i| 1e-6 * (horizon / 1e-6).powf(i as f64 / 2000.0))
            .collect();
        let c = self.analytic_bound(alpha, lambda_decay, &grid)?;
        let lambdas: Vec<f64> = (0..=40)
            .map(|i| 10f64.powf(-2.0 + 0.2 * i as f64))
            .collect();
        let hy = self.hille_yosida_sup(&lambdas, 5);
        Ok(SemigroupBounds {
            m: 1.0,
            m_bar: hy.max(1.0),
            delta: 0.0,
            kappa: self.rates[0],
            c_frac: c,
            alpha,
            lambda_decay,
        })
    }

    /// Coefficients of `u` sampled on `x_j = jπ/(len-1)` (sine basis only).
    ///
    /// Uses the trapezoid rule, which is exactly orthonormal on the grid for
    /// `n < len - 1`. Returns the coefficients and the larger boundary magnitude
    /// when it exceeds `1e-8`.
    pub fn project(
        &self,
        samples: &[f64],
    ) -> Result<(SpectralVector, Option<f64>), SemigroupError> {
        if self.kind != BasisKind::SineDirichlet {
            return Err(SemigroupError::InvalidParameter(
                "projection needs the sine basis".into(),
            ));
        }
        let len = samples.len();
        if len < 3 || self.modes() >= len - 1 {
            return Err(SemigroupError::DimensionMismatch {
                expected: self.modes() + 2,
                got: len,
            });
        }
        let dx = PI / (len - 1) as f64;
        let coeffs = (1..=self.modes())
            .map(|n| {
                samples[1..len - 1]
                    .iter()
                    .enumerate()
                    .map(|(j, u)| u * Self::basis_fn(n, (j + 1) as f64 * dx))
                    .sum::<f64>()
                    * dx
            })
            .collect();
        let boundary = samples[0].abs().max(samples[len - 1].abs());
        Ok((coeffs, (boundary > 1e-8).then_some(boundary)))
    }

    /// Evaluates `Σ c_n w_n(x)` (sine basis).
    pub fn synthesize(&self, c: &[f64], x: f64) -> f64 {
        c.iter()
            .enumerate()
            .map(|(k, c)| c * Self::basis_fn(k + 1, x))
            .sum()
    }

    /// Norm of a coefficient vector (the `L²(0, π)` norm for the sine basis).
    pub fn norm(v: &[f64]) -> f64 {
        euclid(v)
    }
}

/// Constants of an analytic semigroup on a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemigroupBounds {
    /// `sup_{t∈[0,b]} ‖S'(t)‖`.
    pub m: f64,
    /// Hille-Yosida constant.
    pub m_bar: f64,
    /// Hille-Yosida shift.
    pub delta: f64,
    /// Exponential decay rate of `S'(t)`.
    pub kappa: f64,
    /// `C_{1-α}`.
    pub c_frac: f64,
    pub alpha: f64,
    pub lambda_decay: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn operators_on_first_mode() {
        let g = DiagonalGenerator::sine_dirichlet(4).unwrap();
        let v = vec![1.0, 0.0, 2.0, 0.0];
        let s = g.apply_semigroup(&v, 0.5).unwrap();
        assert_relative_eq!(s[0], (-0.5f64).exp());
        assert_relative_eq!(s[2], 2.0 * (-4.5f64).exp());
        let r = g.resolvent(&v, 3.0).unwrap();
        assert_relative_eq!(r[2], 2.0 / 12.0);
        let f = g.fractional_power(&v, 0.5).unwrap();
        assert_relative_eq!(f[2], 6.0);
        assert!(g.apply_semigroup(&v, -1.0).is_err());
        assert!(g.resolvent(&v, -2.0).is_err());
        assert!(g.resolvent(&[1.0], 1.0).is_err());
    }

    #[test]
    fn analytic_constant_for_half_power() {
        // t^{1/2} a^{1/2} e^{-a t} peaks at a t = 1/2 with value (2e)^{-1/2}
        let expected = (2.0 * std::f64::consts::E).powf(-0.5);
        let g = DiagonalGenerator::scalar(vec![1.0]).unwrap();
        let b = g.bounds(0.5, 0.0, 1.0).unwrap();
        assert_relative_eq!(b.c_frac, expected, max_relative = 1e-10);
        let g = DiagonalGenerator::sine_dirichlet(64).unwrap();
        let b = g.bounds(0.5, 0.0, 1.0).unwrap();
        assert_relative_eq!(b.c_frac, expected, max_relative = 1e-10);
        assert_eq!(b.m, 1.0);
        assert_eq!(b.m_bar, 1.0);
        assert_eq!(b.kappa, 1.0);
    }

    #[test]
    fn projection_round_trip() {
        let g = DiagonalGenerator::sine_dirichlet(8).unwrap();
        let xs: Vec<f64> = (0..=256).map(|j| j as f64 * PI / 256.0).collect();
        let u: Vec<f64> = xs
            .iter()
            .map(|&x| 3.0 * x.sin() - 0.5 * (5.0 * x).sin())
            .collect();
        let (c, warn) = g.project(&u).unwrap();
        assert!(warn.is_none());
        let k = (PI / 2.0).sqrt();
        assert_relative_eq!(c[0], 3.0 * k, max_relative = 1e-12);
        assert_relative_eq!(c[4], -0.5 * k, max_relative = 1e-12);
        assert!(c[1].abs() < 1e-13);
        assert_relative_eq!(
            g.synthesize(&c, 1.0),
            3.0 * 1f64.sin() - 0.5 * 5f64.sin(),
            max_relative = 1e-12
        );
        let shifted: Vec<f64> = u.iter().map(|v| v + 1.0).collect();
        assert!(g.project(&shifted).unwrap().1.is_some());
    }

    #[test]
    fn hille_yosida_constant_is_one() {
        let g = DiagonalGenerator::sine_dirichlet(16).unwrap();
        let hy = g.hille_yosida_sup(&[0.1, 1.0, 1e3, 1e6], 5);
        assert!(hy <= 1.0);
    }

    proptest! {
        #[test]
        fn semigroup_law(s in 0.0f64..2.0, t in 0.0f64..2.0, v in prop::collection::vec(-3.0f64..3.0, 6)) {
            let g = DiagonalGenerator::sine_dirichlet(6).unwrap();
            let lhs = g.apply_semigroup(&v, s + t).unwrap();
            let rhs = g.apply_semigroup(&g.apply_semigroup(&v, t).unwrap(), s).unwrap();
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn resolvent_inverts_shifted_generator(lambda in 0.01f64..1e4, v in prop::collection::vec(-3.0f64..3.0, 6)) {
            let g = DiagonalGenerator::sine_dirichlet(6).unwrap();
            let r = g.resolvent(&v, lambda).unwrap();
            // (λ - A) R v = (λ + a) R v
            for ((rv, a), x) in r.iter().zip(g.rates()).zip(&v) {
                prop_assert!(((lambda + a) * rv - x).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn b_lambda_approaches_identity(v in prop::collection::vec(-3.0f64..3.0, 4)) {
            let g = DiagonalGenerator::sine_dirichlet(4).unwrap();
            let mut prev = f64::INFINITY;
            for lambda in [10.0, 100.0, 1e3, 1e4, 1e5] {
                let b = g.b_lambda(&v, lambda).unwrap();
                let d: f64 = b.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                prop_assert!(d <= prev + 1e-15);
                prev = d;
            }
        }

        #[test]
        fn resolvent_powers_obey_hille_yosida(lambda in 1e-3f64..1e3, n in 1u32..=5, v in prop::collection::vec(-3.0f64..3.0, 5)) {
            let g = DiagonalGenerator::sine_dirichlet(5).unwrap();
            let mut r = v.clone();
            for _ in 0..n {
                r = g.resolvent(&r, lambda).unwrap();
            }
            let bound = DiagonalGenerator::norm(&v) / lambda.powi(n as i32);
            prop_assert!(DiagonalGenerator::norm(&r) <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn semigroup_decays_at_first_rate(t in 0.0f64..3.0, v in prop::collection::vec(-3.0f64..3.0, 5)) {
            let g = DiagonalGenerator::sine_dirichlet(5).unwrap();
            let out = g.apply_semigroup(&v, t).unwrap();
            let bound = g.semigroup_norm(t) * DiagonalGenerator::norm(&v);
            prop_assert!(DiagonalGenerator::norm(&out) <= bound * (1.0 + 1e-12) + 1e-300);
            prop_assert!((g.semigroup_norm(t) - (-g.first_rate() * t).exp()).abs() == 0.0);
        }

        #[test]
        fn fractional_power_commutes_with_semigroup(t in 0.0f64..2.0, alpha in 0.0f64..=1.0, v in prop::collection::vec(-3.0f64..3.0, 5)) {
            let g = DiagonalGenerator::sine_dirichlet(5).unwrap();
            let a = g.fractional_power(&g.apply_semigroup(&v, t).unwrap(), alpha).unwrap();
            let b = g.apply_semigroup(&g.fractional_power(&v, alpha).unwrap(), t).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn integrated_semigroup_matches_quadrature(t in 0.0f64..2.0, v in prop::collection::vec(-3.0f64..3.0, 3)) {
            let g = DiagonalGenerator::scalar(vec![0.5, 2.0, 7.0]).unwrap();
            let s = g.integrated_semigroup(&v, t).unwrap();
            for ((sv, &a), x) in s.iter().zip(g.rates()).zip(&v) {
                let q = crate::quadrature::romberg(&|u: f64| (-a * u).exp(), 0.0, t, 1e-13, 1e-15, 30).unwrap() * x;
                prop_assert!((sv - q).abs() <= 1e-10 * (1.0 + q.abs()));
            }
        }
    }
}
