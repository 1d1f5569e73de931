//! Polynomial nonlinearities `f(x, u) = c0(x) + c1(x) u + c2(x) u^2 + c3(x) u^3`
//! with their exact antiderivative and u-derivative.
//!
//! The cubic family `lambda(x) u - gamma(x) u^3 + g(x)` is the special case
//! `c0 = g, c1 = lambda, c2 = 0, c3 = -gamma`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

pub mod audit;

pub use audit::{
    dissipativity_audit, estimate_embedding_constants, growth_audit, linearized_forcing_check,
    DissipativityReport, GrowthAuditConfig, GrowthAuditReport, InequalityReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cubic,
    Polynomial,
}

/// Nodewise coefficient tables plus the dissipativity metadata `mu_bar`, `c(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    family: Family,
    coeffs: [Vec<f64>; 4],
    mu_bar: f64,
    dissipation_bound: Vec<f64>,
}

impl Nonlinearity {
    /// Cubic family on `grid`; `gamma` must stay above a positive floor.
    pub fn cubic(
        grid: &Grid,
        lambda: impl Fn(&[f64]) -> f64,
        gamma: impl Fn(&[f64]) -> f64,
        g: impl Fn(&[f64]) -> f64,
        mu_bar: f64,
        c: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let gam = grid.sample(gamma);
        let gamma0 = gam.iter().copied().fold(f64::INFINITY, f64::min);
        if !(gamma0 > 0.0) {
            return Err(Error::Config(format!(
                "cubic family needs gamma(x) >= gamma0 > 0, got min {gamma0}"
            )));
        }
        let mut nl = Self::polynomial(
            [
                grid.sample(g),
                grid.sample(lambda),
                vec![0.0; grid.len()],
                gam.iter().map(|v| -v).collect(),
            ],
            mu_bar,
            grid.sample(c),
        )?;
        nl.family = Family::Cubic;
        Ok(nl)
    }

    /// Constant-coefficient cubic `lambda u - gamma u^3` with `mu_bar = 4`
    /// and `c = lambda^2 / (4 gamma)`, the maximum of `F`.
    pub fn chafee_infante(grid: &Grid, lambda: f64, gamma: f64) -> Result<Self> {
        let c = if lambda > 0.0 {
            lambda * lambda / (4.0 * gamma)
        } else {
            0.0
        };
        Self::cubic(grid, |_| lambda, |_| gamma, |_| 0.0, 4.0, |_| c)
    }

    pub fn polynomial(coeffs: [Vec<f64>; 4], mu_bar: f64, c: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if coeffs.iter().any(|v| v.len() != n) {
            return Err(Error::Config(
                "nonlinearity coefficient tables must all have the grid length".into(),
            ));
        }
        if !(mu_bar > 0.0) {
            return Err(Error::Config(format!("mu_bar must be positive, got {mu_bar}")));
        }
        if coeffs.iter().flatten().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite nonlinearity coefficient".into()));
        }
        Ok(Self {
            family: Family::Polynomial,
            coeffs,
            mu_bar,
            dissipation_bound: c,
        })
    }

    /// `f == 0`, with `c == 0`.
    pub fn zero(n: usize) -> Self {
        Self {
            family: Family::Polynomial,
            coeffs: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            mu_bar: 1.0,
            dissipation_bound: vec![0.0; n],
        }
    }

    /// `f(x, u) = lambda(x) u`.
    pub fn linear(lambda: Vec<f64>) -> Self {
        let n = lambda.len();
        Self {
            family: Family::Polynomial,
            coeffs: [vec![0.0; n], lambda, vec![0.0; n], vec![0.0; n]],
            mu_bar: 2.0,
            dissipation_bound: vec![0.0; n],
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> usize {
        self.dissipation_bound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dissipation_bound.is_empty()
    }

    pub fn coeffs(&self) -> &[Vec<f64>; 4] {
        &self.coeffs
    }

    pub fn mu_bar(&self) -> f64 {
        self.mu_bar
    }

    pub fn dissipation_bound(&self) -> &[f64] {
        &self.dissipation_bound
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(|&c| c == 0.0)
    }

    #[inline]
    pub fn f_at(&self, i: usize, u: f64) -> f64 {
        let [c0, c1, c2, c3] = &self.coeffs;
        c0[i] + u * (c1[i] + u * (c2[i] + u * c3[i]))
    }

    #[inline]
    pub fn antiderivative_at(&self, i: usize, u: f64) -> f64 {
        let [c0, c1, c2, c3] = &self.coeffs;
        u * (c0[i] + u * (c1[i] / 2.0 + u * (c2[i] / 3.0 + u * c3[i] / 4.0)))
    }

    #[inline]
    pub fn dfu_at(&self, i: usize, u: f64) -> f64 {
        let [_, c1, c2, c3] = &self.coeffs;
        c1[i] + u * (2.0 * c2[i] + 3.0 * u * c3[i])
    }

    #[inline]
    pub fn duu_at(&self, i: usize, u: f64) -> f64 {
        let [_, _, c2, c3] = &self.coeffs;
        2.0 * c2[i] + 6.0 * u * c3[i]
    }

    /// `f u - mu_bar F` evaluated coefficientwise, so that cancelling powers cancel exactly.
    #[inline]
    pub fn dissipation_at(&self, i: usize, u: f64) -> f64 {
        let m = self.mu_bar;
        let w: [f64; 4] = std::array::from_fn(|k| self.coeffs[k][i] * (1.0 - m / (k as f64 + 1.0)));
        u * (w[0] + u * (w[1] + u * (w[2] + u * w[3])))
    }

    pub fn eval_f(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len(), "field length mismatch");
        u.iter().enumerate().map(|(i, &v)| self.f_at(i, v)).collect()
    }

    pub fn eval_f_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.len(), "field length mismatch");
        for (i, (o, &v)) in out.iter_mut().zip(u).enumerate() {
            *o = self.f_at(i, v);
        }
    }

    #[allow(non_snake_case)]
    pub fn eval_F(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len(), "field length mismatch");
        u.iter()
            .enumerate()
            .map(|(i, &v)| self.antiderivative_at(i, v))
            .collect()
    }

    pub fn eval_dfu(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len(), "field length mismatch");
        u.iter().enumerate().map(|(i, &v)| self.dfu_at(i, v)).collect()
    }

    /// `g = d_u f(x, u) v`, the forcing of the linearized equation for `v = u_t`.
    pub fn linearized_forcing(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len(), "field length mismatch");
        assert_eq!(v.len(), self.len(), "field length mismatch");
        u.iter()
            .zip(v)
            .enumerate()
            .map(|(i, (&a, &b))| self.dfu_at(i, a) * b)
            .collect()
    }

    fn sup(&self, k: usize) -> f64 {
        self.coeffs[k].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Constant in `|d_u f| <= C (1 + u^2)`; `max(|lambda|, 3|gamma|)` for the cubic family.
    pub fn dfu_constant(&self) -> f64 {
        let (a, b2, b3) = (self.sup(1), self.sup(2), self.sup(3));
        (a + b2).max(b2 + 3.0 * b3)
    }

    /// `C_bar` in `|d_uu f| <= C_bar (1 + |u|)`.
    pub fn c_bar(&self) -> f64 {
        (2.0 * self.sup(2)).max(6.0 * self.sup(3))
    }

    /// One constant valid for all three pointwise growth bounds on `d_u f` and the Taylor remainder.
    pub fn lemma_constant(&self) -> f64 {
        self.dfu_constant().max(self.c_bar())
    }

    /// Constant for the L^p Nemitski estimates; `max(|lambda|, 4.5|gamma|)` for the cubic family.
    pub fn nemitski_constant(&self) -> f64 {
        let (a, b2, b3) = (self.sup(1), self.sup(2), self.sup(3));
        (a + 2.0 * b2).max(b2 + 4.5 * b3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid {
        Grid::with_bounds(&[0.0], &[std::f64::consts::PI], &[n]).unwrap()
    }

    #[test]
    fn cubic_values() {
        let g = grid(5);
        let nl = Nonlinearity::chafee_infante(&g, 2.0, 1.0).unwrap();
        assert!(nl.eval_f(&[0.0; 5]).iter().all(|&v| v == 0.0));
        assert!(nl.eval_f(&[1.0; 5]).iter().all(|&v| v == 1.0));
        let r = 2f64.sqrt();
        assert!(nl.eval_f(&[r; 5]).iter().all(|v| v.abs() < 1e-15));
        assert!(nl.eval_F(&[0.0; 5]).iter().all(|&v| v == 0.0));
        assert!(nl.eval_F(&[1.0; 5]).iter().all(|&v| v == 0.75));
    }

    #[test]
    fn dfu_bound_with_family_constant() {
        let g = grid(32);
        let nl = Nonlinearity::cubic(
            &g,
            |x| 2.0 + x[0].sin(),
            |x| 1.0 + 0.5 * x[0].cos().abs(),
            |_| 0.0,
            4.0,
            |_| 10.0,
        )
        .unwrap();
        let c = nl.dfu_constant();
        assert!((c - 3.0f64.max(3.0 * 1.5)).abs() < 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u: Vec<f64> = (0..32).map(|_| rng.gen_range(-20.0..20.0)).collect();
            for (i, d) in nl.eval_dfu(&u).iter().enumerate() {
                assert!(d.abs() <= c * (1.0 + u[i] * u[i]));
            }
        }
    }

    #[test]
    fn linear_family_derivative() {
        let nl = Nonlinearity::linear(vec![1.5, -2.0, 0.25]);
        assert_eq!(nl.eval_dfu(&[9.0, -3.0, 0.1]), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn lemma_bounds_hold() {
        let g = grid(8);
        let nl = Nonlinearity::polynomial(
            [vec![0.3; 8], vec![-1.0; 8], vec![0.7; 8], vec![-2.0; 8]],
            4.0,
            vec![5.0; 8],
        )
        .unwrap();
        let c = nl.lemma_constant();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5000 {
            let i = rng.gen_range(0..g.len());
            let u: f64 = rng.gen_range(-10.0..10.0);
            let v: f64 = rng.gen_range(-10.0..10.0);
            let d = v - u;
            assert!(nl.dfu_at(i, u).abs() <= c * (1.0 + u * u));
            assert!(
                (nl.dfu_at(i, v) - nl.dfu_at(i, u)).abs()
                    <= c * (1.0 + u.abs() + d.abs()) * d.abs() * (1.0 + 1e-12)
            );
            let rem = nl.f_at(i, v) - nl.f_at(i, u) - nl.dfu_at(i, u) * d;
            assert!(rem.abs() <= c * (1.0 + u.abs() + d.abs()) * d * d * (1.0 + 1e-12) + 1e-12);
            assert!(nl.duu_at(i, u).abs() <= nl.c_bar() * (1.0 + u.abs()));
        }
    }

    #[test]
    fn cubic_requires_positive_gamma() {
        let g = grid(4);
        assert!(Nonlinearity::cubic(&g, |_| 1.0, |_| 0.0, |_| 0.0, 4.0, |_| 1.0).is_err());
        assert!(Nonlinearity::chafee_infante(&g, 1.0, -1.0).is_err());
    }

    #[test]
    fn dissipation_combination_is_exact() {
        let g = grid(3);
        let nl = Nonlinearity::chafee_infante(&g, 2.0, 1.0).unwrap();
        for u in [-10.0, -1.3, 0.0, 0.5, 7.0] {
            assert_eq!(nl.dissipation_at(1, u), -2.0 * u * u);
        }
    }
}
