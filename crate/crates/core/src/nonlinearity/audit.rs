//! Numerical audits of the growth and dissipativity hypotheses on `f`.

use super::Nonlinearity;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::norms::{norm_h1, norm_hminus1, norm_l1, norm_l2, norm_lp};
use crate::operator::DiscreteOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Exponents for which embedding constants `|u|_{L^s} <= C_s |u|_{H_1}` are tracked.
pub const EMBEDDING_EXPONENTS: [f64; 4] = [2.0, 3.0, 4.0, 6.0];

/// Embedding constants for `H_1 -> L^s`, s = 2, 3, 4, 6, plus audit settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthAuditConfig {
    /// Raw estimates (before inflation), in the order of [`EMBEDDING_EXPONENTS`].
    pub estimated: [f64; 4],
    pub safety_factor: f64,
    pub starts: usize,
    pub ascent_iterations: usize,
    pub seed: u64,
    /// Relative slack for floating-point ties (e.g. `u = h = 0`).
    pub tolerance: f64,
}

impl GrowthAuditConfig {
    pub fn estimate(op: &DiscreteOperator, starts: usize, seed: u64) -> Result<Self> {
        let iterations = 60;
        let estimated = estimate_embedding_constants(op, starts, iterations, seed)?;
        Ok(Self {
            estimated,
            safety_factor: 1.05,
            starts,
            ascent_iterations: iterations,
            seed,
            tolerance: 1e-12,
        })
    }

    fn used(&self, k: usize) -> f64 {
        self.estimated[k] * self.safety_factor
    }

    pub fn c2(&self) -> f64 {
        self.used(0)
    }
    pub fn c3(&self) -> f64 {
        self.used(1)
    }
    pub fn c4(&self) -> f64 {
        self.used(2)
    }
    pub fn c6(&self) -> f64 {
        self.used(3)
    }
}

/// Maximizes `|u|_{L^s} / |u|_{H_1}` over seeded random starts, each refined by the
/// ascent map `u <- A_h^{-1}(|u|^{s-2} u)`, which never decreases the ratio.
pub fn estimate_embedding_constants(
    op: &DiscreteOperator,
    starts: usize,
    iterations: usize,
    seed: u64,
) -> Result<[f64; 4]> {
    if starts == 0 {
        return Err(Error::Config("embedding estimate needs at least one start".into()));
    }
    let grid = op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = [0.0f64; 4];
    for _ in 0..starts {
        let start = random_field(grid, &mut rng, 1.0);
        for (k, &s) in EMBEDDING_EXPONENTS.iter().enumerate() {
            let mut u = start.clone();
            let mut ratio = embedding_ratio(&u, op, s)?;
            for _ in 0..iterations {
                let p: Vec<f64> = u.iter().map(|v| v.abs().powf(s - 2.0) * v).collect();
                let mut next = op.solve(&p)?;
                let scale = norm_h1(&next, op)?;
                if !(scale > 0.0) {
                    break;
                }
                next.iter_mut().for_each(|v| *v /= scale);
                let r = embedding_ratio(&next, op, s)?;
                u = next;
                let done = (r - ratio).abs() <= 1e-12 * r;
                ratio = ratio.max(r);
                if done {
                    break;
                }
            }
            best[k] = best[k].max(ratio);
        }
    }
    Ok(best)
}

fn embedding_ratio(u: &[f64], op: &DiscreteOperator, s: f64) -> Result<f64> {
    let h1 = norm_h1(u, op)?;
    if h1 == 0.0 {
        return Ok(0.0);
    }
    Ok(norm_lp(u, op.grid(), s)? / h1)
}

/// Seeded random field: white noise or a random product of box sine modes, with
/// amplitude `scale`.
pub fn random_field(grid: &Grid, rng: &mut impl Rng, scale: f64) -> Vec<f64> {
    if rng.gen_bool(0.5) {
        (0..grid.len())
            .map(|_| scale * rng.gen_range(-1.0..1.0))
            .collect()
    } else {
        let modes = 4;
        let d = grid.dim();
        let mut u = vec![0.0; grid.len()];
        for _ in 0..modes {
            let coef = rng.gen_range(-1.0..1.0) * scale;
            let ks: Vec<f64> = (0..d).map(|_| rng.gen_range(1..=6) as f64).collect();
            for (i, ui) in u.iter_mut().enumerate() {
                let x = grid.coords(i);
                let mut m = coef;
                for a in 0..d {
                    let len = grid.upper()[a] - grid.lower()[a];
                    m *= (ks[a] * std::f64::consts::PI * (x[a] - grid.lower()[a]) / len).sin();
                }
                *ui += m;
            }
        }
        u
    }
}

/// `count` seeded trial pairs `(u, h)` with amplitudes spread over three decades.
pub fn random_trial_pairs(grid: &Grid, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let su = 10f64.powf(rng.gen_range(-2.0..1.0));
            let sh = 10f64.powf(rng.gen_range(-2.0..1.0));
            (random_field(grid, &mut rng, su), random_field(grid, &mut rng, sh))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    /// `min(rhs - lhs)` over all trial pairs.
    pub worst_margin: f64,
    /// `max(lhs / rhs)` over pairs with `rhs > 0`.
    pub worst_ratio: f64,
    pub violations: usize,
    /// Index of the first violating pair.
    pub witness: Option<usize>,
}

impl InequalityReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            worst_margin: f64::INFINITY,
            worst_ratio: 0.0,
            violations: 0,
            witness: None,
        }
    }

    fn record(&mut self, idx: usize, lhs: f64, rhs: f64, tol: f64) {
        self.worst_margin = self.worst_margin.min(rhs - lhs);
        if rhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(lhs / rhs);
        }
        let violated = !lhs.is_finite() || lhs - rhs > tol * (lhs.abs() + rhs.abs());
        if violated {
            self.violations += 1;
            self.witness.get_or_insert(idx);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthAuditReport {
    pub pairs: usize,
    pub nemitski_constant: f64,
    pub hminus1_constant: f64,
    pub embedding_used: [f64; 4],
    pub inequalities: Vec<InequalityReport>,
}

impl GrowthAuditReport {
    pub fn passed(&self) -> bool {
        self.inequalities.iter().all(|i| i.violations == 0)
    }

    /// `Err(Audit)` naming the first violated inequality and its witness pair.
    pub fn check(&self) -> Result<()> {
        match self.inequalities.iter().find(|i| i.violations > 0) {
            None => Ok(()),
            Some(i) => Err(Error::Audit(format!(
                "{} violated {} times (first witness pair #{}, worst margin {:.3e})",
                i.name,
                i.violations,
                i.witness.unwrap_or(0),
                i.worst_margin
            ))),
        }
    }
}

pub const GROWTH_INEQUALITIES: [&str; 6] = [
    "f_l2_growth",
    "f_l2_lipschitz",
    "F_l1_growth",
    "F_l1_lipschitz",
    "F_taylor_remainder",
    "f_hminus1_lipschitz",
];

/// Checks the six Nemitski inequalities on every trial pair with discrete norms.
///
/// `C` is the family's Nemitski constant; the `H_{-1}` bound uses
/// `C(r) = C * max(C_2, C_6)` with the inflated embedding constants.
pub fn growth_audit(
    nl: &Nonlinearity,
    op: &DiscreteOperator,
    cfg: &GrowthAuditConfig,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<GrowthAuditReport> {
    let grid = op.grid();
    let c = nl.nemitski_constant();
    let cr = c * cfg.c2().max(cfg.c6());
    let tol = cfg.tolerance;
    let zero = vec![0.0; grid.len()];
    let f0 = norm_l2(&nl.eval_f(&zero), grid)?;
    let mut reports: Vec<InequalityReport> =
        GROWTH_INEQUALITIES.iter().map(|n| InequalityReport::new(n)).collect();

    for (idx, (u, h)) in pairs.iter().enumerate() {
        let uh: Vec<f64> = u.iter().zip(h).map(|(a, b)| a + b).collect();
        let fu = nl.eval_f(u);
        let fuh = nl.eval_f(&uh);
        let big_fu = nl.eval_F(u);
        let big_fuh = nl.eval_F(&uh);
        let df: Vec<f64> = fuh.iter().zip(&fu).map(|(a, b)| a - b).collect();
        let d_big: Vec<f64> = big_fuh.iter().zip(&big_fu).map(|(a, b)| a - b).collect();
        let taylor: Vec<f64> = d_big
            .iter()
            .zip(fu.iter().zip(h))
            .map(|(d, (f, hv))| d - f * hv)
            .collect();

        let u2 = norm_l2(u, grid)?;
        let h2 = norm_l2(h, grid)?;
        let u4 = norm_lp(u, grid, 4.0)?;
        let u6 = norm_lp(u, grid, 6.0)?;
        let h6 = norm_lp(h, grid, 6.0)?;

        reports[0].record(idx, norm_l2(&fu, grid)?, f0 + c * (u2 + u6.powi(3)), tol);
        reports[1].record(
            idx,
            norm_l2(&df, grid)?,
            c * h2 + c * (u6 * u6 + h6 * h6) * h6,
            tol,
        );
        reports[2].record(
            idx,
            norm_l1(&big_fu, grid)?,
            c * (u2 * u2 / 2.0 + u4.powi(4) / 4.0) + u2 * f0,
            tol,
        );
        reports[3].record(
            idx,
            norm_l1(&d_big, grid)?,
            (f0 + c * (u2 + h2) + 4.0 * c * (u6.powi(3) + h6.powi(3))) * h2,
            tol,
        );
        reports[4].record(
            idx,
            norm_l1(&taylor, grid)?,
            (c * h2 + c * (u6 * u6 + h6 * h6) * h6) * h2,
            tol,
        );
        reports[5].record(
            idx,
            norm_hminus1(&df, op)?,
            cr * h2 + cr * (u6 * u6 + h6 * h6) * h2,
            tol,
        );
    }
    Ok(GrowthAuditReport {
        pairs: pairs.len(),
        nemitski_constant: c,
        hminus1_constant: cr,
        embedding_used: [cfg.c2(), cfg.c3(), cfg.c4(), cfg.c6()],
        inequalities: reports,
    })
}

/// Returns `(|g|_{H_{-1}}, C (C_2 + C_6^3 |u|^2_{H_1}) |v|_{L^2})` for
/// `g = d_u f(u) v`, with `C` the family's `d_u f` constant.
pub fn linearized_forcing_check(
    nl: &Nonlinearity,
    op: &DiscreteOperator,
    cfg: &GrowthAuditConfig,
    u: &[f64],
    v: &[f64],
) -> Result<(f64, f64)> {
    let g = nl.linearized_forcing(u, v);
    let lhs = norm_hminus1(&g, op)?;
    let uh1 = norm_h1(u, op)?;
    let rhs = nl.dfu_constant() * (cfg.c2() + cfg.c6().powi(3) * uh1 * uh1) * norm_l2(v, op.grid())?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub u_max: f64,
    pub samples: usize,
    /// `min(c(x) - (f u - mu_bar F))`.
    pub worst_dissipation_margin: f64,
    /// `min(c(x) - F)`.
    pub worst_antiderivative_margin: f64,
    pub violations: usize,
    /// First offending `(node, u)`.
    pub witness: Option<(usize, f64)>,
}

impl DissipativityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn check(&self) -> Result<()> {
        match self.witness {
            None => Ok(()),
            Some((node, u)) => Err(Error::Audit(format!(
                "dissipativity violated {} times, first at node {node}, u = {u}",
                self.violations
            ))),
        }
    }
}

/// Samples `u` uniformly on `[-u_max, u_max]` (`samples >= 2` points, endpoints
/// and zero included) at every node.
pub fn dissipativity_audit(
    nl: &Nonlinearity,
    u_max: f64,
    samples: usize,
) -> Result<DissipativityReport> {
    if !(u_max > 0.0) || samples < 2 {
        return Err(Error::Config(format!(
            "dissipativity audit needs u_max > 0 and at least 2 samples, got {u_max}, {samples}"
        )));
    }
    let mut us: Vec<f64> = (0..samples)
        .map(|j| -u_max + 2.0 * u_max * j as f64 / (samples - 1) as f64)
        .collect();
    us.push(0.0);
    let mut report = DissipativityReport {
        u_max,
        samples: us.len(),
        worst_dissipation_margin: f64::INFINITY,
        worst_antiderivative_margin: f64::INFINITY,
        violations: 0,
        witness: None,
    };
    for i in 0..nl.len() {
        let c = nl.dissipation_bound()[i];
        for &u in &us {
            let m1 = c - nl.dissipation_at(i, u);
            let m2 = c - nl.antiderivative_at(i, u);
            report.worst_dissipation_margin = report.worst_dissipation_margin.min(m1);
            report.worst_antiderivative_margin = report.worst_antiderivative_margin.min(m2);
            if m1 < 0.0 || m2 < 0.0 || !m1.is_finite() || !m2.is_finite() {
                report.violations += 1;
                report.witness.get_or_insert((i, u));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CoefficientField;
    use crate::operator::build_operator;
    use std::f64::consts::PI;

    fn op(n: usize) -> DiscreteOperator {
        let g = Grid::with_bounds(&[0.0], &[PI], &[n]).unwrap();
        build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn c2_estimate_matches_lambda1() {
        let op = op(64);
        let est = estimate_embedding_constants(&op, 4, 200, 1).unwrap();
        let exact = 1.0 / op.lambda1().unwrap().sqrt();
        assert!((est[0] - exact).abs() < 1e-6 * exact, "{} vs {}", est[0], exact);
        assert!(est.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn embedding_estimate_is_reproducible() {
        let op = op(32);
        let a = estimate_embedding_constants(&op, 3, 30, 9).unwrap();
        let b = estimate_embedding_constants(&op, 3, 30, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_pair_is_tight_but_passes() {
        let op = op(16);
        let cfg = GrowthAuditConfig::estimate(&op, 2, 5).unwrap();
        let g = op.grid().clone();
        let nl = Nonlinearity::cubic(&g, |_| 2.0, |_| 1.0, |x| x[0].sin(), 4.0, |_| 10.0).unwrap();
        let z = vec![0.0; 16];
        let r = growth_audit(&nl, &op, &cfg, &[(z.clone(), z)]).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.inequalities[0].worst_margin, 0.0);
        for i in &r.inequalities[1..] {
            assert_eq!(i.worst_margin, 0.0);
        }
    }

    #[test]
    fn lipschitz_bound_from_pointwise_calculus() {
        // u = 0: |f(h)|_{L2} <= C |h|_{L2} + C |h|^3_{L6} with |2h - h^3| <= C(|h| + |h|^3)
        let op = op(64);
        let g = op.grid().clone();
        let nl = Nonlinearity::chafee_infante(&g, 2.0, 1.0).unwrap();
        let c = nl.nemitski_constant();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let h = random_field(&g, &mut rng, 3.0);
            for (i, hv) in h.iter().enumerate() {
                assert!(nl.f_at(i, *hv).abs() <= c * (hv.abs() + hv.abs().powi(3)));
            }
            let lhs = norm_l2(&nl.eval_f(&h), &g).unwrap();
            let rhs = c * norm_l2(&h, &g).unwrap() + c * norm_lp(&h, &g, 6.0).unwrap().powi(3);
            assert!(lhs <= rhs);
        }
    }

    #[test]
    fn inflated_constants_make_a_violation_visible() {
        let op = op(32);
        let mut cfg = GrowthAuditConfig::estimate(&op, 2, 5).unwrap();
        cfg.estimated = [1e-9; 4];
        cfg.safety_factor = 1.0;
        let nl = Nonlinearity::chafee_infante(op.grid(), 2.0, 1.0).unwrap();
        let pairs = random_trial_pairs(op.grid(), 20, 8);
        let r = growth_audit(&nl, &op, &cfg, &pairs).unwrap();
        assert!(!r.passed());
        assert!(r.inequalities[5].violations > 0);
        assert!(matches!(r.check(), Err(Error::Audit(_))));
    }

    #[test]
    fn dissipativity_cubic_and_zero() {
        let g = Grid::with_bounds(&[0.0], &[PI], &[16]).unwrap();
        let nl = Nonlinearity::chafee_infante(&g, 2.0, 1.0).unwrap();
        let r = dissipativity_audit(&nl, 10.0, 2001).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_dissipation_margin, 1.0);
        // F attains its maximum 1 at u = sqrt(2), which the grid only approximates
        assert!(r.worst_antiderivative_margin >= 0.0 && r.worst_antiderivative_margin < 1e-4);

        let z = Nonlinearity::zero(16);
        let r = dissipativity_audit(&z, 10.0, 11).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_dissipation_margin, 0.0);
    }

    #[test]
    fn dissipativity_violation_names_witness() {
        let g = Grid::with_bounds(&[0.0], &[PI], &[4]).unwrap();
        let nl = Nonlinearity::cubic(&g, |_| 2.0, |_| 1.0, |_| 0.0, 4.0, |_| 0.5).unwrap();
        let r = dissipativity_audit(&nl, 3.0, 61).unwrap();
        assert!(!r.passed());
        let (_, u) = r.witness.unwrap();
        assert!(nl.antiderivative_at(0, u) > 0.5);
    }
}
