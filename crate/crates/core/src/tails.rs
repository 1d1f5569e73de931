//! Cutoff-localized energies outside balls of radius `k` and the fit of their
//! time profiles to `c_k + M e^{-rho t}`.

use crate::cutoff::{cutoff_field, CutoffField};
use crate::dynamics::{HyperbolicState, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::norms::{gradient_form, inner_h1, inner_l2};
use crate::operator::DiscreteOperator;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Decomposition of [`tail_energy`] for one state and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailParts {
    /// `<A grad(theta_k u), grad(theta_k u)>`, including the cutoff's own gradient.
    pub gradient: f64,
    /// `<beta theta_k u, theta_k u>`.
    pub potential: f64,
    /// `eps |theta_k v|^2`.
    pub kinetic: f64,
}

impl TailParts {
    pub fn total(&self) -> f64 {
        self.gradient + self.potential + self.kinetic
    }

    /// The parts that are pointwise monotone in `k`.
    pub fn l2_parts(&self) -> f64 {
        self.potential + self.kinetic
    }
}

fn checked_cutoff(op: &DiscreteOperator, k: u32) -> Result<CutoffField> {
    let r = op.grid().inscribed_radius();
    let reach = std::f64::consts::SQRT_2 * k as f64;
    if reach > r {
        return Err(Error::Config(format!(
            "cutoff radius k = {k} needs sqrt(2) k = {reach:.3} inside the box (inscribed radius {r:.3})"
        )));
    }
    cutoff_field(op.grid(), k)
}

fn parts_with(cut: &CutoffField, u: &[f64], v: &[f64], eps: f64, op: &DiscreteOperator) -> Result<TailParts> {
    let tu = cut.localize(u);
    let tv = cut.localize(v);
    let full = inner_h1(&tu, &tu, op)?;
    let gradient = gradient_form(&tu, op)?;
    Ok(TailParts {
        gradient,
        potential: full - gradient,
        kinetic: eps * inner_l2(&tv, &tv, op.grid())?,
    })
}

pub fn tail_energy_parts(s: &HyperbolicState, k: u32, op: &DiscreteOperator) -> Result<TailParts> {
    check_len(op.len(), s.u.len())?;
    check_len(op.len(), s.v.len())?;
    let cut = checked_cutoff(op, k)?;
    parts_with(&cut, &s.u, &s.v, s.eps, op)
}

/// `|theta_k u|^2_{H_1} + eps |theta_k v|^2`.
pub fn tail_energy(s: &HyperbolicState, k: u32, op: &DiscreteOperator) -> Result<f64> {
    tail_energy_parts(s, k, op).map(|p| p.total())
}

/// Tail energies over snapshots (rows) and radii (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub times: Vec<f64>,
    pub ks: Vec<u32>,
    pub values: Vec<Vec<f64>>,
}

impl TailProfile {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }
}

pub fn tail_profile(traj: &Trajectory, ks: &[u32], op: &DiscreteOperator) -> Result<TailProfile> {
    if !traj.is_hyperbolic() {
        return Err(Error::Config("tail profile needs a hyperbolic trajectory".into()));
    }
    if traj.grid_hash != op.grid().hash() {
        return Err(Error::GridMismatch(traj.grid_hash, op.grid().hash()));
    }
    let eps = traj.flow.eps();
    let cuts = ks
        .iter()
        .map(|&k| checked_cutoff(op, k))
        .collect::<Result<Vec<_>>>()?;
    let values = (0..traj.len())
        .into_par_iter()
        .map(|i| {
            cuts.iter()
                .map(|c| parts_with(c, &traj.u[i], &traj.v[i], eps, op).map(|p| p.total()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TailProfile {
        times: traj.times.clone(),
        ks: ks.to_vec(),
        values,
    })
}

/// Fraction of the time span dropped before fitting.
pub const TRANSIENT_FRACTION: f64 = 0.1;
/// Maximum number of log-spaced samples per column.
pub const FIT_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub ks: Vec<u32>,
    /// Plateau `c_k` per column.
    pub c: Vec<f64>,
    /// Amplitude `M_k` per column, referred to the profile's time origin.
    pub m: Vec<f64>,
    /// `max_k M_k`.
    pub m_prime: f64,
    /// Shared decay rate; `None` when every column is degenerate.
    pub rho: Option<f64>,
    /// Root-mean-square fit residual per column.
    pub residuals: Vec<f64>,
    /// All-zero columns, fitted as `c = M = 0`.
    pub degenerate: Vec<bool>,
    pub fit_times: Vec<f64>,
}

impl TailFit {
    pub fn model(&self, j: usize, t: f64) -> f64 {
        self.c[j] + self.m[j] * (-self.rho.unwrap_or(0.0) * t).exp()
    }

    /// Samples with `t` past the discarded transient lying above `fit + 3 residual`.
    pub fn envelope_violations(&self, profile: &TailProfile) -> usize {
        let t0 = self.fit_times.first().copied().unwrap_or(f64::INFINITY);
        let mut count = 0;
        for (i, &t) in profile.times.iter().enumerate() {
            if t < t0 {
                continue;
            }
            for j in 0..self.c.len() {
                let bound = self.model(j, t) + 3.0 * self.residuals[j];
                if profile.values[i][j] > bound * (1.0 + 1e-12) {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Indices of up to `FIT_SAMPLES` snapshots at log-spaced times in
/// `[t_s, t_end]`, `t_s` being the end of the discarded transient.
fn fit_indices(times: &[f64]) -> Vec<usize> {
    let (t_first, t_end) = (times[0], times[times.len() - 1]);
    let span = t_end - t_first;
    let t_s = t_first + TRANSIENT_FRACTION * span;
    let start = times.partition_point(|&t| t < t_s);
    let avail = times.len() - start;
    if avail <= FIT_SAMPLES {
        return (start..times.len()).collect();
    }
    // log spacing of the offset from the profile's origin
    let (a, b) = (t_s - t_first, span);
    let mut idx: Vec<usize> = (0..FIT_SAMPLES)
        .map(|j| {
            let target = t_first + a * (b / a).powf(j as f64 / (FIT_SAMPLES - 1) as f64);
            let p = times.partition_point(|&t| t < target).min(times.len() - 1);
            if p > start && (times[p] - target).abs() > (times[p - 1] - target).abs() {
                p - 1
            } else {
                p
            }
        })
        .collect();
    idx.dedup();
    idx
}

/// Nonnegative two-parameter least squares of `y ~ c + M e` with `c, M >= 0`;
/// returns `(c, M, sse)`.
fn nnls2(y: &[f64], e: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let (se, see) = (e.iter().sum::<f64>(), e.iter().map(|v| v * v).sum::<f64>());
    let sy: f64 = y.iter().sum();
    let sey: f64 = e.iter().zip(y).map(|(a, b)| a * b).sum();
    let sse = |c: f64, m: f64| -> f64 {
        y.iter().zip(e).map(|(yy, ee)| (yy - c - m * ee).powi(2)).sum()
    };
    let det = n * see - se * se;
    if det > 1e-14 * n * see {
        let c = (see * sy - se * sey) / det;
        let m = (n * sey - se * sy) / det;
        if c >= 0.0 && m >= 0.0 {
            return (c, m, sse(c, m));
        }
    }
    let c_only = (sy / n).max(0.0);
    let m_only = if see > 0.0 { (sey / see).max(0.0) } else { 0.0 };
    let (a, b) = (sse(c_only, 0.0), sse(0.0, m_only));
    if a <= b {
        (c_only, 0.0, a)
    } else {
        (0.0, m_only, b)
    }
}

/// Joint fit of every column to `c_k + M_k e^{-rho t}` with one shared `rho`.
///
/// The first 10% of the time span is dropped and the rest subsampled at
/// log-spaced times. For fixed `rho` each column is an exact two-parameter
/// NNLS; `rho` minimizes the sum of column SSEs, each normalized by the
/// column's squared peak so that small tails weigh as much as large ones
/// (log-grid scan, then golden-section refinement in `log rho`).
pub fn tail_fit(profile: &TailProfile) -> Result<TailFit> {
    let nt = profile.times.len();
    if nt < 5 {
        return Err(Error::Config(format!(
            "tail fit needs at least 5 time samples, got {nt}"
        )));
    }
    let idx = fit_indices(&profile.times);
    if idx.len() < 5 {
        return Err(Error::Config(format!(
            "tail fit keeps only {} samples after dropping the transient",
            idx.len()
        )));
    }
    let ncol = profile.ks.len();
    let t_s = profile.times[idx[0]];
    let ts: Vec<f64> = idx.iter().map(|&i| profile.times[i] - t_s).collect();
    let cols: Vec<Vec<f64>> = (0..ncol)
        .map(|j| idx.iter().map(|&i| profile.values[i][j]).collect())
        .collect();
    let degenerate: Vec<bool> = cols.iter().map(|c| c.iter().all(|&v| v == 0.0)).collect();
    let scale: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
        .collect();

    let objective = |log_rho: f64| -> f64 {
        let rho = log_rho.exp();
        let e: Vec<f64> = ts.iter().map(|t| (-rho * t).exp()).collect();
        (0..ncol)
            .filter(|&j| !degenerate[j])
            .map(|j| nnls2(&cols[j], &e).2 / (scale[j] * scale[j]))
            .sum()
    };

    let mut fit = TailFit {
        ks: profile.ks.clone(),
        c: vec![0.0; ncol],
        m: vec![0.0; ncol],
        m_prime: 0.0,
        rho: None,
        residuals: vec![0.0; ncol],
        degenerate: degenerate.clone(),
        fit_times: idx.iter().map(|&i| profile.times[i]).collect(),
    };
    if degenerate.iter().all(|&d| d) {
        return Ok(fit);
    }

    let span = ts[ts.len() - 1];
    let (lo, hi) = ((1e-2 / span).ln(), (1e3 / span).ln());
    let scan = 241;
    let grid: Vec<f64> = (0..scan)
        .map(|i| lo + (hi - lo) * i as f64 / (scan - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&x| objective(x)).collect();
    let best = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(scan - 1)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while b - a > 1e-12 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = objective(x2);
        }
    }
    let log_rho = if f1 <= f2 { x1 } else { x2 };
    let log_rho = if objective(log_rho) <= vals[best] { log_rho } else { grid[best] };
    let rho = log_rho.exp();
    let e: Vec<f64> = ts.iter().map(|t| (-rho * t).exp()).collect();
    for j in 0..ncol {
        if degenerate[j] {
            continue;
        }
        let (c, m, sse) = nnls2(&cols[j], &e);
        fit.c[j] = c;
        // refer M back to the profile's time origin
        fit.m[j] = m * (rho * t_s).exp();
        fit.residuals[j] = (sse / ts.len() as f64).sqrt();
    }
    fit.m_prime = fit.m.iter().copied().fold(0.0, f64::max);
    fit.rho = Some(rho);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CoefficientField, Grid};
    use crate::operator::build_operator;

    fn box_op(l: f64, n: usize) -> DiscreteOperator {
        let g = Grid::build(&[l], &[n]).unwrap();
        build_operator(&g, &CoefficientField::constant(&g, 1.0, 1.0).unwrap()).unwrap()
    }

    fn bump(op: &DiscreteOperator, r: f64) -> Vec<f64> {
        op.grid().sample(|x| {
            let s = x[0] / r;
            if s.abs() < 1.0 {
                (1.0 - s * s).powi(2)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn zero_and_compact_support() {
        let op = box_op(50.0, 499);
        let z = HyperbolicState::rest(499, 0.1);
        assert_eq!(tail_energy(&z, 5, &op).unwrap(), 0.0);
        let u = bump(&op, 3.0);
        let s = HyperbolicState::new(u.clone(), u, 0.0, 0.1).unwrap();
        for k in [3, 5, 10] {
            let cut = cutoff_field(op.grid(), k).unwrap();
            assert!(cut.localize(&s.u).iter().all(|&v| v == 0.0));
            assert_eq!(tail_energy(&s, k, &op).unwrap(), 0.0);
        }
    }

    #[test]
    fn too_large_k_refused() {
        let op = box_op(10.0, 99);
        let s = HyperbolicState::rest(99, 0.1);
        assert!(tail_energy(&s, 7, &op).is_ok());
        assert!(matches!(tail_energy(&s, 8, &op), Err(Error::Config(_))));
    }

    #[test]
    fn l2_parts_monotone_in_k() {
        let op = box_op(50.0, 499);
        let u = op.grid().sample(|x| (-x[0].abs() / 4.0).exp());
        let v = op.grid().sample(|x| (x[0] / 3.0).sin() * (-x[0].abs() / 8.0).exp());
        let s = HyperbolicState::new(u, v, 0.0, 0.1).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=30 {
            let p = tail_energy_parts(&s, k, &op).unwrap();
            assert!(p.l2_parts() <= prev);
            prev = p.l2_parts();
        }
    }

    fn synthetic(c: &[f64], m: &[f64], rho: f64) -> TailProfile {
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let values = times
            .iter()
            .map(|t| c.iter().zip(m).map(|(c, m)| c + m * (-rho * t).exp()).collect())
            .collect();
        TailProfile {
            times,
            ks: (1..=c.len() as u32).collect(),
            values,
        }
    }

    #[test]
    fn synthetic_parameters_recovered() {
        let (c, m, rho) = ([0.8, 0.05, 1e-4], [3.0, 0.4, 2e-3], 0.35);
        let fit = tail_fit(&synthetic(&c, &m, rho)).unwrap();
        assert!((fit.rho.unwrap() - rho).abs() < 1e-6 * rho);
        for j in 0..3 {
            assert!((fit.c[j] - c[j]).abs() < 1e-6 * c[j], "{fit:?}");
            assert!((fit.m[j] - m[j]).abs() < 1e-6 * m[j], "{fit:?}");
        }
        assert!((fit.m_prime - 3.0).abs() < 1e-5);
        assert_eq!(fit.envelope_violations(&synthetic(&c, &m, rho)), 0);
    }

    #[test]
    fn all_zero_profile() {
        let fit = tail_fit(&synthetic(&[0.0, 0.0], &[0.0, 0.0], 1.0)).unwrap();
        assert_eq!(fit.c, vec![0.0, 0.0]);
        assert_eq!(fit.m_prime, 0.0);
        assert!(fit.degenerate.iter().all(|&d| d));
        assert!(fit.rho.is_none());
    }

    #[test]
    fn too_few_samples() {
        let p = TailProfile {
            times: vec![0.0, 1.0, 2.0, 3.0],
            ks: vec![1],
            values: vec![vec![1.0]; 4],
        };
        assert!(tail_fit(&p).is_err());
    }

    #[test]
    fn nnls_clamps_negative_parts() {
        let e: Vec<f64> = (0..10).map(|i| (-(i as f64) * 0.3).exp()).collect();
        // rising data would want M < 0
        let y: Vec<f64> = e.iter().map(|v| 2.0 - v).collect();
        let (c, m, _) = nnls2(&y, &e);
        assert!(c > 0.0 && m == 0.0);
    }
}
