//! Energy functionals along discrete trajectories and the residuals of their
//! differential identities, taken with central differences in time.

use crate::dynamics::{acceleration, parabolic_field, HyperbolicState, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::norms::{inner_h1, inner_hminus1, inner_l2, integral};
use crate::operator::DiscreteOperator;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Functional {
    TildeV,
    V,
    FEps { delta: f64 },
    FZero { delta: f64 },
    UniformBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub functional: Functional,
    pub dt: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Residual at interior snapshots `1..len-1`.
    pub residuals: Vec<f64>,
    pub worst_residual: f64,
    /// `sup(|u|^2_{H_1} + eps |v|^2_{L^2})` over the snapshots (hyperbolic only).
    pub trajectory_bound: Option<f64>,
    /// `sup(|v|^2_{L^2} + eps |w|^2_{H_{-1}})` over the snapshots.
    pub uniform_bound: Option<f64>,
}

impl EnergyReport {
    fn new(functional: Functional, traj: &Trajectory, values: Vec<f64>, residuals: Vec<f64>) -> Self {
        let worst_residual = residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
        Self {
            functional,
            dt: traj.snapshot_interval(),
            times: traj.times.clone(),
            values,
            residuals,
            worst_residual,
            trajectory_bound: None,
            uniform_bound: None,
        }
    }
}

/// Log-log least-squares fit `worst ~ C dt^order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub dts: Vec<f64>,
    pub worst: Vec<f64>,
    pub order: f64,
    pub constant: f64,
    pub r2: f64,
}

pub fn fit_order(dts: &[f64], worst: &[f64]) -> Result<OrderFit> {
    if dts.len() != worst.len() || dts.len() < 2 {
        return Err(Error::Config("order fit needs at least two (dt, residual) pairs".into()));
    }
    if dts.iter().chain(worst).any(|v| !(*v > 0.0)) {
        return Err(Error::Config("order fit needs positive dt and residual values".into()));
    }
    let x: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = worst.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let sse: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - order * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(OrderFit {
        dts: dts.to_vec(),
        worst: worst.to_vec(),
        order,
        constant: intercept.exp(),
        r2,
    })
}

/// Checks `lambda_1 - delta > 0` and, for the hyperbolic functional, `1 - 2 delta eps0 > 0`.
pub fn check_delta(delta: f64, lambda1: f64, eps0: Option<f64>) -> Result<()> {
    let first = lambda1 - delta;
    let second = eps0.map(|e| 1.0 - 2.0 * delta * e);
    let ok = delta >= 0.0 && first > 0.0 && second.map_or(true, |s| s > 0.0);
    if ok {
        return Ok(());
    }
    Err(Error::Config(match (second, eps0) {
        (Some(s), Some(e)) => format!(
            "delta = {delta} must satisfy lambda1 - delta > 0 ({lambda1} - {delta} = {first}) \
             and 1 - 2 delta eps0 > 0 (eps0 = {e}: {s})"
        ),
        _ => format!(
            "delta = {delta} must be nonnegative with lambda1 - delta > 0 ({lambda1} - {delta} = {first})"
        ),
    }))
}

/// `0.4 min(lambda_1, 1 / (2 eps0))`; `eps0 = 0` means the parabolic case.
pub fn default_delta(lambda1: f64, eps0: f64) -> f64 {
    if eps0 > 0.0 {
        0.4 * lambda1.min(1.0 / (2.0 * eps0))
    } else {
        0.4 * lambda1
    }
}

/// `V~(u, v) = |u|^2_{H_1}/2 + eps |v|^2/2 - int F(x, u)`.
pub fn tilde_v(s: &HyperbolicState, op: &DiscreteOperator, nl: &Nonlinearity) -> Result<f64> {
    let g = op.grid();
    Ok(0.5 * inner_h1(&s.u, &s.u, op)? + 0.5 * s.eps * inner_l2(&s.v, &s.v, g)?
        - integral(&nl.eval_F(&s.u), g)?)
}

/// `V(v, w) = |v|^2/2 + eps |w|^2_{H_{-1}}/2`.
pub fn v_lower(v: &[f64], w: &[f64], eps: f64, op: &DiscreteOperator) -> Result<f64> {
    Ok(0.5 * inner_l2(v, v, op.grid())? + 0.5 * eps * inner_hminus1(w, w, op)?)
}

/// `F_eps(z) = eps/2 |delta u + v|^2 + |u|^2_{H_1}/2 + (delta^2 eps - delta)/2 |u|^2 - int F`.
pub fn f_eps(s: &HyperbolicState, delta: f64, op: &DiscreteOperator, nl: &Nonlinearity) -> Result<f64> {
    let g = op.grid();
    let m: Vec<f64> = s.u.iter().zip(&s.v).map(|(u, v)| delta * u + v).collect();
    Ok(0.5 * s.eps * inner_l2(&m, &m, g)?
        + 0.5 * inner_h1(&s.u, &s.u, op)?
        + 0.5 * (delta * delta * s.eps - delta) * inner_l2(&s.u, &s.u, g)?
        - integral(&nl.eval_F(&s.u), g)?)
}

/// `F_0(u) = |u|^2_{H_1}/2 - delta |u|^2/2 - int F`.
pub fn f_zero(u: &[f64], delta: f64, op: &DiscreteOperator, nl: &Nonlinearity) -> Result<f64> {
    let g = op.grid();
    Ok(0.5 * inner_h1(u, u, op)? - 0.5 * delta * inner_l2(u, u, g)? - integral(&nl.eval_F(u), g)?)
}

fn check_uniform(traj: &Trajectory, op: &DiscreteOperator, hyperbolic: bool) -> Result<()> {
    if traj.is_hyperbolic() != hyperbolic {
        return Err(Error::Config(format!(
            "this functional needs a {} trajectory",
            if hyperbolic { "hyperbolic" } else { "parabolic" }
        )));
    }
    if traj.len() < 3 {
        return Err(Error::Config(format!(
            "identity residuals need at least 3 snapshots, got {}",
            traj.len()
        )));
    }
    if traj.grid_hash != op.grid().hash() {
        return Err(Error::GridMismatch(traj.grid_hash, op.grid().hash()));
    }
    let h = traj.snapshot_interval();
    for w in traj.times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(w[1].abs()) {
            return Err(Error::Config(format!(
                "identity residuals need uniformly spaced snapshots; gap {} differs from {h}",
                w[1] - w[0]
            )));
        }
    }
    check_len(op.len(), traj.u[0].len())
}

/// `(y_{i+1} - y_{i-1}) / (2h)` at interior snapshots.
fn central(values: &[f64], h: f64) -> Vec<f64> {
    values.windows(3).map(|w| (w[2] - w[0]) / (2.0 * h)).collect()
}

fn eps_of(traj: &Trajectory) -> f64 {
    traj.flow.eps()
}

/// Residual of `d/dt V~ = -|v|^2`.
pub fn tilde_v_identity_residual(
    traj: &Trajectory,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
) -> Result<EnergyReport> {
    check_uniform(traj, op, true)?;
    let g = op.grid();
    let eps = eps_of(traj);
    let values = (0..traj.len())
        .into_par_iter()
        .map(|i| {
            let s = HyperbolicState {
                u: traj.u[i].clone(),
                v: traj.v[i].clone(),
                t: traj.times[i],
                eps,
            };
            tilde_v(&s, op, nl)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut residuals = central(&values, traj.snapshot_interval());
    for (k, r) in residuals.iter_mut().enumerate() {
        let v = &traj.v[k + 1];
        *r += inner_l2(v, v, g)?;
    }
    let mut rep = EnergyReport::new(Functional::TildeV, traj, values, residuals);
    rep.trajectory_bound = Some(trajectory_bound(traj, op)?);
    Ok(rep)
}

/// Residual of `d/dt V(v, w) = -|w|^2_{H_{-1}} + <g, w>_{H_{-1}}` with `w` from
/// [`acceleration`] and `g = d_u f(u) v`.
pub fn v_identity_residual(
    traj: &Trajectory,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
) -> Result<EnergyReport> {
    check_uniform(traj, op, true)?;
    let g = op.grid();
    let eps = eps_of(traj);
    // per snapshot: (V, |w|^2_{H-1} - <g, w>_{H-1})
    let parts = (0..traj.len())
        .into_par_iter()
        .map(|i| {
            let s = HyperbolicState {
                u: traj.u[i].clone(),
                v: traj.v[i].clone(),
                t: traj.times[i],
                eps,
            };
            let w = acceleration(op, nl, &s);
            let aw = op.solve(&w)?;
            let forcing = nl.linearized_forcing(&s.u, &s.v);
            let ww = inner_l2(&aw, &w, g)?;
            let gw = inner_l2(&aw, &forcing, g)?;
            let value = 0.5 * inner_l2(&s.v, &s.v, g)? + 0.5 * eps * ww;
            Ok((value, ww - gw))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let mut residuals = central(&values, traj.snapshot_interval());
    for (k, r) in residuals.iter_mut().enumerate() {
        *r += parts[k + 1].1;
    }
    Ok(EnergyReport::new(Functional::V, traj, values, residuals))
}

/// Residual of
/// `d/dt F_eps + 2 delta F_eps = (2 delta eps - 1)|delta u + v|^2 + delta <u, f(u)> - 2 delta int F`.
///
/// `delta` is checked against `lambda_1` and the trajectory's own `eps`.
pub fn f_eps_identity_residual(
    traj: &Trajectory,
    delta: f64,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
) -> Result<EnergyReport> {
    check_uniform(traj, op, true)?;
    let eps = eps_of(traj);
    check_delta(delta, op.lambda1()?, Some(eps))?;
    let g = op.grid();
    let parts = (0..traj.len())
        .into_par_iter()
        .map(|i| {
            let s = HyperbolicState {
                u: traj.u[i].clone(),
                v: traj.v[i].clone(),
                t: traj.times[i],
                eps,
            };
            let value = f_eps(&s, delta, op, nl)?;
            let m: Vec<f64> = s.u.iter().zip(&s.v).map(|(u, v)| delta * u + v).collect();
            let rhs = (2.0 * delta * eps - 1.0) * inner_l2(&m, &m, g)?
                + delta * inner_l2(&s.u, &nl.eval_f(&s.u), g)?
                - 2.0 * delta * integral(&nl.eval_F(&s.u), g)?;
            Ok((value, 2.0 * delta * value - rhs))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let mut residuals = central(&values, traj.snapshot_interval());
    for (k, r) in residuals.iter_mut().enumerate() {
        *r += parts[k + 1].1;
    }
    Ok(EnergyReport::new(Functional::FEps { delta }, traj, values, residuals))
}

/// The two sides of the `F_0` identity at one state, with `eta = -A_h u + f(u)`:
/// `(2 delta F_0(u) + <eta, d F_0(u)>, -|delta u + eta|^2 + delta <u, f> - 2 delta int F)`.
///
/// `<eta, dF_0(u)>` is the time derivative of `F_0` along the parabolic flow.
pub fn f_zero_identity_sides(
    u: &[f64],
    delta: f64,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
) -> Result<(f64, f64)> {
    let g = op.grid();
    let eta = parabolic_field(op, nl, u);
    let fu = nl.eval_f(u);
    // dF_0(u) = A u - delta u - f(u) = -eta - delta u
    let grad: Vec<f64> = eta.iter().zip(u).map(|(e, x)| -e - delta * x).collect();
    let left = 2.0 * delta * f_zero(u, delta, op, nl)? + inner_l2(&eta, &grad, g)?;
    let m: Vec<f64> = u.iter().zip(&eta).map(|(x, e)| delta * x + e).collect();
    let right = -inner_l2(&m, &m, g)? + delta * inner_l2(u, &fu, g)?
        - 2.0 * delta * integral(&nl.eval_F(u), g)?;
    Ok((left, right))
}

/// Residual of `d/dt F_0 + 2 delta F_0 = -|delta u + eta|^2 + delta <u, f> - 2 delta int F`
/// along a parabolic trajectory.
pub fn f_zero_identity_residual(
    traj: &Trajectory,
    delta: f64,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
) -> Result<EnergyReport> {
    check_uniform(traj, op, false)?;
    check_delta(delta, op.lambda1()?, None)?;
    let g = op.grid();
    let parts = traj
        .u
        .par_iter()
        .map(|u| {
            let value = f_zero(u, delta, op, nl)?;
            let eta = parabolic_field(op, nl, u);
            let m: Vec<f64> = u.iter().zip(&eta).map(|(x, e)| delta * x + e).collect();
            let rhs = -inner_l2(&m, &m, g)? + delta * inner_l2(u, &nl.eval_f(u), g)?
                - 2.0 * delta * integral(&nl.eval_F(u), g)?;
            Ok((value, 2.0 * delta * value - rhs))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let mut residuals = central(&values, traj.snapshot_interval());
    for (k, r) in residuals.iter_mut().enumerate() {
        *r += parts[k + 1].1;
    }
    Ok(EnergyReport::new(Functional::FZero { delta }, traj, values, residuals))
}

/// `sup(|u|^2_{H_1} + eps |v|^2)` over a hyperbolic trajectory.
pub fn trajectory_bound(traj: &Trajectory, op: &DiscreteOperator) -> Result<f64> {
    let eps = eps_of(traj);
    let g = op.grid();
    let vals = (0..traj.len())
        .into_par_iter()
        .map(|i| {
            let v = traj.v.get(i).map_or(Ok(0.0), |v| inner_l2(v, v, g))?;
            Ok(inner_h1(&traj.u[i], &traj.u[i], op)? + eps * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Per-snapshot `|v|^2 + eps |w|^2_{H_{-1}}` with its sup, plus the trajectory bound `r`.
pub fn uniform_bound_report(
    traj: &Trajectory,
    op: &DiscreteOperator,
    nl: &Nonlinearity,
) -> Result<EnergyReport> {
    if !traj.is_hyperbolic() || traj.is_empty() {
        return Err(Error::Config("uniform bound needs a nonempty hyperbolic trajectory".into()));
    }
    let g = op.grid();
    let eps = eps_of(traj);
    let values = (0..traj.len())
        .into_par_iter()
        .map(|i| {
            let s = HyperbolicState {
                u: traj.u[i].clone(),
                v: traj.v[i].clone(),
                t: traj.times[i],
                eps,
            };
            let w = acceleration(op, nl, &s);
            Ok(inner_l2(&s.v, &s.v, g)? + eps * inner_hminus1(&w, &w, op)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let sup = values.iter().copied().fold(0.0, f64::max);
    let mut rep = EnergyReport::new(Functional::UniformBound, traj, values, Vec::new());
    rep.trajectory_bound = Some(trajectory_bound(traj, op)?);
    rep.uniform_bound = Some(sup);
    Ok(rep)
}
