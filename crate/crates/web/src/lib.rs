//! WebAssembly bindings for the static page in `www/`. Every entry point returns
//! a flat `Float64Array` whose layout is documented on the function.

use dampwave::attractor::{eps_sweep, AttractorSpec, EnsembleSpec, SweepConfig};
use dampwave::dynamics::{gamma_lift, integrate, HyperbolicState, ParabolicState, State};
use dampwave::tails::{tail_fit, tail_profile};
use dampwave::{build_operator, CoefficientField, DiscreteOperator, Grid, Nonlinearity};
use std::f64::consts::PI;
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn interval(lower: f64, upper: f64, n: usize, beta: f64) -> Result<DiscreteOperator, JsError> {
    let g = Grid::with_bounds(&[lower], &[upper], &[n]).map_err(js)?;
    let c = CoefficientField::constant(&g, 1.0, beta).map_err(js)?;
    build_operator(&g, &c).map_err(js)
}

/// Chafee-Infante flow on `(0, pi)` from `amplitude * sin(mode x)`, started at
/// rest for the damped wave and integrated for `duration` under both flows.
///
/// Layout: `[x (n), u_eps(T) (n), u_0(T) (n), t (m), |u_eps|_L2 (m), |u_0|_L2 (m)]`
/// with `m` recorded times.
#[wasm_bindgen]
pub fn simulate(
    n: usize,
    eps: f64,
    lambda: f64,
    amplitude: f64,
    mode: u32,
    duration: f64,
    lifted: bool,
) -> Result<Vec<f64>, JsError> {
    let op = interval(0.0, PI, n, 0.0)?;
    let g = op.grid();
    let nl = Nonlinearity::chafee_infante(g, lambda, 1.0).map_err(js)?;
    let u0 = g.sample(|x| amplitude * (mode as f64 * x[0]).sin());
    let v0 = if lifted {
        gamma_lift(&op, &nl, &u0).map_err(js)?.1
    } else {
        vec![0.0; n]
    };
    let dt = 1e-3;
    let stride = ((duration / dt / 200.0).ceil() as usize).max(1);
    let hyp = State::Hyperbolic(HyperbolicState::new(u0.clone(), v0, 0.0, eps).map_err(js)?);
    let par = State::Parabolic(ParabolicState { u: u0, t: 0.0 });
    let th = integrate(&op, &nl, hyp, duration, dt, stride).map_err(|e| js(e.error))?;
    let tp = integrate(&op, &nl, par, duration, dt, stride).map_err(|e| js(e.error))?;
    let l2 = |u: &[f64]| (u.iter().map(|x| x * x).sum::<f64>() * g.cell_volume()).sqrt();
    let mut out: Vec<f64> = (0..n).map(|i| g.coords(i)[0]).collect();
    out.extend_from_slice(th.u.last().unwrap());
    out.extend_from_slice(tp.u.last().unwrap());
    out.extend_from_slice(&th.times);
    out.extend(th.u.iter().map(|u| l2(u)));
    out.extend(tp.u.iter().map(|u| l2(u)));
    Ok(out)
}

/// Semidistance from `A_eps` to the lifted parabolic attractor over `ladder` on a
/// small Chafee-Infante problem.
///
/// Layout: `[semidistance (ladder.len()), sup |v|^2 + eps |w|^2 (ladder.len())]`.
#[wasm_bindgen]
pub fn sweep(n: usize, lambda: f64, members: usize, ladder: Vec<f64>, seed: u32) -> Result<Vec<f64>, JsError> {
    let op = interval(0.0, PI, n, 0.0)?;
    let nl = Nonlinearity::chafee_infante(op.grid(), lambda, 1.0).map_err(js)?;
    let ensemble = EnsembleSpec {
        members,
        modes: 4,
        radius: 5.0,
        decades: 14.0,
    };
    let cfg = SweepConfig {
        eps_ladder: ladder,
        parabolic_ensemble: EnsembleSpec {
            members: 2 * members,
            ..ensemble.clone()
        },
        ensemble,
        attractor: AttractorSpec {
            t0: Some(20.0),
            t_sample: 5.0,
            dt: 1e-3,
            stride: 10,
        },
        alpha: 1.0,
        seed: seed.into(),
    };
    let rep = eps_sweep(&op, &nl, &cfg).map_err(js)?;
    let mut out: Vec<f64> = rep.rows.iter().map(|r| r.semidistance).collect();
    out.extend(rep.rows.iter().map(|r| r.sup_vw_bound));
    Ok(out)
}

/// Cutoff tail energies on `(-50, 50)` for a bump of radius 3 under a source
/// `lambda exp(-x^2 / 4)` localized near the origin.
///
/// Layout: `[t (m), tail k=5 (m), tail k=10 (m), tail k=20 (m), c_5, c_10, c_20]`.
#[wasm_bindgen]
pub fn tails(eps: f64, lambda: f64, duration: f64) -> Result<Vec<f64>, JsError> {
    let op = interval(-50.0, 50.0, 999, 1.0)?;
    let g = op.grid();
    let nl = Nonlinearity::cubic(
        g,
        |x| lambda * (-x[0] * x[0] / 4.0).exp(),
        |_| 1.0,
        |_| 0.0,
        4.0,
        |x| (lambda * (-x[0] * x[0] / 4.0).exp()).max(0.0).powi(2) / 4.0,
    )
    .map_err(js)?;
    let u0 = g.sample(|x| (1.0 - x[0] * x[0] / 9.0).max(0.0).powi(2));
    let init = HyperbolicState::new(u0, vec![0.0; g.len()], 0.0, eps).map_err(js)?;
    let tr = integrate(&op, &nl, State::Hyperbolic(init), duration, 5e-3, 10).map_err(|e| js(e.error))?;
    let ks = [5, 10, 20];
    let profile = tail_profile(&tr, &ks, &op).map_err(js)?;
    let fit = tail_fit(&profile).map_err(js)?;
    let mut out = profile.times.clone();
    for j in 0..ks.len() {
        out.extend(profile.column(j));
    }
    out.extend_from_slice(&fit.c);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        let p = simulate(16, 0.1, 2.0, 0.5, 1, 0.5, true).unwrap();
        let m = (p.len() - 48) / 3;
        assert_eq!(p.len(), 48 + 3 * m);
        assert!(m >= 2);
        let t = tails(0.1, 3.0, 0.5).unwrap();
        assert_eq!((t.len() - 3) % 4, 0);
    }
}
