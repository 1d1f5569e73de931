//! Attractor approximation by pooled post-transient ensemble snapshots, the
//! Hausdorff semidistance in `H_1 x H_{-alpha}`, and the eps sweep.

use crate::dynamics::{acceleration, gamma_lift, integrate, Flow, HyperbolicState, ParabolicState, State};
use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::linalg::{BandedCholesky, BANDED_WORK_CAP};
use crate::nonlinearity::Nonlinearity;
use crate::norms::{inner_h1, inner_hminus1, inner_l2};
use crate::operator::DiscreteOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: usize,
    /// Sine modes per axis in the random initial data.
    pub modes: usize,
    /// Bound `R` on the phase-space norm of every member.
    pub radius: f64,
    /// Member `j` of `K` gets norm `R 10^{-decades (j + U_j) / K}`, `U_j` uniform on
    /// `[0, 1)`, so small members start close to the origin and are still
    /// travelling along unstable directions after the transient. 0 puts every
    /// member on the sphere of radius `R`.
    pub decades: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    pub seed: u64,
    pub flow: Flow,
    pub states: Vec<State>,
}

/// Phase-space norm: `|u|^2_{H_1} + eps |v|^2` (hyperbolic) or `|u|^2_{H_1}` (parabolic).
pub fn z_norm_sq(state: &State, op: &DiscreteOperator) -> Result<f64> {
    match state {
        State::Hyperbolic(s) => Ok(inner_h1(&s.u, &s.u, op)? + s.eps * inner_l2(&s.v, &s.v, op.grid())?),
        State::Parabolic(s) => inner_h1(&s.u, &s.u, op),
    }
}

fn low_modes(grid: &Grid, modes: usize) -> Vec<(f64, Vec<f64>)> {
    let d = grid.dim();
    let total = modes.pow(d as u32);
    (0..total)
        .map(|mut code| {
            let mut m = [1usize; 3];
            for slot in m.iter_mut().take(d) {
                *slot = code % modes + 1;
                code /= modes;
            }
            let weight = 1.0 / m[..d].iter().map(|k| (k * k) as f64).sum::<f64>();
            let field = grid.sample(|x| {
                (0..d)
                    .map(|a| {
                        let len = grid.upper()[a] - grid.lower()[a];
                        (m[a] as f64 * PI * (x[a] - grid.lower()[a]) / len).sin()
                    })
                    .product()
            });
            (weight, field)
        })
        .collect()
}

/// Seeded random low-mode initial states, rescaled to stratified norms `<= R`.
pub fn sample_ensemble(op: &DiscreteOperator, spec: &EnsembleSpec, flow: Flow, seed: u64) -> Result<Ensemble> {
    if spec.members == 0 || spec.modes == 0 {
        return Err(Error::Config("ensemble needs at least one member and one mode".into()));
    }
    if !(spec.radius >= 0.0) || !(spec.decades >= 0.0) {
        return Err(Error::Config(format!(
            "ensemble radius and decades must be nonnegative, got {} and {}",
            spec.radius, spec.decades
        )));
    }
    if let Flow::Hyperbolic { eps } = flow {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
    }
    let grid = op.grid();
    let n = grid.len();
    let modes = low_modes(grid, spec.modes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.members as f64;
    let mut states = Vec::with_capacity(spec.members);
    for j in 0..spec.members {
        let target = spec.radius * 10f64.powf(-spec.decades * (j as f64 + rng.gen::<f64>()) / k);
        let mut combo = || {
            let mut f = vec![0.0; n];
            for (w, m) in &modes {
                let c = w * rng.gen_range(-1.0..1.0);
                f.iter_mut().zip(m).for_each(|(a, b)| *a += c * b);
            }
            f
        };
        let u = combo();
        let mut state = match flow {
            Flow::Hyperbolic { eps } => State::Hyperbolic(HyperbolicState { u, v: combo(), t: 0.0, eps }),
            Flow::Parabolic => State::Parabolic(ParabolicState { u, t: 0.0 }),
        };
        let norm = z_norm_sq(&state, op)?.sqrt();
        let scale = if norm > 0.0 { target / norm } else { 0.0 };
        match &mut state {
            State::Hyperbolic(s) => {
                s.u.iter_mut().chain(s.v.iter_mut()).for_each(|x| *x *= scale);
            }
            State::Parabolic(s) => s.u.iter_mut().for_each(|x| *x *= scale),
        }
        states.push(state);
    }
    Ok(Ensemble {
        spec: spec.clone(),
        seed,
        flow,
        states,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorSpec {
    /// Transient `T_0`; `None` means `20 / lambda_1`.
    pub t0: Option<f64>,
    pub t_sample: f64,
    pub dt: f64,
    pub stride: usize,
}

impl AttractorSpec {
    pub fn transient(&self, op: &DiscreteOperator) -> Result<f64> {
        match self.t0 {
            Some(t) => Ok(t),
            None => Ok(20.0 / op.lambda1()?),
        }
    }
}

/// Pooled post-transient snapshots `(u, v)`; parabolic snapshots are lifted
/// to `(u, -A_h u + f(u))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorApproximation {
    /// 0 for the lifted parabolic set.
    pub eps: f64,
    pub ensemble: EnsembleSpec,
    pub seed: u64,
    pub t0: f64,
    pub t_sample: f64,
    pub dt: f64,
    pub stride: usize,
    pub grid_hash: u64,
    pub times: Vec<f64>,
    pub member: Vec<usize>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AttractorApproximation {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Snapshot set with the given rows only (provenance kept).
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = self.clone();
        out.times = rows.iter().map(|&i| self.times[i]).collect();
        out.member = rows.iter().map(|&i| self.member[i]).collect();
        out.u = rows.iter().map(|&i| self.u[i].clone()).collect();
        out.v = rows.iter().map(|&i| self.v[i].clone()).collect();
        out
    }

    /// Pooled union with another set on the same grid.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.grid_hash != other.grid_hash {
            return Err(Error::GridMismatch(self.grid_hash, other.grid_hash));
        }
        let mut out = self.clone();
        out.times.extend_from_slice(&other.times);
        out.member.extend_from_slice(&other.member);
        out.u.extend(other.u.iter().cloned());
        out.v.extend(other.v.iter().cloned());
        Ok(out)
    }

    /// `sup |u|^2_{H_1} + eps |v|^2` over the snapshots.
    pub fn sup_z_bound(&self, op: &DiscreteOperator) -> Result<f64> {
        let g = op.grid();
        let vals = self
            .u
            .par_iter()
            .zip(&self.v)
            .map(|(u, v)| Ok(inner_h1(u, u, op)? + self.eps * inner_l2(v, v, g)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }

    /// `sup |v|^2 + eps |w|^2_{H_{-1}}` over the snapshots (hyperbolic sets only).
    pub fn sup_vw_bound(&self, op: &DiscreteOperator, nl: &Nonlinearity) -> Result<f64> {
        if self.eps <= 0.0 {
            return Err(Error::Config("velocity bound needs a hyperbolic snapshot set".into()));
        }
        let g = op.grid();
        let vals = self
            .u
            .par_iter()
            .zip(&self.v)
            .map(|(u, v)| {
                let s = HyperbolicState {
                    u: u.clone(),
                    v: v.clone(),
                    t: 0.0,
                    eps: self.eps,
                };
                let w = acceleration(op, nl, &s);
                Ok(inner_l2(v, v, g)? + self.eps * inner_hminus1(&w, &w, op)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }
}

/// Integrates every member over `[0, T_0 + T_sample]` in parallel and pools the
/// snapshots with `t >= T_0`.
pub fn approximate_attractor(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    ensemble: &Ensemble,
    spec: &AttractorSpec,
) -> Result<AttractorApproximation> {
    let t0 = spec.transient(op)?;
    if !(t0 > 0.0) || !(spec.t_sample > 0.0) {
        return Err(Error::Config(format!(
            "attractor needs T0 > 0 and T_sample > 0, got {t0} and {}",
            spec.t_sample
        )));
    }
    let runs = ensemble
        .states
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let wrap = |e: Error| Error::MemberFailed {
                member: j,
                source: Box::new(e),
            };
            let traj = integrate(op, nl, s.clone(), t0 + spec.t_sample, spec.dt, spec.stride)
                .map_err(|e| wrap(e.error))?;
            let kept = traj.after(t0 - 1e-9 * t0);
            let v = if kept.is_hyperbolic() {
                kept.v
            } else {
                kept.u
                    .iter()
                    .map(|u| gamma_lift(op, nl, u).map(|p| p.1))
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?
            };
            Ok((j, kept.times, kept.u, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = AttractorApproximation {
        eps: ensemble.flow.eps(),
        ensemble: ensemble.spec.clone(),
        seed: ensemble.seed,
        t0,
        t_sample: spec.t_sample,
        dt: spec.dt,
        stride: spec.stride,
        grid_hash: op.grid().hash(),
        times: Vec::new(),
        member: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
    };
    for (j, times, u, v) in runs {
        out.member.extend(std::iter::repeat(j).take(times.len()));
        out.times.extend(times);
        out.u.extend(u);
        out.v.extend(v);
    }
    if out.is_empty() {
        return Err(Error::Config("attractor approximation produced no snapshots".into()));
    }
    Ok(out)
}

/// Isometric embedding of `H_1 x H_{-alpha}` into Euclidean space:
/// `u -> sqrt(vol) L^T u` with `A_h = L L^T`, and `v -> sqrt(vol) L^{-1} v`
/// (`alpha = 1`), `sqrt(vol) v` (`alpha = 0`), or the spectral
/// `sqrt(vol) Lambda^{-alpha/2} Q^T v` for interior `alpha`.
pub struct PhaseEmbedding<'a> {
    op: &'a DiscreteOperator,
    factor: BandedCholesky,
    alpha: f64,
}

impl<'a> PhaseEmbedding<'a> {
    pub fn new(op: &'a DiscreteOperator, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let m = op.matrix();
        let w = m.half_bandwidth() as f64;
        if m.n() as f64 * (w + 1.0) * (w + 1.0) > BANDED_WORK_CAP {
            return Err(Error::Config(format!(
                "semidistance embedding needs a banded factorization; {} nodes with half-bandwidth {w} is too large",
                m.n()
            )));
        }
        if alpha > 0.0 && alpha < 1.0 {
            op.dense_eigen()?;
        }
        Ok(Self {
            op,
            factor: BandedCholesky::factor(m)?,
            alpha,
        })
    }

    pub fn embed(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let n = self.op.len();
        check_len(n, u.len())?;
        check_len(n, v.len())?;
        let s = self.op.grid().cell_volume().sqrt();
        let mut out = self.factor.mul_lt(u);
        let tail = if self.alpha == 1.0 {
            self.factor.forward_solve(v)
        } else if self.alpha == 0.0 {
            v.to_vec()
        } else {
            let eig = self.op.dense_eigen()?;
            (0..n)
                .map(|k| {
                    let col = eig.eigenvectors.column(k);
                    let c: f64 = (0..n).map(|i| col[i] * v[i]).sum();
                    eig.eigenvalues[k].powf(-self.alpha / 2.0) * c
                })
                .collect()
        };
        out.extend(tail);
        out.iter_mut().for_each(|x| *x *= s);
        Ok(out)
    }

    pub fn embed_set(&self, set: &AttractorApproximation) -> Result<Vec<Vec<f64>>> {
        set.u
            .par_iter()
            .zip(&set.v)
            .map(|(u, v)| self.embed(u, v))
            .collect()
    }
}

/// Squared distance, abandoning the sum once it exceeds `cap`.
#[inline]
fn dist_sq_capped(a: &[f64], b: &[f64], cap: f64) -> f64 {
    let mut s = 0.0;
    for (chunk_a, chunk_b) in a.chunks(16).zip(b.chunks(16)) {
        for (x, y) in chunk_a.iter().zip(chunk_b) {
            let d = x - y;
            s += d * d;
        }
        if s >= cap {
            return s;
        }
    }
    s
}

/// Exact `sup_{x in xs} inf_{y in ys} |x - y|` for Euclidean point sets.
///
/// `ys` is sorted by its projection on an approximate diameter direction; the
/// projection gap lower-bounds the distance, so each inner search stops once
/// the gap exceeds the best distance found. A point is also abandoned once its
/// running minimum falls to the chunk's current maximum, since it can no longer
/// raise the sup. Both shortcuts leave the result exact.
pub fn sup_inf(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    if ys.is_empty() {
        return f64::INFINITY;
    }
    let dir = diameter_direction(ys);
    let proj = |p: &[f64]| p.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
    let mut sorted: Vec<(f64, usize)> = ys.iter().enumerate().map(|(i, y)| (proj(y), i)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keys: Vec<f64> = sorted.iter().map(|s| s.0).collect();

    let sup_sq = xs
        .par_chunks(64)
        .map(|chunk| {
            let mut local = 0.0f64;
            for x in chunk {
                let px = proj(x);
                let start = keys.partition_point(|&k| k < px);
                let mut best = f64::INFINITY;
                let (mut lo, mut hi) = (start, start);
                // alternate outward from the insertion point
                loop {
                    let lo_gap = if lo > 0 { px - keys[lo - 1] } else { f64::INFINITY };
                    let hi_gap = if hi < keys.len() { keys[hi] - px } else { f64::INFINITY };
                    let (gap, idx) = if lo_gap <= hi_gap {
                        if lo == 0 {
                            break;
                        }
                        lo -= 1;
                        (lo_gap, lo)
                    } else {
                        hi += 1;
                        (hi_gap, hi - 1)
                    };
                    if gap * gap >= best || best <= local {
                        break;
                    }
                    let d = dist_sq_capped(x, &ys[sorted[idx].1], best);
                    if d < best {
                        best = d;
                    }
                }
                if best > local {
                    local = best;
                }
            }
            local
        })
        .reduce(|| 0.0, f64::max);
    sup_sq.sqrt()
}

fn diameter_direction(ys: &[Vec<f64>]) -> Vec<f64> {
    let far = |from: &[f64]| -> usize {
        let mut best = (0, -1.0);
        for (i, y) in ys.iter().enumerate() {
            let d = dist_sq_capped(from, y, f64::INFINITY);
            if d > best.1 {
                best = (i, d);
            }
        }
        best.0
    };
    let a = far(&ys[0]);
    let b = far(&ys[a]);
    let mut dir: Vec<f64> = ys[b].iter().zip(&ys[a]).map(|(x, y)| x - y).collect();
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        dir.iter_mut().for_each(|x| *x /= n);
    } else {
        dir.iter_mut().for_each(|x| *x = 0.0);
        dir[0] = 1.0;
    }
    dir
}

/// `sup_{x in X} inf_{y in Y} sqrt(|x_u - y_u|^2_{H_1} + |x_v - y_v|^2_{H_{-alpha}})`.
pub fn semidistance(
    x: &AttractorApproximation,
    y: &AttractorApproximation,
    op: &DiscreteOperator,
    alpha: f64,
) -> Result<f64> {
    if x.grid_hash != y.grid_hash {
        return Err(Error::GridMismatch(x.grid_hash, y.grid_hash));
    }
    if x.grid_hash != op.grid().hash() {
        return Err(Error::GridMismatch(x.grid_hash, op.grid().hash()));
    }
    let emb = PhaseEmbedding::new(op, alpha)?;
    Ok(sup_inf(&emb.embed_set(x)?, &emb.embed_set(y)?))
}

/// Symmetric Hausdorff distance: the larger of the two semidistances.
pub fn semidistance_sym(
    x: &AttractorApproximation,
    y: &AttractorApproximation,
    op: &DiscreteOperator,
    alpha: f64,
) -> Result<f64> {
    Ok(semidistance(x, y, op, alpha)?.max(semidistance(y, x, op, alpha)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub eps_ladder: Vec<f64>,
    /// Ensemble for each `A_eps`.
    pub ensemble: EnsembleSpec,
    /// Ensemble for the parabolic attractor, lifted into `A_0`.
    pub parabolic_ensemble: EnsembleSpec,
    pub attractor: AttractorSpec,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub semidistance: f64,
    /// `sup |u|^2_{H_1} + eps |v|^2` over `A_eps`.
    pub sup_z_bound: f64,
    /// `sup |v|^2 + eps |w|^2_{H_{-1}}` over `A_eps`.
    pub sup_vw_bound: f64,
    pub snapshots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub alpha: f64,
    pub a0_snapshots: usize,
    pub rows: Vec<SweepRow>,
    /// Largest ratio between consecutive semidistances (`d_{i+1} / d_i`).
    pub worst_step_ratio: f64,
    /// max / min of `sup_z_bound` across the ladder.
    pub z_bound_spread: f64,
    pub note: String,
}

pub const SAMPLING_NOTE: &str = "snapshot sets are finite samples: the inner infimum is taken over \
sampled points only, so reported semidistances overestimate the distance to the sampled attractor";

/// `A_0` from the seed, each `A_eps` from `seed + 1` (same initial directions for every eps).
pub fn eps_sweep(op: &DiscreteOperator, nl: &Nonlinearity, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.eps_ladder.is_empty() || cfg.eps_ladder.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("eps ladder must be a nonempty list of positive values".into()));
    }
    let parab = sample_ensemble(op, &cfg.parabolic_ensemble, Flow::Parabolic, cfg.seed)?;
    let a0 = approximate_attractor(op, nl, &parab, &cfg.attractor)?;
    let emb = PhaseEmbedding::new(op, cfg.alpha)?;
    let a0_emb = emb.embed_set(&a0)?;
    let mut rows = Vec::with_capacity(cfg.eps_ladder.len());
    for &eps in &cfg.eps_ladder {
        let ens = sample_ensemble(op, &cfg.ensemble, Flow::Hyperbolic { eps }, cfg.seed.wrapping_add(1))?;
        let ae = approximate_attractor(op, nl, &ens, &cfg.attractor)?;
        let d = sup_inf(&emb.embed_set(&ae)?, &a0_emb);
        rows.push(SweepRow {
            eps,
            semidistance: d,
            sup_z_bound: ae.sup_z_bound(op)?,
            sup_vw_bound: ae.sup_vw_bound(op, nl)?,
            snapshots: ae.len(),
        });
    }
    let worst_step_ratio = rows
        .windows(2)
        .map(|w| w[1].semidistance / w[0].semidistance)
        .fold(0.0, f64::max);
    let zs: Vec<f64> = rows.iter().map(|r| r.sup_z_bound).collect();
    let zmax = zs.iter().copied().fold(0.0, f64::max);
    let zmin = zs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SweepReport {
        alpha: cfg.alpha,
        a0_snapshots: a0.len(),
        rows,
        worst_step_ratio,
        z_bound_spread: if zmin > 0.0 { zmax / zmin } else { f64::INFINITY },
        note: SAMPLING_NOTE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CoefficientField;
    use crate::operator::build_operator;

    fn laplacian(n: usize) -> DiscreteOperator {
        let g = Grid::with_bounds(&[0.0], &[PI], &[n]).unwrap();
        build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap()
    }

    fn spec(members: usize, radius: f64) -> EnsembleSpec {
        EnsembleSpec {
            members,
            modes: 4,
            radius,
            decades: 0.0,
        }
    }

    #[test]
    fn zero_radius_gives_zero_state() {
        let op = laplacian(16);
        let e = sample_ensemble(&op, &spec(1, 0.0), Flow::Hyperbolic { eps: 0.1 }, 1).unwrap();
        assert_eq!(e.states.len(), 1);
        assert!(matches!(&e.states[0], State::Hyperbolic(s) if s.u.iter().chain(&s.v).all(|&x| x == 0.0)));
        assert!(sample_ensemble(&op, &spec(0, 1.0), Flow::Parabolic, 1).is_err());
        assert!(sample_ensemble(&op, &spec(2, -1.0), Flow::Parabolic, 1).is_err());
    }

    #[test]
    fn ensemble_determinism_and_radius() {
        let op = laplacian(32);
        let mut s = spec(32, 5.0);
        s.decades = 3.0;
        let flow = Flow::Hyperbolic { eps: 0.1 };
        let a = sample_ensemble(&op, &s, flow, 7).unwrap();
        let b = sample_ensemble(&op, &s, flow, 7).unwrap();
        assert_eq!(a, b);
        for st in &a.states {
            assert!(z_norm_sq(st, &op).unwrap() <= 25.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn linear_flow_collapses_to_origin() {
        let op = laplacian(32);
        let nl = Nonlinearity::zero(32);
        let ens = sample_ensemble(&op, &spec(4, 2.0), Flow::Hyperbolic { eps: 0.1 }, 3).unwrap();
        let a = approximate_attractor(
            &op,
            &nl,
            &ens,
            &AttractorSpec {
                t0: None,
                t_sample: 1.0,
                dt: 1e-2,
                stride: 10,
            },
        )
        .unwrap();
        assert!(a.t0 >= 20.0 / op.lambda1().unwrap() - 1e-12);
        assert!(a.times.iter().all(|&t| t >= a.t0 - 1e-9));
        assert!(a.sup_z_bound(&op).unwrap().sqrt() < 1e-4);
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, count: usize, hash: u64) -> AttractorApproximation {
        let field = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        AttractorApproximation {
            eps: 0.1,
            ensemble: spec(1, 1.0),
            seed: 0,
            t0: 1.0,
            t_sample: 1.0,
            dt: 0.1,
            stride: 1,
            grid_hash: hash,
            times: vec![1.0; count],
            member: vec![0; count],
            u: (0..count).map(|_| field(rng)).collect(),
            v: (0..count).map(|_| field(rng)).collect(),
        }
    }

    fn brute(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
        xs.iter()
            .map(|x| {
                ys.iter()
                    .map(|y| dist_sq_capped(x, y, f64::INFINITY))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
            .sqrt()
    }

    #[test]
    fn pruned_search_equals_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let xs: Vec<Vec<f64>> = (0..40).map(|_| (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let ys: Vec<Vec<f64>> = (0..55).map(|_| (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            assert_eq!(sup_inf(&xs, &ys), brute(&xs, &ys));
        }
    }

    #[test]
    fn semidistance_basic_properties() {
        let op = laplacian(12);
        let h = op.grid().hash();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_set(&mut rng, 12, 10, h);
        let y = random_set(&mut rng, 12, 8, h);
        let z = random_set(&mut rng, 12, 9, h);
        for alpha in [0.0, 0.5, 1.0] {
            assert_eq!(semidistance(&x, &x, &op, alpha).unwrap(), 0.0);
            let dxy = semidistance(&x, &y, &op, alpha).unwrap();
            let dxz = semidistance(&x, &z, &op, alpha).unwrap();
            let dyz = semidistance(&y, &z, &op, alpha).unwrap();
            let union = semidistance(&x, &y.union(&z).unwrap(), &op, alpha).unwrap();
            assert!(union <= dxy.min(dxz));
            assert!(dxz <= dxy + dyz + 1e-12);
        }
        // singletons reduce to the product norm
        let p = x.select(&[0]);
        let q = y.select(&[0]);
        let du: Vec<f64> = p.u[0].iter().zip(&q.u[0]).map(|(a, b)| a - b).collect();
        let dv: Vec<f64> = p.v[0].iter().zip(&q.v[0]).map(|(a, b)| a - b).collect();
        let expect = (inner_h1(&du, &du, &op).unwrap() + inner_hminus1(&dv, &dv, &op).unwrap()).sqrt();
        let got = semidistance(&p, &q, &op, 1.0).unwrap();
        assert!((got - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let op = laplacian(12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_set(&mut rng, 12, 3, op.grid().hash());
        let y = random_set(&mut rng, 12, 3, 42);
        assert!(matches!(semidistance(&x, &y, &op, 1.0), Err(Error::GridMismatch(..))));
    }
}
