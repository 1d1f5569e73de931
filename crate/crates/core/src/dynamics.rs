//! First-order IMEX integration of the damped wave system and its parabolic limit.
//!
//! Hyperbolic flow, written as `u' = v`, `eps v' = -v - A_h u + f(u)`:
//!
//! ```text
//! ((eps + dt) I + dt^2 A_h) v+ = eps v - dt A_h u + dt f(u)
//! u+ = u + dt v+
//! ```
//!
//! i.e. backward Euler on the linear part after eliminating `u+` from the 2x2
//! block. As `eps -> 0` the update for `u` becomes `(I + dt A_h) u+ = u + dt f(u)`,
//! which is exactly the parabolic step.

use crate::error::{check_len, Error, Result};
use crate::linalg::{norm2, LinearSolver};
use crate::nonlinearity::Nonlinearity;
use crate::norms::norm_l2;
use crate::operator::{DiscreteOperator, DENSE_CAP};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Magnitude beyond which a state counts as diverged even while still finite.
const BLOWUP: f64 = 1e150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
    pub eps: f64,
}

impl HyperbolicState {
    pub fn new(u: Vec<f64>, v: Vec<f64>, t: f64, eps: f64) -> Result<Self> {
        check_len(u.len(), v.len())?;
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { u, v, t, eps })
    }

    pub fn rest(n: usize, eps: f64) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            t: 0.0,
            eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicState {
    pub u: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum State {
    Hyperbolic(HyperbolicState),
    Parabolic(ParabolicState),
}

impl State {
    pub fn t(&self) -> f64 {
        match self {
            State::Hyperbolic(s) => s.t,
            State::Parabolic(s) => s.t,
        }
    }

    pub fn u(&self) -> &[f64] {
        match self {
            State::Hyperbolic(s) => &s.u,
            State::Parabolic(s) => &s.u,
        }
    }

    pub fn flow(&self) -> Flow {
        match self {
            State::Hyperbolic(s) => Flow::Hyperbolic { eps: s.eps },
            State::Parabolic(_) => Flow::Parabolic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flow", rename_all = "lowercase")]
pub enum Flow {
    Hyperbolic { eps: f64 },
    Parabolic,
}

impl Flow {
    /// `eps` for the hyperbolic flow, 0 for the parabolic one.
    pub fn eps(&self) -> f64 {
        match self {
            Flow::Hyperbolic { eps } => *eps,
            Flow::Parabolic => 0.0,
        }
    }
}

pub const INTEGRATOR: &str = "imex-euler";

/// Snapshots of one run. `v` is empty for the parabolic flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub flow: Flow,
    pub dt: f64,
    pub stride: usize,
    pub integrator: String,
    pub grid_hash: u64,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Trajectory {
    fn empty(flow: Flow, dt: f64, stride: usize, grid_hash: u64) -> Self {
        Self {
            flow,
            dt,
            stride,
            integrator: INTEGRATOR.into(),
            grid_hash,
            times: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
        }
    }

    fn push(&mut self, state: &State) {
        self.times.push(state.t());
        self.u.push(state.u().to_vec());
        if let State::Hyperbolic(s) = state {
            self.v.push(s.v.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_hyperbolic(&self) -> bool {
        matches!(self.flow, Flow::Hyperbolic { .. })
    }

    /// Time between consecutive snapshots.
    pub fn snapshot_interval(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn state(&self, i: usize) -> State {
        match self.flow {
            Flow::Hyperbolic { eps } => State::Hyperbolic(HyperbolicState {
                u: self.u[i].clone(),
                v: self.v[i].clone(),
                t: self.times[i],
                eps,
            }),
            Flow::Parabolic => State::Parabolic(ParabolicState {
                u: self.u[i].clone(),
                t: self.times[i],
            }),
        }
    }

    pub fn last(&self) -> Option<State> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// Snapshots with `t >= t0`.
    pub fn after(&self, t0: f64) -> Self {
        let start = self.times.partition_point(|&t| t < t0);
        let mut out = self.clone();
        out.times.drain(..start);
        out.u.drain(..start);
        if !out.v.is_empty() {
            out.v.drain(..start);
        }
        out
    }
}

/// Divergence failure of [`integrate`], carrying everything recorded up to the
/// last finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationError {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl std::fmt::Display for IntegrationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({} snapshots kept)",
            self.error,
            self.partial.len()
        )
    }
}

impl std::error::Error for IntegrationError {}

impl From<IntegrationError> for Error {
    fn from(e: IntegrationError) -> Self {
        e.error
    }
}

fn check_finite(fields: &[&[f64]], t: f64, dt: f64) -> Result<()> {
    let ok = fields
        .iter()
        .all(|f| f.iter().all(|v| v.is_finite() && v.abs() < BLOWUP));
    if ok {
        Ok(())
    } else {
        Err(Error::Divergence { t, dt })
    }
}

/// Hyperbolic IMEX step with the block matrix factored once.
pub struct HyperbolicStepper<'a> {
    op: &'a DiscreteOperator,
    nl: &'a Nonlinearity,
    eps: f64,
    dt: f64,
    solver: LinearSolver,
}

impl<'a> HyperbolicStepper<'a> {
    pub fn new(op: &'a DiscreteOperator, nl: &'a Nonlinearity, eps: f64, dt: f64) -> Result<Self> {
        check_len(op.len(), nl.len())?;
        if !(eps > 0.0) || !(dt > 0.0) {
            return Err(Error::Config(format!(
                "hyperbolic step needs eps > 0 and dt > 0, got eps = {eps}, dt = {dt}"
            )));
        }
        let m = op.matrix().scaled_shifted(dt * dt, eps + dt);
        Ok(Self {
            op,
            nl,
            eps,
            dt,
            solver: LinearSolver::new(m)?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, s: &HyperbolicState) -> Result<HyperbolicState> {
        let n = self.op.len();
        check_len(n, s.u.len())?;
        check_len(n, s.v.len())?;
        let (eps, dt) = (self.eps, self.dt);
        let au = self.op.apply(&s.u);
        let fu = self.nl.eval_f(&s.u);
        let rhs: Vec<f64> = (0..n)
            .map(|i| eps * s.v[i] - dt * au[i] + dt * fu[i])
            .collect();
        let t = s.t + dt;
        let v = self
            .solver
            .solve_checked(&rhs)
            .map_err(|e| diverged_or(e, t, dt))?;
        let u: Vec<f64> = s.u.iter().zip(&v).map(|(a, b)| a + dt * b).collect();
        check_finite(&[&u, &v], t, dt)?;
        Ok(HyperbolicState { u, v, t, eps })
    }
}

/// Parabolic IMEX step `(I + dt A_h) u+ = u + dt f(u)`.
pub struct ParabolicStepper<'a> {
    op: &'a DiscreteOperator,
    nl: &'a Nonlinearity,
    dt: f64,
    solver: LinearSolver,
}

impl<'a> ParabolicStepper<'a> {
    pub fn new(op: &'a DiscreteOperator, nl: &'a Nonlinearity, dt: f64) -> Result<Self> {
        check_len(op.len(), nl.len())?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let m = op.matrix().scaled_shifted(dt, 1.0);
        Ok(Self {
            op,
            nl,
            dt,
            solver: LinearSolver::new(m)?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, s: &ParabolicState) -> Result<ParabolicState> {
        check_len(self.op.len(), s.u.len())?;
        let dt = self.dt;
        let fu = self.nl.eval_f(&s.u);
        let rhs: Vec<f64> = s.u.iter().zip(&fu).map(|(a, b)| a + dt * b).collect();
        let t = s.t + dt;
        let u = self
            .solver
            .solve_checked(&rhs)
            .map_err(|e| diverged_or(e, t, dt))?;
        check_finite(&[&u], t, dt)?;
        Ok(ParabolicState { u, t })
    }
}

// A non-finite right-hand side makes the iterative solver fail; report that as divergence.
fn diverged_or(e: Error, t: f64, dt: f64) -> Error {
    match e {
        Error::NoConvergence { residual, .. } if !residual.is_finite() => {
            Error::Divergence { t, dt }
        }
        other => other,
    }
}

/// One hyperbolic step (builds and discards the factorization).
pub fn step_hyperbolic(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    s: &HyperbolicState,
    dt: f64,
) -> Result<HyperbolicState> {
    HyperbolicStepper::new(op, nl, s.eps, dt)?.step(s)
}

/// One parabolic step (builds and discards the factorization).
pub fn step_parabolic(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    s: &ParabolicState,
    dt: f64,
) -> Result<ParabolicState> {
    ParabolicStepper::new(op, nl, dt)?.step(s)
}

enum Stepper<'a> {
    Hyperbolic(HyperbolicStepper<'a>),
    Parabolic(ParabolicStepper<'a>),
}

impl<'a> Stepper<'a> {
    fn new(op: &'a DiscreteOperator, nl: &'a Nonlinearity, flow: Flow, dt: f64) -> Result<Self> {
        Ok(match flow {
            Flow::Hyperbolic { eps } => Stepper::Hyperbolic(HyperbolicStepper::new(op, nl, eps, dt)?),
            Flow::Parabolic => Stepper::Parabolic(ParabolicStepper::new(op, nl, dt)?),
        })
    }

    fn step(&self, s: &State) -> Result<State> {
        match (self, s) {
            (Stepper::Hyperbolic(h), State::Hyperbolic(x)) => h.step(x).map(State::Hyperbolic),
            (Stepper::Parabolic(p), State::Parabolic(x)) => p.step(x).map(State::Parabolic),
            _ => unreachable!("stepper built from the state's own flow"),
        }
    }
}

/// Number of steps of size `dt` covering `duration`, treating near-multiples as exact.
pub fn step_count(duration: f64, dt: f64) -> usize {
    let r = duration / dt;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * r.max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

/// Integrates over `duration` from `initial`, recording every `stride`-th state
/// plus the initial and final ones.
///
/// Uses `ceil(duration / dt)` steps; when `duration` is not a multiple of `dt`
/// the final step is shortened to land on `t0 + duration`. Snapshot times are
/// `t0 + i dt`, computed by multiplication so long runs do not drift.
pub fn integrate(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    initial: State,
    duration: f64,
    dt: f64,
    stride: usize,
) -> std::result::Result<Trajectory, IntegrationError> {
    let flow = initial.flow();
    let mut traj = Trajectory::empty(flow, dt, stride.max(1), op.grid().hash());
    let fail = |error: Error, traj: &Trajectory| IntegrationError {
        error,
        partial: Box::new(traj.clone()),
    };
    if !(duration >= 0.0) || !(dt > 0.0) || stride == 0 {
        return Err(fail(
            Error::Config(format!(
                "integrate needs duration >= 0, dt > 0, stride >= 1; got {duration}, {dt}, {stride}"
            )),
            &traj,
        ));
    }
    if let Err(e) = check_len(op.len(), initial.u().len()) {
        return Err(fail(e, &traj));
    }
    traj.push(&initial);
    let steps = step_count(duration, dt);
    if steps == 0 {
        return Ok(traj);
    }
    let stepper = Stepper::new(op, nl, flow, dt).map_err(|e| fail(e, &traj))?;
    let t0 = initial.t();
    let last_dt = duration - (steps - 1) as f64 * dt;
    let short = (last_dt - dt).abs() > 1e-9 * dt;
    let mut state = initial;
    for i in 1..=steps {
        let next = if i == steps && short {
            Stepper::new(op, nl, flow, last_dt).and_then(|s| s.step(&state))
        } else {
            stepper.step(&state)
        };
        state = next.map_err(|e| fail(e, &traj))?;
        let t = if i == steps { t0 + duration } else { t0 + i as f64 * dt };
        match &mut state {
            State::Hyperbolic(s) => s.t = t,
            State::Parabolic(s) => s.t = t,
        }
        if i % traj.stride == 0 || i == steps {
            traj.push(&state);
        }
    }
    Ok(traj)
}

/// `w = (-v - A_h u + f(u)) / eps`, the time derivative of `v`.
pub fn acceleration(op: &DiscreteOperator, nl: &Nonlinearity, s: &HyperbolicState) -> Vec<f64> {
    let au = op.apply(&s.u);
    let fu = nl.eval_f(&s.u);
    (0..s.u.len())
        .map(|i| (-s.v[i] - au[i] + fu[i]) / s.eps)
        .collect()
}

/// Parabolic vector field `-A_h u + f(u)`.
pub fn parabolic_field(op: &DiscreteOperator, nl: &Nonlinearity, u: &[f64]) -> Vec<f64> {
    let au = op.apply(u);
    let fu = nl.eval_f(u);
    fu.iter().zip(&au).map(|(f, a)| f - a).collect()
}

/// Lift `u -> (u, -A_h u + f(u))` of the parabolic phase space into the hyperbolic one.
pub fn gamma_lift(op: &DiscreteOperator, nl: &Nonlinearity, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(op.len(), u.len())?;
    Ok((u.to_vec(), parabolic_field(op, nl, u)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub u: Vec<f64>,
    /// `|A_h u - f(u)|_{L^2}`.
    pub residual: f64,
    pub iterations: usize,
}

/// Newton iteration for `A_h u = f(u)` with a dense LU of `A_h - diag(d_u f(u))`.
///
/// The Jacobian is indefinite at unstable equilibria, hence the dense path;
/// restricted to grids below the dense cap.
pub fn newton_equilibrium(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Equilibrium> {
    let n = op.len();
    check_len(n, guess.len())?;
    if n > DENSE_CAP {
        return Err(Error::DenseCapExceeded { n, cap: DENSE_CAP });
    }
    let base = op.matrix().to_dense();
    let grid = op.grid();
    let mut u = guess.to_vec();
    let mut residual = norm_l2(&parabolic_field(op, nl, &u), grid)?;
    for it in 0..=max_iter {
        if residual <= tol {
            return Ok(Equilibrium {
                u,
                residual,
                iterations: it,
            });
        }
        if it == max_iter {
            break;
        }
        let mut jac: DMatrix<f64> = base.clone();
        let dfu = nl.eval_dfu(&u);
        for (i, d) in dfu.iter().enumerate() {
            jac[(i, i)] -= d;
        }
        let r = DVector::from_vec(parabolic_field(op, nl, &u));
        let delta = jac.lu().solve(&r).ok_or(Error::NotPositiveDefinite {
            pivot: 0,
            value: 0.0,
        })?;
        for (x, d) in u.iter_mut().zip(delta.iter()) {
            *x += d;
        }
        residual = norm_l2(&parabolic_field(op, nl, &u), grid)?;
        if !residual.is_finite() || norm2(&u) > BLOWUP {
            return Err(Error::Divergence {
                t: it as f64,
                dt: 0.0,
            });
        }
    }
    Err(Error::NoConvergence {
        method: "newton equilibrium",
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CoefficientField, Grid};
    use crate::operator::build_operator;
    use std::f64::consts::PI;

    fn laplacian(n: usize) -> DiscreteOperator {
        let g = Grid::with_bounds(&[0.0], &[PI], &[n]).unwrap();
        build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn rest_state_is_fixed() {
        let op = laplacian(16);
        let nl = Nonlinearity::zero(16);
        let s = step_hyperbolic(&op, &nl, &HyperbolicState::rest(16, 0.1), 1e-2).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|&v| v == 0.0));
        let p = step_parabolic(&op, &nl, &ParabolicState { u: vec![0.0; 16], t: 0.0 }, 1e-2).unwrap();
        assert!(p.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn snapshot_counting() {
        let op = laplacian(8);
        let nl = Nonlinearity::zero(8);
        let s0 = State::Parabolic(ParabolicState { u: vec![1.0; 8], t: 0.0 });
        let t = integrate(&op, &nl, s0.clone(), 0.0, 0.1, 1).unwrap();
        assert_eq!(t.len(), 1);
        let t = integrate(&op, &nl, s0.clone(), 1.0, 0.1, 1).unwrap();
        assert_eq!(t.len(), 11);
        assert_eq!(*t.times.last().unwrap(), 1.0);
        let t = integrate(&op, &nl, s0.clone(), 1.0, 0.1, 3).unwrap();
        assert_eq!(t.len(), 5); // 0, 3, 6, 9, 10
        let t = integrate(&op, &nl, s0, 0.25, 0.1, 1).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(*t.times.last().unwrap(), 0.25);
    }

    #[test]
    fn parabolic_single_mode_decay() {
        let op = laplacian(63);
        let nl = Nonlinearity::zero(63);
        let lam = op.lambda1().unwrap();
        let u0 = op.grid().sample(|x| x[0].sin());
        let mut errs = Vec::new();
        for dt in [2e-3, 1e-3] {
            let s = State::Parabolic(ParabolicState { u: u0.clone(), t: 0.0 });
            let tr = integrate(&op, &nl, s, 1.0, dt, 1000).unwrap();
            let exact: Vec<f64> = u0.iter().map(|v| v * (-lam).exp()).collect();
            let diff: Vec<f64> = tr.u.last().unwrap().iter().zip(&exact).map(|(a, b)| a - b).collect();
            errs.push(norm2(&diff) / norm2(&exact));
        }
        assert!(errs[1] < 1e-3);
        assert!((errs[0] / errs[1] - 2.0).abs() < 0.1, "{errs:?}");
    }

    #[test]
    fn semigroup_is_bitwise() {
        let op = laplacian(32);
        let nl = Nonlinearity::chafee_infante(op.grid(), 2.0, 1.0).unwrap();
        let u0 = op.grid().sample(|x| 0.3 * x[0].sin() + 0.1 * (2.0 * x[0]).sin());
        let s0 = State::Hyperbolic(HyperbolicState::new(u0, vec![0.0; 32], 0.0, 0.1).unwrap());
        let whole = integrate(&op, &nl, s0.clone(), 0.5, 1e-2, 1).unwrap();
        let first = integrate(&op, &nl, s0, 0.2, 1e-2, 1).unwrap();
        let second = integrate(&op, &nl, first.last().unwrap(), 0.3, 1e-2, 1).unwrap();
        assert_eq!(whole.u.last(), second.u.last());
        assert_eq!(whole.v.last(), second.v.last());
    }

    #[test]
    fn acceleration_and_lift_algebra() {
        let op = laplacian(16);
        let nl = Nonlinearity::zero(16);
        let v0: Vec<f64> = (0..16).map(|i| i as f64 - 3.0).collect();
        let s = HyperbolicState::new(vec![0.0; 16], v0.clone(), 0.0, 0.25).unwrap();
        let w = acceleration(&op, &nl, &s);
        for (a, b) in w.iter().zip(&v0) {
            assert_eq!(*a, -b / 0.25);
        }
        let u = op.grid().sample(|x| x[0].sin());
        let (lu, lv) = gamma_lift(&op, &nl, &u).unwrap();
        assert_eq!(lu, u);
        let au = op.apply(&u);
        assert!(lv.iter().zip(&au).all(|(a, b)| *a == -b));
    }

    #[test]
    fn chafee_infante_equilibrium_by_flow_and_newton() {
        let op = laplacian(63);
        let nl = Nonlinearity::chafee_infante(op.grid(), 2.0, 1.0).unwrap();
        let bump = op.grid().sample(|x| 0.05 * x[0].sin());
        let tr = integrate(
            &op,
            &nl,
            State::Parabolic(ParabolicState { u: bump, t: 0.0 }),
            40.0,
            1e-2,
            4000,
        )
        .unwrap();
        let end = tr.u.last().unwrap().clone();
        assert!(end.iter().all(|&v| v > 0.0));
        let eq = newton_equilibrium(&op, &nl, &end, 1e-10, 20).unwrap();
        assert!(eq.residual <= 1e-10);
        let diff: Vec<f64> = eq.u.iter().zip(&end).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) / norm2(&eq.u) < 1e-6);

        // hyperbolic step leaves the equilibrium in place
        let s = HyperbolicState::new(eq.u.clone(), vec![0.0; 63], 0.0, 0.1).unwrap();
        let next = step_hyperbolic(&op, &nl, &s, 1e-3).unwrap();
        let du: f64 = next.u.iter().zip(&eq.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(du < 1e-12, "{du}");
    }

    #[test]
    fn divergence_is_reported_with_partial() {
        let op = laplacian(8);
        let nl = Nonlinearity::polynomial(
            [vec![0.0; 8], vec![0.0; 8], vec![0.0; 8], vec![1.0; 8]],
            1.0,
            vec![0.0; 8],
        )
        .unwrap();
        let s = State::Parabolic(ParabolicState { u: vec![5.0; 8], t: 0.0 });
        let err = integrate(&op, &nl, s, 10.0, 0.1, 1).unwrap_err();
        assert!(matches!(err.error, Error::Divergence { .. }));
        assert!(!err.partial.is_empty());
        assert!(err.partial.u.iter().flatten().all(|v| v.is_finite()));
    }
}
