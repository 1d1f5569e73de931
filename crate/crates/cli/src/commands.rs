use dampwave::attractor::{approximate_attractor, eps_sweep, sample_ensemble};
use dampwave::dynamics::{integrate, Flow, State, Trajectory};
use dampwave::energy::{
    default_delta, f_eps_identity_residual, f_zero_identity_residual, fit_order, tilde_v_identity_residual,
    uniform_bound_report, v_identity_residual, EnergyReport, OrderFit,
};
use dampwave::io::{
    write_attractor_norms_csv, write_energy_csv, write_fields_csv, write_snapshots, write_sweep_csv,
    write_tail_profile_csv, write_trajectory_norms_csv, SnapshotSet,
};
use dampwave::nonlinearity::audit::random_trial_pairs;
use dampwave::nonlinearity::{dissipativity_audit, growth_audit, GrowthAuditConfig};
use dampwave::norms::norm_l2;
use dampwave::oracle::{dense_linear_solution, dense_parabolic_solution};
use dampwave::tails::{tail_fit, tail_profile};
use serde::Serialize;
use serde_json::json;
use std::time::Instant;

use crate::config::{read_attractor, read_flow, read_output, read_problem, read_sweep, Config, FlowSpec, Problem};
use crate::manifest::{now_unix, sha256_hex, Manifest, Outputs};
use crate::{CliError, Common};

pub enum Status {
    Pass,
    Fail(String),
    Error(String),
}

impl Status {
    pub fn code(&self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail(_) => 1,
            Status::Error(_) => 3,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail(_) => "audit-failure",
            Status::Error(_) => "runtime-error",
        }
    }

    fn from_failures(failures: Vec<String>) -> Self {
        if failures.is_empty() {
            Status::Pass
        } else {
            Status::Fail(failures.join("; "))
        }
    }
}

struct Run {
    outputs: Outputs,
    status: Status,
    grid_hash: u64,
}

struct Ctx {
    seed: u64,
    snapshots: bool,
}

type Job = Box<dyn FnOnce(&Ctx) -> Result<Run, CliError> + Send>;

pub fn execute(name: &str, common: &Common) -> Result<Status, CliError> {
    let text = std::fs::read(&common.config).map_err(|source| CliError::Io {
        path: common.config.clone(),
        source,
    })?;
    let text_str = String::from_utf8(text.clone())
        .map_err(|_| CliError::Config(format!("{} is not UTF-8", common.config.display())))?;
    let mut cfg = Config::parse(&text_str)?;
    let out = read_output(&mut cfg, common.out.clone(), common.seed);
    let job = match name {
        "simulate" => simulate(&mut cfg)?,
        "energy-audit" => energy_audit(&mut cfg)?,
        "growth-audit" => growth(&mut cfg)?,
        "tails" => tails(&mut cfg)?,
        "attractor" => attractor(&mut cfg)?,
        "sweep" => sweep(&mut cfg, out.as_ref().map_or(0, |o| o.seed))?,
        "oracle-check" => oracle_check(&mut cfg)?,
        other => unreachable!("unknown subcommand {other}"),
    };
    cfg.finish()?;
    let (Some(job), Some(out)) = (job, out) else {
        return Err(CliError::Config("incomplete configuration".into()));
    };
    if common.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let ctx = Ctx {
        seed: out.seed,
        snapshots: out.snapshots,
    };
    let start = Instant::now();
    let run = pool.install(|| job(&ctx))?;
    let manifest = Manifest {
        tool: "dampwave",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.to_string(),
        config_path: common.config.display().to_string(),
        config_hash: sha256_hex(&text),
        grid_hash: format!("{:016x}", run.grid_hash),
        seed: out.seed,
        threads,
        timestamp_unix: now_unix(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        status: run.status.label(),
        outputs: run.outputs.names(),
    };
    let mut outputs = run.outputs;
    outputs.json("manifest.json", &manifest)?;
    outputs.write_all(&out.dir)?;
    Ok(run.status)
}

fn snapshots_file(outputs: &mut Outputs, ctx: &Ctx, name: &str, set: &SnapshotSet) -> Result<(), CliError> {
    if ctx.snapshots {
        outputs.add(name, |b| write_snapshots(b, set))?;
    }
    Ok(())
}

fn final_fields(outputs: &mut Outputs, p: &Problem, traj: &Trajectory) -> Result<(), CliError> {
    let Some(last) = traj.u.last() else { return Ok(()) };
    let mut fields: Vec<(&str, &[f64])> = vec![("u", last)];
    if let Some(v) = traj.v.last() {
        fields.push(("v", v));
    }
    outputs.add("final_state.csv", |b| write_fields_csv(b, p.op.grid(), &fields))
}

fn simulate(cfg: &mut Config) -> Result<Option<Job>, CliError> {
    let p = read_problem(cfg)?;
    let flow = read_flow(cfg, true);
    let (Some(p), Some(flow)) = (p, flow) else { return Ok(None) };
    Ok(Some(Box::new(move |ctx: &Ctx| {
        let init = flow.initial_state(&p)?;
        let (traj, status) = match integrate(&p.op, &p.nl, init, flow.duration, flow.dt, flow.stride) {
            Ok(t) => (t, Status::Pass),
            Err(e) => (*e.partial.clone(), Status::Error(e.to_string())),
        };
        let mut outputs = Outputs::default();
        outputs.add("trajectory_norms.csv", |b| write_trajectory_norms_csv(b, &traj, &p.op))?;
        final_fields(&mut outputs, &p, &traj)?;
        snapshots_file(&mut outputs, ctx, "trajectory.dwsnap", &SnapshotSet::from_trajectory(&traj))?;
        outputs.json(
            "simulate.json",
            &json!({
                "flow": traj.flow,
                "integrator": traj.integrator,
                "dt": traj.dt,
                "stride": traj.stride,
                "snapshots": traj.len(),
                "t_end": traj.times.last(),
                "lambda1": p.op.lambda1()?,
            }),
        )?;
        Ok(Run {
            outputs,
            status,
            grid_hash: p.op.grid().hash(),
        })
    })))
}

#[derive(Serialize)]
struct IdentityLadder {
    functional: &'static str,
    delta: Option<f64>,
    worst_residuals: Vec<f64>,
    fit: Option<OrderFit>,
    passed: bool,
}

fn ladder_entry(
    functional: &'static str,
    delta: Option<f64>,
    dts: &[f64],
    worst: Vec<f64>,
    min_order: f64,
    min_r2: f64,
) -> IdentityLadder {
    // a ladder whose residuals all vanish (equilibrium data) has nothing to fit
    let exact = worst.iter().all(|w| *w <= 1e-12);
    let fit = fit_order(dts, &worst).ok();
    let passed = exact || fit.as_ref().is_some_and(|f| f.order >= min_order && f.r2 >= min_r2);
    IdentityLadder {
        functional,
        delta,
        worst_residuals: worst,
        fit,
        passed,
    }
}

fn energy_audit(cfg: &mut Config) -> Result<Option<Job>, CliError> {
    let p = read_problem(cfg)?;
    let flow = read_flow(cfg, true);
    let dts = cfg.req_f64_list("energy", "dt_ladder");
    let delta = cfg.opt_f64("energy", "delta");
    let min_order = cfg.opt_f64("energy", "min_order").unwrap_or(1.0);
    let min_r2 = cfg.opt_f64("energy", "min_r2").unwrap_or(0.98);
    if let Some(d) = &dts {
        if d.len() < 2 || d.iter().any(|v| !(*v > 0.0)) {
            cfg.problem("`energy.dt_ladder` needs at least two positive steps".into());
        }
    }
    let (Some(p), Some(flow), Some(dts)) = (p, flow, dts) else { return Ok(None) };
    Ok(Some(Box::new(move |_ctx: &Ctx| {
        let lambda1 = p.op.lambda1()?;
        let u0 = flow.initial_u(p.op.grid())?;
        let parabolic_delta = delta.unwrap_or_else(|| default_delta(lambda1, 0.0));
        let hyperbolic = matches!(flow.flow, Flow::Hyperbolic { .. });
        let eps_delta = delta.unwrap_or_else(|| default_delta(lambda1, flow.flow.eps()));
        let mut worst = vec![Vec::new(); 4];
        let mut finest: Vec<EnergyReport> = Vec::new();
        let mut bound = None;
        for (k, &dt) in dts.iter().enumerate() {
            let last = k + 1 == dts.len();
            if hyperbolic {
                let init = flow.initial_state(&p)?;
                let tr = integrate(&p.op, &p.nl, init, flow.duration, dt, flow.stride).map_err(dampwave::Error::from)?;
                let reps = [
                    tilde_v_identity_residual(&tr, &p.op, &p.nl)?,
                    v_identity_residual(&tr, &p.op, &p.nl)?,
                    f_eps_identity_residual(&tr, eps_delta, &p.op, &p.nl)?,
                ];
                for (j, r) in reps.iter().enumerate() {
                    worst[j].push(r.worst_residual);
                }
                if last {
                    let ub = uniform_bound_report(&tr, &p.op, &p.nl)?;
                    bound = Some(json!({"r": ub.trajectory_bound, "s": ub.uniform_bound}));
                    finest.extend(reps);
                    finest.push(ub);
                }
            }
            let init = State::Parabolic(dampwave::dynamics::ParabolicState { u: u0.clone(), t: 0.0 });
            let tr = integrate(&p.op, &p.nl, init, flow.duration, dt, flow.stride).map_err(dampwave::Error::from)?;
            let rep = f_zero_identity_residual(&tr, parabolic_delta, &p.op, &p.nl)?;
            worst[3].push(rep.worst_residual);
            if last {
                finest.push(rep);
            }
        }
        let [a, b, c, z]: [Vec<f64>; 4] = worst.try_into().expect("four ladders");
        let mut ladders = Vec::new();
        if hyperbolic {
            ladders.push(ladder_entry("tilde_v", None, &dts, a, min_order, min_r2));
            ladders.push(ladder_entry("v", None, &dts, b, min_order, min_r2));
            ladders.push(ladder_entry("f_eps", Some(eps_delta), &dts, c, min_order, min_r2));
        }
        ladders.push(ladder_entry("f_zero", Some(parabolic_delta), &dts, z, min_order, min_r2));
        let failures: Vec<String> = ladders
            .iter()
            .filter(|l| !l.passed)
            .map(|l| match &l.fit {
                Some(f) => format!("{}: order {:.4}, r2 {:.4}", l.functional, f.order, f.r2),
                None => format!("{}: no order fit", l.functional),
            })
            .collect();
        let mut outputs = Outputs::default();
        outputs.add("energy.csv", |b| write_energy_csv(b, &finest))?;
        outputs.json(
            "energy_report.json",
            &json!({
                "flow": flow.flow,
                "duration": flow.duration,
                "dt_ladder": dts,
                "min_order": min_order,
                "min_r2": min_r2,
                "identities": ladders,
                "uniform_bound": bound,
                "finest": finest,
            }),
        )?;
        Ok(Run {
            outputs,
            status: Status::from_failures(failures),
            grid_hash: p.op.grid().hash(),
        })
    })))
}

fn growth(cfg: &mut Config) -> Result<Option<Job>, CliError> {
    let p = read_problem(cfg)?;
    let pairs = cfg.opt_u64("audit", "pairs").unwrap_or(1000) as usize;
    let starts = cfg.opt_u64("audit", "starts").unwrap_or(8) as usize;
    let u_max = cfg.opt_f64("audit", "u_max").unwrap_or(10.0);
    let samples = cfg.opt_u64("audit", "samples").unwrap_or(2001) as usize;
    let Some(p) = p else { return Ok(None) };
    Ok(Some(Box::new(move |ctx: &Ctx| {
        let audit_cfg = GrowthAuditConfig::estimate(&p.op, starts, ctx.seed)?;
        let trials = random_trial_pairs(p.op.grid(), pairs, ctx.seed.wrapping_add(1));
        let growth = growth_audit(&p.nl, &p.op, &audit_cfg, &trials)?;
        let diss = dissipativity_audit(&p.nl, u_max, samples)?;
        let mut failures = Vec::new();
        if let Err(e) = growth.check() {
            failures.push(e.to_string());
        }
        if let Err(e) = diss.check() {
            failures.push(e.to_string());
        }
        let mut outputs = Outputs::default();
        outputs.json(
            "growth_audit.json",
            &json!({
                "embedding": audit_cfg,
                "growth": growth,
                "dissipativity": diss,
                "dfu_constant": p.nl.dfu_constant(),
                "c_bar": p.nl.c_bar(),
                "passed": failures.is_empty(),
            }),
        )?;
        Ok(Run {
            outputs,
            status: Status::from_failures(failures),
            grid_hash: p.op.grid().hash(),
        })
    })))
}

fn tails(cfg: &mut Config) -> Result<Option<Job>, CliError> {
    let p = read_problem(cfg)?;
    let flow = read_flow(cfg, true);
    let ks = cfg.req_u64_list("tails", "ks");
    if let Some(f) = &flow {
        if !matches!(f.flow, Flow::Hyperbolic { .. }) {
            cfg.problem("tails needs `flow.kind = \"hyperbolic\"`".into());
        }
    }
    let ks: Option<Vec<u32>> = ks.map(|k| k.into_iter().map(|v| u32::try_from(v).unwrap_or(u32::MAX)).collect());
    let (Some(p), Some(flow), Some(ks)) = (p, flow, ks) else { return Ok(None) };
    Ok(Some(Box::new(move |ctx: &Ctx| {
        let init = flow.initial_state(&p)?;
        let traj = integrate(&p.op, &p.nl, init, flow.duration, flow.dt, flow.stride).map_err(dampwave::Error::from)?;
        let profile = tail_profile(&traj, &ks, &p.op)?;
        let fit = tail_fit(&profile)?;
        let violations = fit.envelope_violations(&profile);
        let nonincreasing = fit.c.windows(2).all(|w| w[1] <= w[0]);
        let mut failures = Vec::new();
        if !nonincreasing {
            failures.push(format!("plateaus c_k not nonincreasing in k: {:?}", fit.c));
        }
        if violations > 0 {
            failures.push(format!("{violations} profile samples above fit + 3 residual"));
        }
        let mut outputs = Outputs::default();
        outputs.add("tail_profile.csv", |b| write_tail_profile_csv(b, &profile))?;
        snapshots_file(&mut outputs, ctx, "trajectory.dwsnap", &SnapshotSet::from_trajectory(&traj))?;
        outputs.json(
            "tail_fit.json",
            &json!({
                "fit": fit,
                "nonincreasing": nonincreasing,
                "envelope_violations": violations,
                "passed": failures.is_empty(),
            }),
        )?;
        Ok(Run {
            outputs,
            status: Status::from_failures(failures),
            grid_hash: p.op.grid().hash(),
        })
    })))
}

fn read_flow_kind(cfg: &mut Config) -> Option<Flow> {
    let kind = cfg.req_str("flow", "kind");
    match kind.as_deref()? {
        "hyperbolic" => Some(Flow::Hyperbolic {
            eps: cfg.req_f64("flow", "eps")?,
        }),
        _ => Some(Flow::Parabolic),
    }
}

fn attractor(cfg: &mut Config) -> Result<Option<Job>, CliError> {
    let p = read_problem(cfg)?;
    let flow = read_flow_kind(cfg);
    let att = read_attractor(cfg);
    let (Some(p), Some(flow), Some((ens, parab, spec))) = (p, flow, att) else { return Ok(None) };
    Ok(Some(Box::new(move |ctx: &Ctx| {
        let ens_spec = if flow == Flow::Parabolic { parab } else { ens };
        let ensemble = sample_ensemble(&p.op, &ens_spec, flow, ctx.seed)?;
        let set = approximate_attractor(&p.op, &p.nl, &ensemble, &spec)?;
        let sup_vw = match flow {
            Flow::Hyperbolic { .. } => Some(set.sup_vw_bound(&p.op, &p.nl)?),
            Flow::Parabolic => None,
        };
        let mut outputs = Outputs::default();
        outputs.add("attractor.csv", |b| write_attractor_norms_csv(b, &set, &p.op))?;
        snapshots_file(&mut outputs, ctx, "attractor.dwsnap", &SnapshotSet::from_attractor(&set))?;
        outputs.json(
            "attractor.json",
            &json!({
                "eps": set.eps,
                "ensemble": set.ensemble,
                "seed": set.seed,
                "t0": set.t0,
                "t_sample": set.t_sample,
                "dt": set.dt,
                "stride": set.stride,
                "snapshots": set.len(),
                "sup_z_bound": set.sup_z_bound(&p.op)?,
                "sup_vw_bound": sup_vw,
            }),
        )?;
        Ok(Run {
            outputs,
            status: Status::Pass,
            grid_hash: p.op.grid().hash(),
        })
    })))
}

fn sweep(cfg: &mut Config, seed: u64) -> Result<Option<Job>, CliError> {
    let p = read_problem(cfg)?;
    let spec = read_sweep(cfg, seed);
    let (Some(p), Some(spec)) = (p, spec) else { return Ok(None) };
    Ok(Some(Box::new(move |_ctx: &Ctx| {
        let report = eps_sweep(&p.op, &p.nl, &spec.config)?;
        let d: Vec<f64> = report.rows.iter().map(|r| r.semidistance).collect();
        let monotone = report.worst_step_ratio <= 1.0 + spec.slack;
        let final_ratio = match (d.first(), d.last()) {
            (Some(a), Some(b)) if d.len() > 1 && *a > 0.0 => Some(b / a),
            _ => None,
        };
        let mut failures = Vec::new();
        if !monotone {
            failures.push(format!(
                "semidistance grew by a factor {:.4} in one step (slack {})",
                report.worst_step_ratio, spec.slack
            ));
        }
        if let Some(r) = final_ratio.filter(|r| *r > spec.max_final_ratio) {
            failures.push(format!("final/initial semidistance {r:.4} exceeds {}", spec.max_final_ratio));
        }
        let mut outputs = Outputs::default();
        outputs.add("sweep.csv", |b| write_sweep_csv(b, &report))?;
        outputs.json(
            "sweep.json",
            &json!({
                "config": spec.config,
                "report": report,
                "slack": spec.slack,
                "max_final_ratio": spec.max_final_ratio,
                "monotone_within_slack": monotone,
                "final_ratio": final_ratio,
                "passed": failures.is_empty(),
            }),
        )?;
        Ok(Run {
            outputs,
            status: Status::from_failures(failures),
            grid_hash: p.op.grid().hash(),
        })
    })))
}

/// Terminal relative L2 error of the integrator against the dense oracle.
fn oracle_error(p: &Problem, shifted: &dampwave::DiscreteOperator, flow: &FlowSpec, dt: f64) -> Result<(f64, Vec<f64>, Vec<f64>), CliError> {
    let init = flow.initial_state(p)?;
    let t = flow.duration;
    let reference = match &init {
        State::Hyperbolic(s) => dense_linear_solution(shifted, s.eps, &s.u, &s.v, t)?.0,
        State::Parabolic(s) => dense_parabolic_solution(shifted, &s.u, t)?,
    };
    let traj = integrate(&p.op, &p.nl, init, t, dt, usize::MAX).map_err(dampwave::Error::from)?;
    let u = traj.u.last().expect("trajectory keeps its end point").clone();
    let g = p.op.grid();
    let diff: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
    let scale = norm_l2(&reference, g)?;
    let err = norm_l2(&diff, g)? / if scale > 0.0 { scale } else { 1.0 };
    Ok((err, u, reference))
}

fn oracle_check(cfg: &mut Config) -> Result<Option<Job>, CliError> {
    let p = read_problem(cfg)?;
    let flow = read_flow(cfg, true);
    let tolerance = cfg.opt_f64("oracle", "tolerance").unwrap_or(1e-3);
    if cfg.has("nonlinearity", "lambda_width") {
        cfg.problem("oracle-check needs a spatially constant linear coefficient".into());
    }
    let (Some(p), Some(flow)) = (p, flow) else { return Ok(None) };
    let [c0, c1, c2, c3] = p.nl.coeffs();
    let lambda = c1.first().copied().unwrap_or(0.0);
    if c0.iter().chain(c2).chain(c3).any(|v| *v != 0.0) || c1.iter().any(|v| *v != lambda) {
        return Err(CliError::Config(
            "oracle-check needs `nonlinearity.family` = \"zero\" or \"linear\" with constant lambda".into(),
        ));
    }
    Ok(Some(Box::new(move |_ctx: &Ctx| {
        // f(u) = lambda u moves into the operator: A_h - lambda I
        let shifted = p.op.shifted(-lambda)?;
        let l1 = shifted.lambda1()?;
        if !(l1 > 0.0) {
            return Err(CliError::Config(format!(
                "linear coefficient {lambda} makes A_h - lambda I indefinite (lowest eigenvalue {l1})"
            )));
        }
        let (err, u, reference) = oracle_error(&p, &shifted, &flow, flow.dt)?;
        let (err_half, _, _) = oracle_error(&p, &shifted, &flow, flow.dt / 2.0)?;
        let ratio = err / err_half;
        let mut failures = Vec::new();
        if !(err <= tolerance) {
            failures.push(format!("relative L2 error {err:.3e} exceeds {tolerance:.1e}"));
        }
        let mut outputs = Outputs::default();
        outputs.add("oracle.csv", |b| {
            write_fields_csv(b, p.op.grid(), &[("u_integrator", &u), ("u_oracle", &reference)])
        })?;
        outputs.json(
            "oracle.json",
            &json!({
                "flow": flow.flow,
                "t": flow.duration,
                "dt": flow.dt,
                "relative_l2_error": err,
                "relative_l2_error_half_dt": err_half,
                "halving_ratio": ratio,
                "tolerance": tolerance,
                "passed": failures.is_empty(),
            }),
        )?;
        Ok(Run {
            outputs,
            status: Status::from_failures(failures),
            grid_hash: p.op.grid().hash(),
        })
    })))
}
