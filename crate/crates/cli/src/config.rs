//! Experiment configuration: TOML-syntax sections of flat key/value pairs,
//! validated against a fixed schema. Every unknown key, missing key and type
//! error is collected before reporting, so one run lists all problems.

use dampwave::attractor::{AttractorSpec, EnsembleSpec, SweepConfig};
use dampwave::dynamics::{gamma_lift, Flow, HyperbolicState, ParabolicState, State};
use dampwave::{build_operator, CoefficientField, DiscreteOperator, Grid, Nonlinearity};
use std::collections::BTreeMap;
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Copy)]
enum Kind {
    Float,
    FloatList,
    Int,
    IntList,
    Str(&'static [&'static str]),
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Float => "a number".into(),
            Kind::FloatList => "a number or a list of numbers".into(),
            Kind::Int => "a nonnegative integer".into(),
            Kind::IntList => "a nonnegative integer or a list of them".into(),
            Kind::Str([]) => "a string".into(),
            Kind::Str(opts) => format!("one of {}", opts.join(", ")),
        }
    }
}

const FAMILIES: &[&str] = &["cubic", "linear", "zero"];
const FLOWS: &[&str] = &["hyperbolic", "parabolic"];
const INITIAL: &[&str] = &["sine", "bump", "zero"];
const VELOCITY: &[&str] = &["zero", "lift"];

/// Every section and key the format knows, with its value type.
const SCHEMA: &[(&str, &[(&str, Kind)])] = &[
    ("grid", &[("lower", Kind::FloatList), ("upper", Kind::FloatList), ("counts", Kind::IntList)]),
    ("coefficients", &[("a", Kind::Float), ("beta", Kind::Float), ("a_variation", Kind::Float)]),
    (
        "nonlinearity",
        &[
            ("family", Kind::Str(FAMILIES)),
            ("lambda", Kind::Float),
            ("lambda_width", Kind::Float),
            ("gamma", Kind::Float),
            ("g", Kind::Float),
            ("mu_bar", Kind::Float),
            ("c", Kind::Float),
        ],
    ),
    (
        "flow",
        &[
            ("kind", Kind::Str(FLOWS)),
            ("eps", Kind::Float),
            ("dt", Kind::Float),
            ("duration", Kind::Float),
            ("stride", Kind::Int),
            ("initial", Kind::Str(INITIAL)),
            ("amplitude", Kind::Float),
            ("mode", Kind::Int),
            ("radius", Kind::Float),
            ("center", Kind::FloatList),
            ("velocity", Kind::Str(VELOCITY)),
        ],
    ),
    (
        "energy",
        &[
            ("dt_ladder", Kind::FloatList),
            ("delta", Kind::Float),
            ("min_order", Kind::Float),
            ("min_r2", Kind::Float),
        ],
    ),
    (
        "audit",
        &[("pairs", Kind::Int), ("starts", Kind::Int), ("u_max", Kind::Float), ("samples", Kind::Int)],
    ),
    ("tails", &[("ks", Kind::IntList)]),
    ("oracle", &[("tolerance", Kind::Float)]),
    (
        "attractor",
        &[
            ("members", Kind::Int),
            ("parabolic_members", Kind::Int),
            ("modes", Kind::Int),
            ("radius", Kind::Float),
            ("decades", Kind::Float),
            ("t0", Kind::Float),
            ("t_sample", Kind::Float),
            ("dt", Kind::Float),
            ("stride", Kind::Int),
        ],
    ),
    (
        "sweep",
        &[("eps_ladder", Kind::FloatList), ("alpha", Kind::Float), ("slack", Kind::Float), ("max_final_ratio", Kind::Float)],
    ),
    ("output", &[("dir", Kind::Str(&[])), ("seed", Kind::Int), ("snapshots", Kind::Str(&["yes", "no"]))]),
];

fn kind_of(section: &str, key: &str) -> Option<Kind> {
    SCHEMA
        .iter()
        .find(|(s, _)| *s == section)
        .and_then(|(_, keys)| keys.iter().find(|(k, _)| *k == key))
        .map(|(_, kind)| *kind)
}

/// Parsed config file plus the problems found while reading it.
pub struct Config {
    table: BTreeMap<String, Table>,
    problems: Vec<String>,
    missing: Vec<String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("config is not valid: {}", e.message())))?;
        let mut cfg = Self {
            table: BTreeMap::new(),
            problems: Vec::new(),
            missing: Vec::new(),
        };
        for (name, value) in root {
            let Value::Table(t) = value else {
                cfg.problems.push(format!("unknown top-level key `{name}` (keys belong in a [section])"));
                continue;
            };
            if !SCHEMA.iter().any(|(s, _)| *s == name) {
                cfg.problems.push(format!("unknown section [{name}]"));
                continue;
            }
            for key in t.keys() {
                if kind_of(&name, key).is_none() {
                    cfg.problems.push(format!("unknown key `{name}.{key}`"));
                }
            }
            cfg.table.insert(name, t);
        }
        Ok(cfg)
    }

    /// Fails with every collected problem if any were found.
    pub fn finish(&mut self) -> Result<(), CliError> {
        let mut msg = Vec::new();
        if !self.missing.is_empty() {
            msg.push(format!("missing required keys: {}", self.missing.join(", ")));
        }
        msg.append(&mut self.problems);
        if msg.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(msg.join("; ")))
        }
    }

    fn raw(&self, section: &str, key: &str) -> Option<&Value> {
        debug_assert!(kind_of(section, key).is_some(), "{section}.{key} not in schema");
        self.table.get(section).and_then(|t| t.get(key))
    }

    fn bad(&mut self, section: &str, key: &str) {
        let kind = kind_of(section, key).expect("schema key");
        self.problems.push(format!("`{section}.{key}` must be {}", kind.describe()));
    }

    fn need<T>(&mut self, section: &str, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && self.raw(section, key).is_none() {
            self.missing.push(format!("{section}.{key}"));
        }
        v
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.raw(section, key).is_some()
    }

    pub fn opt_f64(&mut self, section: &str, key: &str) -> Option<f64> {
        match self.raw(section, key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.bad(section, key);
                None
            }
        }
    }

    pub fn req_f64(&mut self, section: &str, key: &str) -> Option<f64> {
        let v = self.opt_f64(section, key);
        self.need(section, key, v)
    }

    pub fn opt_u64(&mut self, section: &str, key: &str) -> Option<u64> {
        match self.raw(section, key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.bad(section, key);
                None
            }
        }
    }

    pub fn req_u64(&mut self, section: &str, key: &str) -> Option<u64> {
        let v = self.opt_u64(section, key);
        self.need(section, key, v)
    }

    pub fn opt_f64_list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let out = match self.raw(section, key)? {
            Value::Float(x) => Some(vec![*x]),
            Value::Integer(i) => Some(vec![*i as f64]),
            Value::Array(a) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Some(*x),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect(),
            _ => None,
        };
        if out.is_none() {
            self.bad(section, key);
        }
        out
    }

    pub fn req_f64_list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let v = self.opt_f64_list(section, key);
        self.need(section, key, v)
    }

    pub fn req_u64_list(&mut self, section: &str, key: &str) -> Option<Vec<u64>> {
        let out = match self.raw(section, key) {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(vec![*i as u64]),
            Some(Value::Array(a)) => {
                let r: Option<Vec<u64>> = a
                    .iter()
                    .map(|v| match v {
                        Value::Integer(i) if *i >= 0 => Some(*i as u64),
                        _ => None,
                    })
                    .collect();
                if r.is_none() {
                    self.bad(section, key);
                }
                r
            }
            Some(_) => {
                self.bad(section, key);
                None
            }
        };
        self.need(section, key, out)
    }

    pub fn opt_str(&mut self, section: &str, key: &str) -> Option<String> {
        let Some(Kind::Str(opts)) = kind_of(section, key) else {
            unreachable!("{section}.{key} is not a string key")
        };
        match self.raw(section, key)? {
            Value::String(s) if opts.is_empty() || opts.contains(&s.as_str()) => Some(s.clone()),
            _ => {
                self.bad(section, key);
                None
            }
        }
    }

    pub fn req_str(&mut self, section: &str, key: &str) -> Option<String> {
        let v = self.opt_str(section, key);
        self.need(section, key, v)
    }

    pub fn problem(&mut self, msg: String) {
        self.problems.push(msg);
    }
}

/// Discretized problem shared by every subcommand.
pub struct Problem {
    pub op: DiscreteOperator,
    pub nl: Nonlinearity,
}

fn to_usize(v: u64) -> usize {
    usize::try_from(v).unwrap_or(usize::MAX)
}

/// Reads `[grid]`, `[coefficients]` and `[nonlinearity]`; validation errors of
/// the core library surface as configuration errors.
pub fn read_problem(cfg: &mut Config) -> Result<Option<Problem>, CliError> {
    let lower = cfg.req_f64_list("grid", "lower");
    let upper = cfg.req_f64_list("grid", "upper");
    let counts = cfg.req_u64_list("grid", "counts");
    let a = cfg.req_f64("coefficients", "a");
    let beta = cfg.req_f64("coefficients", "beta");
    let variation = cfg.opt_f64("coefficients", "a_variation").unwrap_or(0.0);
    let family = cfg.req_str("nonlinearity", "family");
    let (mut lambda, mut gamma) = (None, None);
    match family.as_deref() {
        Some("cubic") => {
            lambda = cfg.req_f64("nonlinearity", "lambda");
            gamma = cfg.req_f64("nonlinearity", "gamma");
        }
        Some("linear") => lambda = cfg.req_f64("nonlinearity", "lambda"),
        _ => {}
    }
    let width = cfg.opt_f64("nonlinearity", "lambda_width");
    let g = cfg.opt_f64("nonlinearity", "g").unwrap_or(0.0);
    let mu_bar = cfg.opt_f64("nonlinearity", "mu_bar").unwrap_or(4.0);
    let c = cfg.opt_f64("nonlinearity", "c");
    if family.as_deref() == Some("cubic") && g != 0.0 && c.is_none() {
        cfg.problem("`nonlinearity.c` is required when `nonlinearity.g` is nonzero".into());
    }
    if family.as_deref() != Some("cubic") {
        for key in ["gamma", "g", "mu_bar", "c", "lambda_width"] {
            if cfg.has("nonlinearity", key) {
                cfg.problem(format!("`nonlinearity.{key}` only applies to the cubic family"));
            }
        }
    }
    let (Some(lower), Some(upper), Some(counts), Some(a), Some(beta), Some(family)) =
        (lower, upper, counts, a, beta, family)
    else {
        return Ok(None);
    };
    let counts: Vec<usize> = counts.into_iter().map(to_usize).collect();
    let grid = Grid::with_bounds(&lower, &upper, &counts)?;
    let d = grid.dim();
    let coeffs = if variation == 0.0 {
        CoefficientField::constant(&grid, a, beta)?
    } else {
        let (lo, hi) = (grid.lower().to_vec(), grid.upper().to_vec());
        CoefficientField::isotropic(
            &grid,
            |x| {
                let bump: f64 = (0..d)
                    .map(|i| (std::f64::consts::PI * (x[i] - lo[i]) / (hi[i] - lo[i])).sin())
                    .product();
                a * (1.0 + variation * bump)
            },
            |_| beta,
        )?
    };
    let op = build_operator(&grid, &coeffs)?;
    let lam = lambda.unwrap_or(0.0);
    let lambda_at = move |x: &[f64]| match width {
        Some(w) => lam * (-x[..d].iter().map(|v| v * v).sum::<f64>() / (w * w)).exp(),
        None => lam,
    };
    let nl = match family.as_str() {
        "cubic" => {
            let gam = gamma.unwrap_or(0.0);
            Nonlinearity::cubic(
                &grid,
                lambda_at,
                |_| gam,
                |_| g,
                mu_bar,
                |x| c.unwrap_or_else(|| lambda_at(x).max(0.0).powi(2) / (4.0 * gam)),
            )?
        }
        "linear" => Nonlinearity::linear(grid.sample(lambda_at)),
        _ => Nonlinearity::zero(grid.len()),
    };
    Ok(Some(Problem { op, nl }))
}

/// `[flow]` time stepping parameters.
pub struct FlowSpec {
    pub flow: Flow,
    pub dt: f64,
    pub duration: f64,
    pub stride: usize,
    initial: String,
    amplitude: f64,
    mode: u64,
    radius: Option<f64>,
    center: Option<Vec<f64>>,
    velocity: String,
}

pub fn read_flow(cfg: &mut Config, need_times: bool) -> Option<FlowSpec> {
    let kind = cfg.req_str("flow", "kind");
    let eps = match kind.as_deref() {
        Some("hyperbolic") => cfg.req_f64("flow", "eps"),
        _ => cfg.opt_f64("flow", "eps"),
    };
    let (dt, duration) = if need_times {
        (cfg.req_f64("flow", "dt"), cfg.req_f64("flow", "duration"))
    } else {
        (cfg.opt_f64("flow", "dt").or(Some(0.0)), cfg.opt_f64("flow", "duration").or(Some(0.0)))
    };
    let stride = cfg.opt_u64("flow", "stride").unwrap_or(1);
    let initial = cfg.req_str("flow", "initial");
    let radius = if initial.as_deref() == Some("bump") {
        cfg.req_f64("flow", "radius")
    } else {
        cfg.opt_f64("flow", "radius")
    };
    let amplitude = cfg.opt_f64("flow", "amplitude").unwrap_or(1.0);
    let mode = cfg.opt_u64("flow", "mode").unwrap_or(1);
    let center = cfg.opt_f64_list("flow", "center");
    let velocity = cfg.opt_str("flow", "velocity").unwrap_or_else(|| "zero".into());
    let flow = match kind.as_deref()? {
        "hyperbolic" => Flow::Hyperbolic { eps: eps? },
        _ => Flow::Parabolic,
    };
    Some(FlowSpec {
        flow,
        dt: dt?,
        duration: duration?,
        stride: to_usize(stride),
        initial: initial?,
        amplitude,
        mode,
        radius,
        center,
        velocity,
    })
}

impl FlowSpec {
    /// Initial displacement `u0`.
    pub fn initial_u(&self, grid: &Grid) -> Result<Vec<f64>, CliError> {
        let d = grid.dim();
        match self.initial.as_str() {
            "zero" => Ok(vec![0.0; grid.len()]),
            "sine" => {
                let (lo, hi) = (grid.lower(), grid.upper());
                let m = self.mode as f64;
                Ok(grid.sample(|x| {
                    self.amplitude
                        * (0..d)
                            .map(|i| (m * std::f64::consts::PI * (x[i] - lo[i]) / (hi[i] - lo[i])).sin())
                            .product::<f64>()
                }))
            }
            _ => {
                let r = self.radius.unwrap_or(0.0);
                if !(r > 0.0) {
                    return Err(CliError::Config(format!("`flow.radius` must be positive, got {r}")));
                }
                let center = match &self.center {
                    Some(c) if c.len() == d => c.clone(),
                    Some(c) => {
                        return Err(CliError::Config(format!(
                            "`flow.center` has {} entries for a {d}-dimensional grid",
                            c.len()
                        )))
                    }
                    None => vec![0.0; d],
                };
                Ok(grid.sample(|x| {
                    let s2: f64 = (0..d).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>() / (r * r);
                    if s2 < 1.0 {
                        self.amplitude * (1.0 - s2).powi(2)
                    } else {
                        0.0
                    }
                }))
            }
        }
    }

    pub fn initial_state(&self, p: &Problem) -> Result<State, CliError> {
        let u = self.initial_u(p.op.grid())?;
        Ok(match self.flow {
            Flow::Parabolic => State::Parabolic(ParabolicState { u, t: 0.0 }),
            Flow::Hyperbolic { eps } => {
                let v = if self.velocity == "lift" {
                    gamma_lift(&p.op, &p.nl, &u)?.1
                } else {
                    vec![0.0; u.len()]
                };
                State::Hyperbolic(HyperbolicState::new(u, v, 0.0, eps)?)
            }
        })
    }
}

fn read_ensemble(cfg: &mut Config, members_key: &str) -> Option<EnsembleSpec> {
    let members = cfg.req_u64("attractor", "members");
    let own = if members_key == "members" {
        members
    } else {
        cfg.opt_u64("attractor", members_key).or(members)
    };
    let modes = cfg.req_u64("attractor", "modes");
    let radius = cfg.req_f64("attractor", "radius");
    let decades = cfg.opt_f64("attractor", "decades").unwrap_or(0.0);
    Some(EnsembleSpec {
        members: to_usize(own?),
        modes: to_usize(modes?),
        radius: radius?,
        decades,
    })
}

pub fn read_attractor(cfg: &mut Config) -> Option<(EnsembleSpec, EnsembleSpec, AttractorSpec)> {
    let ens = read_ensemble(cfg, "members");
    let parab = read_ensemble(cfg, "parabolic_members");
    let t0 = cfg.opt_f64("attractor", "t0");
    let t_sample = cfg.req_f64("attractor", "t_sample");
    let dt = cfg.req_f64("attractor", "dt");
    let stride = cfg.opt_u64("attractor", "stride").unwrap_or(1);
    Some((
        ens?,
        parab?,
        AttractorSpec {
            t0,
            t_sample: t_sample?,
            dt: dt?,
            stride: to_usize(stride),
        },
    ))
}

pub struct SweepSpec {
    pub config: SweepConfig,
    pub slack: f64,
    pub max_final_ratio: f64,
}

pub fn read_sweep(cfg: &mut Config, seed: u64) -> Option<SweepSpec> {
    let att = read_attractor(cfg);
    let ladder = cfg.req_f64_list("sweep", "eps_ladder");
    let alpha = cfg.opt_f64("sweep", "alpha").unwrap_or(1.0);
    let slack = cfg.opt_f64("sweep", "slack").unwrap_or(0.1);
    let max_final_ratio = cfg.opt_f64("sweep", "max_final_ratio").unwrap_or(0.2);
    let (ensemble, parabolic_ensemble, attractor) = att?;
    Some(SweepSpec {
        config: SweepConfig {
            eps_ladder: ladder?,
            ensemble,
            parabolic_ensemble,
            attractor,
            alpha,
            seed,
        },
        slack,
        max_final_ratio,
    })
}

/// `[output]` values after command-line overrides.
pub struct OutputSpec {
    pub dir: std::path::PathBuf,
    pub seed: u64,
    pub snapshots: bool,
}

pub fn read_output(cfg: &mut Config, dir: Option<std::path::PathBuf>, seed: Option<u64>) -> Option<OutputSpec> {
    let conf_dir = cfg.opt_str("output", "dir");
    let conf_seed = cfg.opt_u64("output", "seed");
    let snapshots = cfg.opt_str("output", "snapshots").map_or(true, |s| s == "yes");
    let dir = dir.or_else(|| conf_dir.map(Into::into));
    if dir.is_none() {
        cfg.missing.push("output.dir (or --out)".into());
    }
    Some(OutputSpec {
        dir: dir?,
        seed: seed.or(conf_seed).unwrap_or(0),
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_and_missing_are_collected() {
        let mut cfg = Config::parse("[grid]\nlower = 0\nbogus = 1\n[nope]\nx = 1\n").unwrap();
        assert!(read_problem(&mut cfg).unwrap().is_none());
        let msg = cfg.finish().unwrap_err().to_string();
        for part in ["grid.upper", "grid.counts", "coefficients.a", "nonlinearity.family", "grid.bogus", "[nope]"] {
            assert!(msg.contains(part), "{part} missing from: {msg}");
        }
    }

    #[test]
    fn wrong_types_are_reported() {
        let mut cfg = Config::parse("[flow]\nkind = \"elliptic\"\ndt = \"small\"\n").unwrap();
        assert!(read_flow(&mut cfg, true).is_none());
        let msg = cfg.finish().unwrap_err().to_string();
        assert!(msg.contains("flow.kind` must be one of hyperbolic, parabolic"), "{msg}");
        assert!(msg.contains("flow.dt` must be a number"), "{msg}");
        assert!(msg.contains("flow.duration"), "{msg}");
    }

    #[test]
    fn scalar_and_list_grids_agree() {
        let text = "[grid]\nlower = LO\nupper = 2\ncounts = CO\n[coefficients]\na = 1\nbeta = 0\n[nonlinearity]\nfamily = \"zero\"\n";
        let a = text.replace("LO", "0").replace("CO", "7");
        let b = text.replace("LO", "[0.0]").replace("CO", "[7]");
        let pa = read_problem(&mut Config::parse(&a).unwrap()).unwrap().unwrap();
        let pb = read_problem(&mut Config::parse(&b).unwrap()).unwrap().unwrap();
        assert_eq!(pa.op.grid().hash(), pb.op.grid().hash());
    }
}
