//! CSV exports and the binary snapshot format.
//!
//! Snapshot files are little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       8     magic b"DWSNAP\0\x01"
//! 8       8     grid hash (u64)
//! 16      8     eps (f64; 0 for parabolic or lifted sets)
//! 24      8     dt (f64)
//! 32      8     N, nodes per field (u64)
//! 40      8     row count (u64)
//! 48      8     fields per row, 1 (u only) or 2 (u and v) (u64)
//! 56      ...   rows: t, u[0..N], v[0..N] as f64
//! ```

use crate::attractor::{AttractorApproximation, SweepReport};
use crate::dynamics::Trajectory;
use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::norms::{norm_h1, norm_l2};
use crate::operator::DiscreteOperator;
use crate::tails::TailProfile;
use std::io::{Read, Write};

pub const SNAPSHOT_MAGIC: [u8; 8] = *b"DWSNAP\0\x01";

/// Shortest round-trip text for a float; identical inputs give identical bytes.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Columns `node, x0[, x1, x2], <name>...` with one row per interior node.
pub fn write_fields_csv<W: Write>(w: W, grid: &Grid, fields: &[(&str, &[f64])]) -> Result<()> {
    for (name, f) in fields {
        if f.len() != grid.len() {
            return Err(Error::Config(format!("field {name} has {} values, grid has {}", f.len(), grid.len())));
        }
    }
    let mut out = writer(w);
    let d = grid.dim();
    let mut header: Vec<String> = vec!["node".into()];
    header.extend((0..d).map(|a| format!("x{a}")));
    header.extend(fields.iter().map(|(n, _)| n.to_string()));
    out.write_record(&header)?;
    for i in 0..grid.len() {
        let x = grid.coords(i);
        let mut row = vec![i.to_string()];
        row.extend(x[..d].iter().map(|v| fmt_f64(*v)));
        row.extend(fields.iter().map(|(_, f)| fmt_f64(f[i])));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `t, u0..u{N-1}[, v0..v{N-1}]`, one row per snapshot.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut out = writer(w);
    let n = traj.u.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("u{i}")));
    if traj.is_hyperbolic() {
        header.extend((0..n).map(|i| format!("v{i}")));
    }
    out.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.times[i])];
        row.extend(traj.u[i].iter().map(|v| fmt_f64(*v)));
        if let Some(v) = traj.v.get(i) {
            row.extend(v.iter().map(|x| fmt_f64(*x)));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `t, l2_u, h1_u, l2_v` (`l2_v` empty for parabolic runs).
pub fn write_trajectory_norms_csv<W: Write>(w: W, traj: &Trajectory, op: &DiscreteOperator) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "l2_u", "h1_u", "l2_v"])?;
    let g = op.grid();
    for i in 0..traj.len() {
        let u = &traj.u[i];
        let lv = match traj.v.get(i) {
            Some(v) => fmt_f64(norm_l2(v, g)?),
            None => String::new(),
        };
        out.write_record([
            fmt_f64(traj.times[i]),
            fmt_f64(norm_l2(u, g)?),
            fmt_f64(norm_h1(u, op)?),
            lv,
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn functional_name(r: &EnergyReport) -> &'static str {
    use crate::energy::Functional::*;
    match r.functional {
        TildeV => "tilde_v",
        V => "v",
        FEps { .. } => "f_eps",
        FZero { .. } => "f_zero",
        UniformBound => "uniform_bound",
    }
}

/// Long format `t, functional, value, residual`, reports one after another;
/// the residual is empty at the two endpoints where no central difference exists.
pub fn write_energy_csv<W: Write>(w: W, reports: &[EnergyReport]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "functional", "value", "residual"])?;
    for report in reports {
        let name = functional_name(report);
        let n = report.times.len();
        for i in 0..n {
            let res = if i >= 1 && i + 1 < n && !report.residuals.is_empty() {
                fmt_f64(report.residuals[i - 1])
            } else {
                String::new()
            };
            out.write_record([fmt_f64(report.times[i]), name.to_string(), fmt_f64(report.values[i]), res])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Columns `member, t, l2_u, h1_u, l2_v`, one row per pooled snapshot.
pub fn write_attractor_norms_csv<W: Write>(
    w: W,
    set: &AttractorApproximation,
    op: &DiscreteOperator,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["member", "t", "l2_u", "h1_u", "l2_v"])?;
    let g = op.grid();
    for i in 0..set.len() {
        out.write_record([
            set.member[i].to_string(),
            fmt_f64(set.times[i]),
            fmt_f64(norm_l2(&set.u[i], g)?),
            fmt_f64(norm_h1(&set.u[i], op)?),
            fmt_f64(norm_l2(&set.v[i], g)?),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Long format `t, k, value`.
pub fn write_tail_profile_csv<W: Write>(w: W, profile: &TailProfile) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["t", "k", "value"])?;
    for (i, t) in profile.times.iter().enumerate() {
        for (j, k) in profile.ks.iter().enumerate() {
            out.write_record([fmt_f64(*t), k.to_string(), fmt_f64(profile.values[i][j])])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Columns `eps, semidistance, sup_z_bound, sup_vw_bound, snapshots`.
pub fn write_sweep_csv<W: Write>(w: W, report: &SweepReport) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["eps", "semidistance", "sup_z_bound", "sup_vw_bound", "snapshots"])?;
    for r in &report.rows {
        out.write_record([
            fmt_f64(r.eps),
            fmt_f64(r.semidistance),
            fmt_f64(r.sup_z_bound),
            fmt_f64(r.sup_vw_bound),
            r.snapshots.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Decoded snapshot file. `v` is empty when rows carry `u` only.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub grid_hash: u64,
    pub eps: f64,
    pub dt: f64,
    pub n: usize,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl SnapshotSet {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            grid_hash: traj.grid_hash,
            eps: traj.flow.eps(),
            dt: traj.dt,
            n: traj.u.first().map_or(0, Vec::len),
            times: traj.times.clone(),
            u: traj.u.clone(),
            v: traj.v.clone(),
        }
    }

    pub fn from_attractor(set: &AttractorApproximation) -> Self {
        Self {
            grid_hash: set.grid_hash,
            eps: set.eps,
            dt: set.dt,
            n: set.u.first().map_or(0, Vec::len),
            times: set.times.clone(),
            u: set.u.clone(),
            v: set.v.clone(),
        }
    }
}

pub fn write_snapshots<W: Write>(mut w: W, set: &SnapshotSet) -> Result<()> {
    let fields: u64 = if set.v.is_empty() { 1 } else { 2 };
    if set.u.len() != set.times.len() || (fields == 2 && set.v.len() != set.times.len()) {
        return Err(Error::Config("snapshot rows do not match their time stamps".into()));
    }
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&set.grid_hash.to_le_bytes())?;
    w.write_all(&set.eps.to_le_bytes())?;
    w.write_all(&set.dt.to_le_bytes())?;
    w.write_all(&(set.n as u64).to_le_bytes())?;
    w.write_all(&(set.times.len() as u64).to_le_bytes())?;
    w.write_all(&fields.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * (1 + fields as usize * set.n));
    for i in 0..set.times.len() {
        buf.clear();
        buf.extend_from_slice(&set.times[i].to_le_bytes());
        let rows = std::iter::once(&set.u[i]).chain(set.v.get(i));
        for f in rows {
            if f.len() != set.n {
                return Err(Error::SizeMismatch { expected: set.n, got: f.len() });
            }
            for x in f {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    read_u64(r).map(f64::from_bits)
}

pub fn read_snapshots<R: Read>(mut r: R) -> Result<SnapshotSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Io("not a snapshot file (bad magic)".into()));
    }
    let grid_hash = read_u64(&mut r)?;
    let eps = read_f64(&mut r)?;
    let dt = read_f64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    let count = read_u64(&mut r)? as usize;
    let fields = read_u64(&mut r)?;
    if fields != 1 && fields != 2 {
        return Err(Error::Io(format!("snapshot file declares {fields} fields per row")));
    }
    let mut set = SnapshotSet {
        grid_hash,
        eps,
        dt,
        n,
        times: Vec::with_capacity(count),
        u: Vec::with_capacity(count),
        v: Vec::new(),
    };
    let read_field = |r: &mut R| -> Result<Vec<f64>> { (0..n).map(|_| read_f64(r)).collect() };
    for _ in 0..count {
        set.times.push(read_f64(&mut r)?);
        set.u.push(read_field(&mut r)?);
        if fields == 2 {
            set.v.push(read_field(&mut r)?);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, HyperbolicState, State};
    use crate::grid::CoefficientField;
    use crate::nonlinearity::Nonlinearity;
    use crate::operator::build_operator;

    #[test]
    fn snapshot_round_trip() {
        let g = Grid::build(&[1.0], &[7]).unwrap();
        let op = build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap();
        let nl = Nonlinearity::zero(7);
        let u0 = g.sample(|x| 1.0 - x[0] * x[0]);
        let s = State::Hyperbolic(HyperbolicState::new(u0, vec![0.5; 7], 0.0, 0.2).unwrap());
        let traj = integrate(&op, &nl, s, 0.05, 0.01, 1).unwrap();
        let set = SnapshotSet::from_trajectory(&traj);
        let mut bytes = Vec::new();
        write_snapshots(&mut bytes, &set).unwrap();
        assert_eq!(bytes.len(), 56 + traj.len() * 8 * (1 + 14));
        assert_eq!(&bytes[..8], &SNAPSHOT_MAGIC);
        let back = read_snapshots(bytes.as_slice()).unwrap();
        assert_eq!(back, set);
        assert!(read_snapshots(&bytes[..20]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_snapshots(bad.as_slice()).is_err());
    }

    #[test]
    fn fields_csv_layout() {
        let g = Grid::build(&[1.0, 1.0], &[2, 2]).unwrap();
        let f = vec![1.0, 2.0, 3.0, 0.25];
        let mut out = Vec::new();
        write_fields_csv(&mut out, &g, &[("u", &f)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node,x0,x1,u");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].ends_with(",2.5e-1"));
    }
}
