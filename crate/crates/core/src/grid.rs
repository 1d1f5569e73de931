//! Truncated box domains, interior-node indexing and coefficient sampling.
//!
//! Nodes are stored lexicographically with axis 0 varying fastest. Only
//! interior nodes carry unknowns; the homogeneous Dirichlet boundary is
//! implicit.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAX_DIM: usize = 3;

/// Uniform tensor grid on `[lower_i, upper_i]` with `n_i` interior nodes per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    /// Symmetric box `[-L_i, L_i]`.
    pub fn build(extents: &[f64], counts: &[usize]) -> Result<Self> {
        if extents.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!(
                "grid extents must be positive and finite, got {extents:?}"
            )));
        }
        let lower: Vec<f64> = extents.iter().map(|l| -l).collect();
        Self::with_bounds(&lower, extents, counts)
    }

    pub fn with_bounds(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        let d = counts.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Config(format!(
                "grid dimension must be 1, 2 or 3, got {d}"
            )));
        }
        if lower.len() != d || upper.len() != d {
            return Err(Error::Config(format!(
                "grid bounds have {} / {} entries for {d} axes",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(axis) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!(
                "node count on axis {axis} must be at least 1"
            )));
        }
        for i in 0..d {
            if !(upper[i] > lower[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::Config(format!(
                    "axis {i} has non-positive extent [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        let spacing = (0..d)
            .map(|i| (upper[i] - lower[i]) / (counts[i] + 1) as f64)
            .collect();
        let mut strides = Vec::with_capacity(d);
        let mut s = 1;
        for &n in counts {
            strides.push(s);
            s *= n;
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            counts: counts.to_vec(),
            spacing,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Quadrature weight of one node, `prod h_i`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut m = [0; MAX_DIM];
        let mut rest = idx;
        for (i, &n) in self.counts.iter().enumerate() {
            m[i] = rest % n;
            rest /= n;
        }
        m
    }

    pub fn linear_index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Coordinates of interior node `idx`; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.dim() {
            x[i] = self.lower[i] + (m[i] + 1) as f64 * self.spacing[i];
        }
        x
    }

    /// Neighbour of `idx` one step along `axis`, or `None` if that node is on the boundary.
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> Option<usize> {
        let m = self.multi_index(idx);
        if forward {
            (m[axis] + 1 < self.counts[axis]).then(|| idx + self.strides[axis])
        } else {
            (m[axis] > 0).then(|| idx - self.strides[axis])
        }
    }

    /// Euclidean distance of node `idx` from the origin.
    pub fn radius(&self, idx: usize) -> f64 {
        self.coords(idx).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Radius of the largest origin-centred ball inside the box.
    pub fn inscribed_radius(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.lower[i].abs().min(self.upper[i].abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples `g` at every interior node.
    pub fn sample(&self, g: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| g(&self.coords(i)[..self.dim()]))
            .collect()
    }

    /// Stable 64-bit fingerprint of the grid geometry.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"grid-v1");
        for i in 0..self.dim() {
            h.update(self.lower[i].to_le_bytes());
            h.update(self.upper[i].to_le_bytes());
            h.update((self.counts[i] as u64).to_le_bytes());
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().unwrap())
    }
}

/// Symmetric coefficient matrix stored as its upper triangle, row by row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    pub dim: usize,
    pub upper: [f64; 6],
}

impl SymMat {
    pub fn isotropic(dim: usize, a: f64) -> Self {
        let mut m = Self {
            dim,
            upper: [0.0; 6],
        };
        for i in 0..dim {
            m.set(i, i, a);
        }
        m
    }

    fn slot(dim: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let row_start = (0..i).map(|r| dim - r).sum::<usize>();
        row_start + (j - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[Self::slot(self.dim, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[Self::slot(self.dim, i, j)] = v;
    }

    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j) * xi[i] * xi[j];
            }
        }
        s
    }
}

/// Sampled coefficients of `u -> beta u - div(A grad u)`.
///
/// `a` is sampled on the extended grid (interior plus boundary nodes,
/// `n_i + 2` per axis) so that half-point averages next to the boundary are
/// available. `beta` lives on interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    ext_counts: Vec<usize>,
    a: Vec<SymMat>,
    beta: Vec<f64>,
    pub a0: f64,
    pub a1: f64,
}

const RANDOM_DIRECTIONS: usize = 16;

impl CoefficientField {
    pub fn from_fn(
        grid: &Grid,
        a: impl Fn(&[f64]) -> SymMat,
        beta: impl Fn(&[f64]) -> f64,
        a0: f64,
        a1: f64,
    ) -> Result<Self> {
        if !(a0 > 0.0) || !(a1 >= a0) {
            return Err(Error::Config(format!(
                "ellipticity bounds need 0 < a0 <= a1, got a0 = {a0}, a1 = {a1}"
            )));
        }
        let d = grid.dim();
        let ext_counts: Vec<usize> = grid.counts().iter().map(|n| n + 2).collect();
        let total: usize = ext_counts.iter().product();
        let mut samples = Vec::with_capacity(total);
        for x in extended_points(grid) {
            let mut s = a(&x[..d]);
            s.dim = d;
            samples.push(s);
        }
        let field = Self {
            ext_counts,
            a: samples,
            beta: grid.sample(beta),
            a0,
            a1,
        };
        field.check_ellipticity()?;
        Ok(field)
    }

    /// Isotropic `A(x) = a(x) I`, with the declared bounds taken from the samples.
    pub fn isotropic(
        grid: &Grid,
        a: impl Fn(&[f64]) -> f64,
        beta: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let d = grid.dim();
        let (lo, hi) = extended_points(grid)
            .map(|x| a(&x[..d]))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::Ellipticity {
                node: 0,
                form: lo,
                lower: 0.0,
                upper: hi,
            });
        }
        Self::from_fn(grid, |x| SymMat::isotropic(d, a(x)), beta, lo, hi)
    }

    pub fn constant(grid: &Grid, a: f64, beta: f64) -> Result<Self> {
        Self::isotropic(grid, |_| a, |_| beta)
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub(crate) fn shift_beta(&mut self, shift: f64) {
        self.beta.iter_mut().for_each(|b| *b += shift);
    }

    pub fn ext_counts(&self) -> &[usize] {
        &self.ext_counts
    }

    /// Coefficient matrix at extended-grid multi-index `m` (boundary nodes at 0 and n+1).
    pub fn a_ext(&self, m: &[usize]) -> &SymMat {
        let mut idx = 0;
        let mut stride = 1;
        for (i, &c) in self.ext_counts.iter().enumerate() {
            idx += m[i] * stride;
            stride *= c;
        }
        &self.a[idx]
    }

    /// Checks `a0 |xi|^2 <= xi^T A xi <= a1 |xi|^2` on canonical and seeded random directions.
    pub fn check_ellipticity(&self) -> Result<()> {
        let d = self.ext_counts.len();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e111);
        let mut dirs: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..RANDOM_DIRECTIONS {
            dirs.push((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let slack = 1e-12;
        for (node, m) in self.a.iter().enumerate() {
            for i in 0..d {
                for j in 0..i {
                    if m.get(i, j) != m.get(j, i) {
                        return Err(Error::Config(format!(
                            "coefficient matrix not symmetric at node {node}"
                        )));
                    }
                }
            }
            for xi in &dirs {
                let norm2: f64 = xi.iter().map(|v| v * v).sum();
                if norm2 == 0.0 {
                    continue;
                }
                let q = m.quadratic_form(xi);
                let lower = self.a0 * norm2;
                let upper = self.a1 * norm2;
                if q < lower * (1.0 - slack) || q > upper * (1.0 + slack) || !q.is_finite() {
                    return Err(Error::Ellipticity {
                        node,
                        form: q,
                        lower,
                        upper,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Coordinates of every node of the extended grid (boundary included), axis 0 fastest.
fn extended_points(grid: &Grid) -> impl Iterator<Item = [f64; MAX_DIM]> + '_ {
    let ext: Vec<usize> = grid.counts().iter().map(|n| n + 2).collect();
    let total: usize = ext.iter().product();
    (0..total).map(move |e| {
        let mut rest = e;
        let mut x = [0.0; MAX_DIM];
        for i in 0..ext.len() {
            let m = rest % ext[i];
            rest /= ext[i];
            x[i] = grid.lower()[i] + m as f64 * grid.spacing()[i];
        }
        x
    })
}
