//! Sparse symmetric matrices and the two solvers behind them: a banded
//! Cholesky factorization for lexicographically ordered structured grids and
//! Jacobi-preconditioned conjugate gradients when the band is too wide.

use crate::error::{Error, Result};

/// Relative residual target for every linear solve.
pub const SOLVE_TOL: f64 = 1e-10;
/// Iteration cap for conjugate gradients.
pub const CG_MAX_ITER: usize = 100_000;
/// Largest `n * (band + 1)^2` for which the banded factorization is used.
pub const BANDED_WORK_CAP: f64 = 4.0e8;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `scale * self + shift * I`.
    pub fn scaled_shifted(&self, scale: f64, shift: f64) -> Self {
        let mut t = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.push((i, j, scale * v));
            }
            t.push((i, i, shift));
        }
        Self::from_triplets(self.n, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Largest `|i - j|` over stored entries.
    pub fn half_bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite matrix.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution> {
    let n = a.n();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: it,
                value: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm2(&r) / bnorm;
        if rel <= tol {
            // confirm against the true residual, recurrences drift
            let true_rel = residual_norm(a, &x, b) / bnorm;
            if true_rel <= tol {
                return Ok(CgSolution {
                    x,
                    iterations: it,
                    relative_residual: true_rel,
                });
            }
            r = b.iter().zip(a.mul_vec(&x)).map(|(b, ax)| b - ax).collect();
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        method: "conjugate gradients",
        iterations: max_iter,
        residual: residual_norm(a, &x, b) / bnorm,
    })
}

pub fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    ax.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Cholesky factor `L` of a symmetric positive definite band matrix, stored by rows:
/// `band[i * (w + 1) + k]` holds `L[i, i - w + k]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    w: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let w = a.half_bandwidth();
        let stride = w + 1;
        let mut band = vec![0.0; n * stride];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    band[i * stride + (j + w - i)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                let mut s = band[i * stride + (j + w - i)];
                let k0 = j0.max(j.saturating_sub(w));
                for k in k0..j {
                    s -= band[i * stride + (k + w - i)] * band[j * stride + (k + w - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    band[i * stride + w] = s.sqrt();
                } else {
                    band[i * stride + (j + w - i)] = s / band[j * stride + w];
                }
            }
        }
        Ok(Self { n, w, band })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `L^{-1} b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, w) = (self.n, self.w);
        let stride = w + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(w)..i {
                s -= self.band[i * stride + (k + w - i)] * y[k];
            }
            y[i] = s / self.band[i * stride + w];
        }
        y
    }

    /// `L^T x`.
    pub fn mul_lt(&self, x: &[f64]) -> Vec<f64> {
        let (n, w) = (self.n, self.w);
        let stride = w + 1;
        (0..n)
            .map(|i| {
                (i..(i + w + 1).min(n))
                    .map(|k| self.band[k * stride + (i + w - k)] * x[k])
                    .sum()
            })
            .collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, w) = (self.n, self.w);
        let stride = w + 1;
        let mut y = self.forward_solve(b);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + w + 1).min(n) {
                s -= self.band[k * stride + (i + w - k)] * y[k];
            }
            y[i] = s / self.band[i * stride + w];
        }
        y
    }
}

/// Solver for a fixed SPD matrix: direct when the band is narrow, PCG otherwise.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    matrix: CsrMatrix,
    factor: Option<BandedCholesky>,
}

impl LinearSolver {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        let w = matrix.half_bandwidth() as f64;
        let work = matrix.n() as f64 * (w + 1.0) * (w + 1.0);
        let factor = if work <= BANDED_WORK_CAP {
            Some(BandedCholesky::factor(&matrix)?)
        } else {
            None
        };
        Ok(Self { matrix, factor })
    }

    /// Always iterative, regardless of bandwidth.
    pub fn iterative(matrix: CsrMatrix) -> Self {
        Self {
            matrix,
            factor: None,
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        self.factor.is_some()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match &self.factor {
            Some(f) => Ok(f.solve(b)),
            None => pcg(&self.matrix, b, SOLVE_TOL, CG_MAX_ITER).map(|s| s.x),
        }
    }

    /// Solves and verifies `|A x - b| <= SOLVE_TOL |b|`.
    pub fn solve_checked(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = self.solve(b)?;
        let bn = norm2(b);
        let res = residual_norm(&self.matrix, &x, b);
        if res > SOLVE_TOL * bn {
            return Err(Error::NoConvergence {
                method: if self.is_direct() {
                    "banded Cholesky"
                } else {
                    "conjugate gradients"
                },
                iterations: 0,
                residual: res / bn,
            });
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn banded_matches_pcg() {
        let a = laplacian_1d(50).scaled_shifted(1.0, 0.1);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let direct = BandedCholesky::factor(&a).unwrap().solve(&b);
        let iter = pcg(&a, &b, 1e-13, 1000).unwrap();
        for (x, y) in direct.iter().zip(&iter.x) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(residual_norm(&a, &direct, &b) < 1e-12 * norm2(&b));
    }

    #[test]
    fn factor_pieces_reproduce_quadratic_forms() {
        let a = laplacian_1d(30).scaled_shifted(2.0, 0.5);
        let f = BandedCholesky::factor(&a).unwrap();
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.81).cos()).collect();
        let lt = f.mul_lt(&x);
        assert!((dot(&lt, &lt) - dot(&x, &a.mul_vec(&x))).abs() < 1e-10 * dot(&lt, &lt));
        let li = f.forward_solve(&x);
        let ainv = f.solve(&x);
        assert!((dot(&li, &li) - dot(&x, &ainv)).abs() < 1e-12 * dot(&li, &li));
    }

    #[test]
    fn banded_detects_indefinite() {
        let a = laplacian_1d(5).scaled_shifted(1.0, -3.0);
        assert!(matches!(
            BandedCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn pcg_reports_non_convergence() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        match pcg(&a, &b, 1e-12, 3) {
            Err(Error::NoConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn wide_band_falls_back_to_cg() {
        let s = LinearSolver::iterative(laplacian_1d(10));
        assert!(!s.is_direct());
        let x = s.solve_checked(&[1.0; 10]).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-8);
    }
}
