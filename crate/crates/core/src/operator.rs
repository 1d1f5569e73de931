//! Flux-form finite-difference realization of `u -> beta u - div(A grad u)`.

use crate::error::{check_len, Error, Result};
use crate::grid::{CoefficientField, Grid, MAX_DIM};
use crate::linalg::{dot, norm2, CsrMatrix, LinearSolver};
use nalgebra::{DMatrix, SymmetricEigen};
use std::sync::OnceLock;

/// Largest node count for which dense eigendecompositions are attempted.
pub const DENSE_CAP: usize = 4096;
pub const LAMBDA1_TOL: f64 = 1e-8;
pub const LAMBDA1_MAX_ITER: usize = 100_000;

/// Sparse symmetric matrix `A_h` together with lazily built solver and spectral data.
#[derive(Debug)]
pub struct DiscreteOperator {
    grid: Grid,
    coeffs: CoefficientField,
    matrix: CsrMatrix,
    solver: OnceLock<std::result::Result<LinearSolver, Error>>,
    lambda1: OnceLock<std::result::Result<Lambda1, Error>>,
    eigen: OnceLock<std::result::Result<SymmetricEigen<f64, nalgebra::Dyn>, Error>>,
}

/// Smallest eigenpair from inverse power iteration.
#[derive(Debug, Clone)]
pub struct Lambda1 {
    pub value: f64,
    /// Eigenvector normalized to unit Euclidean length.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `|A x - lambda x| / |x|`.
    pub residual: f64,
}

impl Clone for DiscreteOperator {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.clone(),
            matrix: self.matrix.clone(),
            solver: OnceLock::new(),
            lambda1: OnceLock::new(),
            eigen: OnceLock::new(),
        }
    }
}

/// Assembles `A_h` in flux form.
///
/// Diagonal diffusion uses the three-point stencil per axis with `a_ii` at
/// half-points, averaged from the two adjacent nodal samples. Mixed terms use
/// centered differences with nodal `a_ij`, assembled from the bilinear form
/// `sum_q a_ij(q) D_i v(q) D_j u(q)` so that the matrix is symmetric.
pub fn build_operator(grid: &Grid, coeffs: &CoefficientField) -> Result<DiscreteOperator> {
    let expected: Vec<usize> = grid.counts().iter().map(|n| n + 2).collect();
    if coeffs.ext_counts() != expected.as_slice() {
        return Err(Error::Config(format!(
            "coefficient samples on {:?} do not match grid {:?}",
            coeffs.ext_counts(),
            grid.counts()
        )));
    }
    check_len(grid.len(), coeffs.beta().len())?;
    coeffs.check_ellipticity()?;

    let d = grid.dim();
    let n = grid.len();
    let h = grid.spacing();
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(n * (2 * d + 1 + 8 * d * d));
    for p in 0..n {
        let m = grid.multi_index(p);
        let mut ext = [0usize; MAX_DIM];
        for i in 0..d {
            ext[i] = m[i] + 1;
        }
        t.push((p, p, coeffs.beta()[p]));
        for i in 0..d {
            let here = coeffs.a_ext(&ext[..d]).get(i, i);
            let mut fwd = ext;
            fwd[i] += 1;
            let mut bwd = ext;
            bwd[i] -= 1;
            let a_plus = 0.5 * (here + coeffs.a_ext(&fwd[..d]).get(i, i));
            let a_minus = 0.5 * (here + coeffs.a_ext(&bwd[..d]).get(i, i));
            let h2 = h[i] * h[i];
            t.push((p, p, (a_plus + a_minus) / h2));
            if let Some(q) = grid.neighbor(p, i, true) {
                t.push((p, q, -a_plus / h2));
            }
            if let Some(q) = grid.neighbor(p, i, false) {
                t.push((p, q, -a_minus / h2));
            }
        }
        // mixed derivatives, one (i, j) and (j, i) pair per node q = p
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let aij = coeffs.a_ext(&ext[..d]).get(i, j);
                if aij == 0.0 {
                    continue;
                }
                let c = aij / (4.0 * h[i] * h[j]);
                let vi = [
                    (grid.neighbor(p, i, true), 1.0),
                    (grid.neighbor(p, i, false), -1.0),
                ];
                let uj = [
                    (grid.neighbor(p, j, true), 1.0),
                    (grid.neighbor(p, j, false), -1.0),
                ];
                for &(r, sr) in &vi {
                    for &(s, ss) in &uj {
                        if let (Some(r), Some(s)) = (r, s) {
                            t.push((r, s, c * sr * ss));
                        }
                    }
                }
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(n, t);
    Ok(DiscreteOperator {
        grid: grid.clone(),
        coeffs: coeffs.clone(),
        matrix,
        solver: OnceLock::new(),
        lambda1: OnceLock::new(),
        eigen: OnceLock::new(),
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.n()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.n() == 0
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec_into(u, out)
    }

    /// Copy of this operator with `beta` replaced by `beta + shift`.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let grid = &self.grid;
        let mut coeffs = self.coeffs.clone();
        coeffs.shift_beta(shift);
        build_operator(grid, &coeffs)
    }

    fn solver(&self) -> Result<&LinearSolver> {
        self.solver
            .get_or_init(|| LinearSolver::new(self.matrix.clone()))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `A_h^{-1} b`, with the residual checked against the solve tolerance.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), b.len())?;
        self.solver()?.solve_checked(b)
    }

    /// Smallest eigenvalue of `A_h` (cached).
    pub fn lambda1(&self) -> Result<f64> {
        self.lambda1_pair().map(|l| l.value)
    }

    pub fn lambda1_pair(&self) -> Result<&Lambda1> {
        self.lambda1
            .get_or_init(|| self.inverse_power_iteration(LAMBDA1_TOL, LAMBDA1_MAX_ITER))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Inverse power iteration with Rayleigh-quotient estimates; stops when
    /// `|A x - lambda x| <= tol |x|`.
    pub fn inverse_power_iteration(&self, tol: f64, max_iter: usize) -> Result<Lambda1> {
        let n = self.len();
        let solver = self.solver()?;
        // smooth positive start has a component along the ground state
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.25 * ((i as f64 + 1.0) * 0.618_033_988_75).fract())
            .collect();
        let s = norm2(&x);
        x.iter_mut().for_each(|v| *v /= s);
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            let mut y = solver.solve(&x)?;
            let s = norm2(&y);
            y.iter_mut().for_each(|v| *v /= s);
            let ay = self.apply(&y);
            let value = dot(&y, &ay);
            residual = ay
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - value * b).powi(2))
                .sum::<f64>()
                .sqrt();
            x = y;
            if residual <= tol {
                return Ok(Lambda1 {
                    value,
                    vector: x,
                    iterations: it,
                    residual,
                });
            }
        }
        Err(Error::NoConvergence {
            method: "inverse power iteration",
            iterations: max_iter,
            residual,
        })
    }

    /// Dense symmetric eigendecomposition of `A_h` (small grids only, cached).
    pub fn dense_eigen(&self) -> Result<&SymmetricEigen<f64, nalgebra::Dyn>> {
        self.eigen
            .get_or_init(|| {
                let n = self.len();
                if n > DENSE_CAP {
                    return Err(Error::DenseCapExceeded { n, cap: DENSE_CAP });
                }
                let dense: DMatrix<f64> = self.matrix.to_dense();
                Ok(SymmetricEigen::new(dense))
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SymMat;

    fn laplacian(n: usize, lo: f64, hi: f64) -> DiscreteOperator {
        let g = Grid::with_bounds(&[lo], &[hi], &[n]).unwrap();
        let c = CoefficientField::constant(&g, 1.0, 0.0).unwrap();
        build_operator(&g, &c).unwrap()
    }

    #[test]
    fn unit_laplacian_stencil() {
        let op = laplacian(3, -0.5, 0.5);
        let m = op.matrix();
        for i in 0..3 {
            assert!((m.get(i, i) - 32.0).abs() < 1e-12);
        }
        assert!((m.get(0, 1) + 16.0).abs() < 1e-12);
        assert!((m.get(1, 2) + 16.0).abs() < 1e-12);
        assert_eq!(m.get(0, 2), 0.0);
    }

    #[test]
    fn constant_beta_adds_identity() {
        let g = Grid::build(&[0.5], &[3]).unwrap();
        let base = build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap();
        let c = 3.5;
        let shifted =
            build_operator(&g, &CoefficientField::constant(&g, 1.0, c).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = base.matrix().get(i, j) + if i == j { c } else { 0.0 };
                assert!((shifted.matrix().get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn anisotropic_2d_is_symmetric() {
        let g = Grid::build(&[1.0, 1.5], &[7, 6]).unwrap();
        let c = CoefficientField::from_fn(
            &g,
            |x| {
                let mut m = SymMat::isotropic(2, 2.0 + x[0] * x[0]);
                m.set(1, 1, 1.5 + 0.5 * x[1].sin());
                m.set(0, 1, 0.3 * x[0].cos());
                m
            },
            |x| 0.5 + x[1] * x[1],
            0.5,
            4.0,
        )
        .unwrap();
        let op = build_operator(&g, &c).unwrap();
        let m = op.matrix();
        assert!(m.max_asymmetry() <= 1e-12 * m.max_abs());
        assert!(op.lambda1().unwrap() > 0.0);
    }

    #[test]
    fn lambda1_closed_form() {
        let n = 200;
        let op = laplacian(n, 0.0, std::f64::consts::PI);
        let h = op.grid().spacing()[0];
        let exact = 4.0 / (h * h) * (h / 2.0).sin().powi(2);
        let l = op.lambda1_pair().unwrap();
        assert!((l.value - exact).abs() < 1e-8);
        assert!((l.value - 1.0).abs() < 1e-3);
        assert!(l.residual <= LAMBDA1_TOL);
    }

    #[test]
    fn lambda1_shift() {
        let g = Grid::with_bounds(&[0.0], &[std::f64::consts::PI], &[200]).unwrap();
        let base = build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap();
        let shifted = base.shifted(2.0).unwrap();
        assert!((shifted.lambda1().unwrap() - base.lambda1().unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn lambda1_iteration_cap() {
        let op = laplacian(50, 0.0, 1.0);
        assert!(matches!(
            op.inverse_power_iteration(1e-30, 4),
            Err(Error::NoConvergence { iterations: 4, .. })
        ));
    }

    #[test]
    fn mismatched_coefficients_rejected() {
        let g = Grid::build(&[1.0], &[5]).unwrap();
        let other = Grid::build(&[1.0], &[6]).unwrap();
        let c = CoefficientField::constant(&other, 1.0, 0.0).unwrap();
        assert!(build_operator(&g, &c).is_err());
    }
}
