//! Dense reference computations, deliberately independent of the sparse paths.

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::nonlinearity::Nonlinearity;
use crate::operator::{DiscreteOperator, DENSE_CAP};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

fn dense_matrix(op: &DiscreteOperator) -> Result<DMatrix<f64>> {
    let n = op.len();
    if n > DENSE_CAP {
        return Err(Error::DenseCapExceeded { n, cap: DENSE_CAP });
    }
    Ok(op.matrix().to_dense())
}

/// Entries of `exp(t M)` for `M = [[0, 1], [-lambda/eps, -1/eps]]`, returned as
/// `[[m00, m01], [m10, m11]]`.
///
/// With `tau = -1/eps` and `s^2 = tau^2/4 - lambda/eps`,
/// `exp(tM) = e^{tau t/2} (cosh(st) I + sinh(st)/s (M - tau/2 I))`. The
/// exponentials are combined with the roots `tau/2 +- s` so nothing overflows
/// for stiff modes.
pub fn mode_propagator(lambda: f64, eps: f64, t: f64) -> [[f64; 2]; 2] {
    let tau = -1.0 / eps;
    let det = lambda / eps;
    let half = tau / 2.0;
    let disc = half * half - det;
    // c = e^{half t} cosh(st), q = e^{half t} sinh(st)/s
    let (c, q) = if disc > 0.0 {
        let s = disc.sqrt();
        let slow = det / (half - s); // = half + s, cancellation free
        let fast = half - s;
        let (e1, e2) = ((slow * t).exp(), (fast * t).exp());
        let c = 0.5 * (e1 + e2);
        let q = if s * t < 1e-4 {
            let st = s * t;
            (half * t).exp() * t * (1.0 + st * st / 6.0)
        } else {
            (e1 - e2) / (2.0 * s)
        };
        (c, q)
    } else {
        let w = (-disc).sqrt();
        let damp = (half * t).exp();
        let q = if w * t < 1e-4 {
            let wt = w * t;
            damp * t * (1.0 - wt * wt / 6.0)
        } else {
            damp * (w * t).sin() / w
        };
        (damp * (w * t).cos(), q)
    };
    // M - half I = [[-half, 1], [-det, tau - half]] = [[-half, 1], [-det, half]]
    [[c - q * half, q], [-q * det, c + q * half]]
}

/// Exact solution of `eps u'' + u' + A_h u = 0` with `u(0) = u0`, `u'(0) = v0`.
///
/// Decouples along the eigenvectors of `A_h`; each mode is a 2x2 system
/// propagated in closed form, which equals the exponential of the 2N x 2N
/// block generator.
pub fn dense_linear_solution(
    op: &DiscreteOperator,
    eps: f64,
    u0: &[f64],
    v0: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(op.len(), u0.len())?;
    check_len(op.len(), v0.len())?;
    if !(eps > 0.0) || !(t >= 0.0) {
        return Err(Error::Config(format!(
            "linear oracle needs eps > 0 and t >= 0, got {eps}, {t}"
        )));
    }
    let eig = SymmetricEigen::new(dense_matrix(op)?);
    let q = &eig.eigenvectors;
    let a = q.transpose() * DVector::from_column_slice(u0);
    let b = q.transpose() * DVector::from_column_slice(v0);
    let n = op.len();
    let mut au = DVector::zeros(n);
    let mut bv = DVector::zeros(n);
    for k in 0..n {
        let m = mode_propagator(eig.eigenvalues[k], eps, t);
        au[k] = m[0][0] * a[k] + m[0][1] * b[k];
        bv[k] = m[1][0] * a[k] + m[1][1] * b[k];
    }
    Ok(((q * au).as_slice().to_vec(), (q * bv).as_slice().to_vec()))
}

/// Exact solution of the linear parabolic problem `u' + A_h u = 0`.
pub fn dense_parabolic_solution(op: &DiscreteOperator, u0: &[f64], t: f64) -> Result<Vec<f64>> {
    check_len(op.len(), u0.len())?;
    let eig = SymmetricEigen::new(dense_matrix(op)?);
    let q = &eig.eigenvectors;
    let mut a = q.transpose() * DVector::from_column_slice(u0);
    for k in 0..a.len() {
        a[k] *= (-eig.eigenvalues[k] * t).exp();
    }
    Ok((q * a).as_slice().to_vec())
}

/// `|w|_{H_{-1}}` through a dense Cholesky factorization.
pub fn dense_hminus1(w: &[f64], op: &DiscreteOperator) -> Result<f64> {
    check_len(op.len(), w.len())?;
    let chol = dense_matrix(op)?
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            pivot: 0,
            value: f64::NAN,
        })?;
    let wv = DVector::from_column_slice(w);
    let x = chol.solve(&wv);
    Ok((op.grid().cell_volume() * x.dot(&wv)).max(0.0).sqrt())
}

/// Smallest eigenvalue from the dense symmetric eigensolver.
pub fn dense_lambda1(op: &DiscreteOperator) -> Result<f64> {
    let eig = SymmetricEigen::new(dense_matrix(op)?);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `max_i |(F(u+du) - F(u-du)) / (2 du) - f(u)|`.
pub fn fd_gradient_check(nl: &Nonlinearity, u: &[f64], du: f64) -> f64 {
    assert!(du > 0.0, "finite-difference step must be positive");
    u.iter()
        .enumerate()
        .map(|(i, &x)| {
            let fd = (nl.antiderivative_at(i, x + du) - nl.antiderivative_at(i, x - du)) / (2.0 * du);
            (fd - nl.f_at(i, x)).abs()
        })
        .fold(0.0, f64::max)
}

/// Hand assembly of the 1D flux-form matrix `beta u - (a u')'` on `grid`,
/// with `a` at half-points as the mean of its values at the two adjacent
/// nodes (boundary nodes included).
pub fn dense_flux_assembly_1d(
    grid: &Grid,
    a: impl Fn(f64) -> f64,
    beta: impl Fn(f64) -> f64,
) -> Result<DMatrix<f64>> {
    if grid.dim() != 1 {
        return Err(Error::Config("1D assembly oracle needs a 1D grid".into()));
    }
    let n = grid.len();
    let h = grid.spacing()[0];
    let x = |j: usize| grid.lower()[0] + j as f64 * h; // j = 0 and n+1 are boundary nodes
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let j = i + 1;
        let west = 0.5 * (a(x(j - 1)) + a(x(j)));
        let east = 0.5 * (a(x(j)) + a(x(j + 1)));
        m[(i, i)] = (west + east) / (h * h) + beta(x(j));
        if i > 0 {
            m[(i, i - 1)] = -west / (h * h);
        }
        if i + 1 < n {
            m[(i, i + 1)] = -east / (h * h);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CoefficientField;
    use crate::norms::{inner_h1, norm_hminus1};
    use crate::operator::build_operator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn laplacian(n: usize) -> DiscreteOperator {
        let g = Grid::with_bounds(&[0.0], &[PI], &[n]).unwrap();
        build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn propagator_identity_at_zero() {
        for (l, e) in [(1.0, 0.1), (1e4, 1e-3), (1e-6, 10.0)] {
            let m = mode_propagator(l, e, 0.0);
            assert_eq!(m, [[1.0, 0.0], [0.0, 1.0]]);
        }
    }

    #[test]
    fn scalar_characteristic_roots() {
        // u'' + u' + lambda u = 0, eps = 1
        for lam in [0.1, 0.25 - 1e-9, 3.0] {
            let t = 1.7;
            let m = mode_propagator(lam, 1.0, t);
            let d: f64 = 0.25 - lam;
            let (u, du) = if d > 0.0 {
                let s = d.sqrt();
                let (r1, r2) = (-0.5 + s, -0.5 - s);
                // u(0) = 1, u'(0) = 0
                let c1 = -r2 / (r1 - r2);
                let c2 = r1 / (r1 - r2);
                (
                    c1 * (r1 * t).exp() + c2 * (r2 * t).exp(),
                    c1 * r1 * (r1 * t).exp() + c2 * r2 * (r2 * t).exp(),
                )
            } else {
                let w = (-d).sqrt();
                let e = (-0.5 * t).exp();
                let u = e * ((w * t).cos() + 0.5 / w * (w * t).sin());
                let du = e * (-(0.5 * 0.5 / w + w) * (w * t).sin());
                (u, du)
            };
            assert!((m[0][0] - u).abs() < 1e-6, "lam {lam}: {} vs {u}", m[0][0]);
            assert!((m[1][0] - du).abs() < 1e-6, "lam {lam}: {} vs {du}", m[1][0]);
        }
    }

    #[test]
    fn propagator_matches_matrix_exponential() {
        for (l, e, t) in [(2.0, 0.1, 0.7), (0.3, 2.0, 3.0), (50.0, 0.01, 0.05)] {
            let gen = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -l / e, -1.0 / e]);
            let ex = (gen * t).exp();
            let m = mode_propagator(l, e, t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((ex[(i, j)] - m[i][j]).abs() < 1e-10 * (1.0 + ex[(i, j)].abs()));
                }
            }
        }
    }

    #[test]
    fn linear_solution_semigroup_law() {
        let op = laplacian(16);
        let u0 = op.grid().sample(|x| x[0] * (PI - x[0]));
        let v0 = op.grid().sample(|x| (3.0 * x[0]).sin());
        let (u1, v1) = dense_linear_solution(&op, 0.1, &u0, &v0, 0.3).unwrap();
        let (u2, v2) = dense_linear_solution(&op, 0.1, &u1, &v1, 0.5).unwrap();
        let (u3, v3) = dense_linear_solution(&op, 0.1, &u0, &v0, 0.8).unwrap();
        for (a, b) in u2.iter().zip(&u3).chain(v2.iter().zip(&v3)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let (u, v) = dense_linear_solution(&op, 0.1, &u0, &v0, 0.0).unwrap();
        for (a, b) in u.iter().zip(&u0).chain(v.iter().zip(&v0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hminus1_dense_vs_iterative() {
        let op = laplacian(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let w: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = dense_hminus1(&w, &op).unwrap();
            let b = norm_hminus1(&w, &op).unwrap();
            assert!((a - b).abs() <= 1e-8 * a);
        }
        assert_eq!(dense_hminus1(&[0.0; 8], &op).unwrap(), 0.0);
        let u = op.grid().sample(|x| x[0].sin() + 0.2 * x[0]);
        let au = op.apply(&u);
        let h1 = inner_h1(&u, &u, &op).unwrap().sqrt();
        assert!((dense_hminus1(&au, &op).unwrap() - h1).abs() < 1e-10 * h1);
    }

    #[test]
    fn fd_check_orders() {
        let g = Grid::with_bounds(&[0.0], &[PI], &[16]).unwrap();
        let lin = Nonlinearity::linear(vec![2.5; 16]);
        let u: Vec<f64> = (0..16).map(|i| i as f64 * 0.3 - 2.0).collect();
        assert!(fd_gradient_check(&lin, &u, 1e-3) < 1e-11);
        let cub = Nonlinearity::chafee_infante(&g, 2.0, 1.0).unwrap();
        let r1 = fd_gradient_check(&cub, &u, 1e-3);
        let r2 = fd_gradient_check(&cub, &u, 1e-4);
        assert!((r1 / r2 - 100.0).abs() < 5.0, "{}", r1 / r2);
        let z = vec![0.0; 16];
        assert!(fd_gradient_check(&cub, &z, 1e-3) <= cub.c_bar() * 1e-6);
    }

    #[test]
    fn flux_assembly_matches_operator() {
        let g = Grid::with_bounds(&[0.0], &[1.0], &[4]).unwrap();
        let coeffs = CoefficientField::isotropic(&g, |x| 1.0 + x[0] * x[0], |_| 0.0).unwrap();
        let op = build_operator(&g, &coeffs).unwrap();
        let hand = dense_flux_assembly_1d(&g, |x| 1.0 + x * x, |_| 0.0).unwrap();
        let sparse = op.matrix().to_dense();
        assert!((hand - sparse).abs().max() < 1e-12);
    }

    #[test]
    fn dense_cap_refused() {
        let g = Grid::build(&[1.0, 1.0], &[70, 70]).unwrap();
        let op = build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap();
        assert!(matches!(
            dense_hminus1(&vec![1.0; 4900], &op),
            Err(Error::DenseCapExceeded { .. })
        ));
    }
}
