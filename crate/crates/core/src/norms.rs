//! Discrete norm hierarchy: L^s, H_1, H_{-1} and the spectral H_{-alpha} scale.
//!
//! All integrals use the nodal rule `prod h_i * sum_i g_i`, so
//! `<u, v>_{H_1} = <A_h u, v>_{L^2}` and `|w|^2_{H_{-1}} = <A_h^{-1} w, w>_{L^2}`
//! hold exactly at the discrete level.

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::linalg::dot;
use crate::operator::DiscreteOperator;

pub fn inner_l2(u: &[f64], v: &[f64], grid: &Grid) -> Result<f64> {
    check_len(grid.len(), u.len())?;
    check_len(grid.len(), v.len())?;
    Ok(grid.cell_volume() * dot(u, v))
}

pub fn norm_l2(u: &[f64], grid: &Grid) -> Result<f64> {
    inner_l2(u, u, grid).map(f64::sqrt)
}

/// Discrete `|u|_{L^s}` for `s >= 1`.
pub fn norm_lp(u: &[f64], grid: &Grid, s: f64) -> Result<f64> {
    check_len(grid.len(), u.len())?;
    let sum: f64 = u.iter().map(|v| v.abs().powf(s)).sum();
    Ok((grid.cell_volume() * sum).powf(1.0 / s))
}

/// Discrete `|u|_{L^1}`.
pub fn norm_l1(u: &[f64], grid: &Grid) -> Result<f64> {
    check_len(grid.len(), u.len())?;
    Ok(grid.cell_volume() * u.iter().map(|v| v.abs()).sum::<f64>())
}

/// Nodal quadrature of `g`.
pub fn integral(g: &[f64], grid: &Grid) -> Result<f64> {
    check_len(grid.len(), g.len())?;
    Ok(grid.cell_volume() * g.iter().sum::<f64>())
}

pub fn inner_h1(u: &[f64], v: &[f64], op: &DiscreteOperator) -> Result<f64> {
    check_len(op.len(), u.len())?;
    check_len(op.len(), v.len())?;
    inner_l2(&op.apply(u), v, op.grid())
}

pub fn norm_h1(u: &[f64], op: &DiscreteOperator) -> Result<f64> {
    inner_h1(u, u, op).map(|q| q.max(0.0).sqrt())
}

/// `<A grad u, grad u>`, i.e. the H_1 form without its `beta` part.
pub fn gradient_form(u: &[f64], op: &DiscreteOperator) -> Result<f64> {
    let full = inner_h1(u, u, op)?;
    let beta_part: f64 = op
        .coeffs()
        .beta()
        .iter()
        .zip(u)
        .map(|(b, x)| b * x * x)
        .sum::<f64>()
        * op.grid().cell_volume();
    Ok(full - beta_part)
}

/// `<w1, w2>_{H_{-1}} = <A_h^{-1} w1, w2>_{L^2}`.
pub fn inner_hminus1(w1: &[f64], w2: &[f64], op: &DiscreteOperator) -> Result<f64> {
    check_len(op.len(), w2.len())?;
    let x = op.solve(w1)?;
    inner_l2(&x, w2, op.grid())
}

pub fn norm_hminus1(w: &[f64], op: &DiscreteOperator) -> Result<f64> {
    inner_hminus1(w, w, op).map(|q| q.max(0.0).sqrt())
}

/// Spectral `|A_h^{-alpha/2} w|_{L^2}` for `alpha` in `[0, 1]`.
///
/// `alpha = 0` and `alpha = 1` are routed through the exact L^2 and H_{-1}
/// paths, so they work on any grid; interior exponents need the dense
/// eigendecomposition.
pub fn fractional_norm(w: &[f64], op: &DiscreteOperator, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "fractional exponent must lie in [0, 1], got {alpha}"
        )));
    }
    check_len(op.len(), w.len())?;
    if alpha == 0.0 {
        return norm_l2(w, op.grid());
    }
    if alpha == 1.0 {
        return norm_hminus1(w, op);
    }
    spectral_norm(w, op, alpha)
}

/// Eigen-expansion `sqrt(vol * sum_k lambda_k^{-alpha} (q_k . w)^2)`, any `alpha`.
pub fn spectral_norm(w: &[f64], op: &DiscreteOperator, alpha: f64) -> Result<f64> {
    check_len(op.len(), w.len())?;
    let eig = op.dense_eigen()?;
    let n = op.len();
    let mut acc = 0.0;
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if !(lam > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: k, value: lam });
        }
        let col = eig.eigenvectors.column(k);
        let c: f64 = (0..n).map(|i| col[i] * w[i]).sum();
        acc += lam.powf(-alpha) * c * c;
    }
    Ok((op.grid().cell_volume() * acc).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CoefficientField;
    use crate::operator::build_operator;
    use std::f64::consts::PI;

    fn sine_op(n: usize) -> DiscreteOperator {
        let g = Grid::with_bounds(&[0.0], &[PI], &[n]).unwrap();
        build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_fields() {
        let op = sine_op(8);
        let z = vec![0.0; 8];
        assert_eq!(inner_l2(&z, &z, op.grid()).unwrap(), 0.0);
        assert_eq!(inner_h1(&z, &z, &op).unwrap(), 0.0);
        assert_eq!(norm_hminus1(&z, &op).unwrap(), 0.0);
    }

    #[test]
    fn three_term_hand_sum() {
        let g = Grid::build(&[0.5], &[3]).unwrap();
        let u = [0.3, -1.2, 2.5];
        let v = [1.1, 0.4, -0.7];
        let by_hand = 0.25 * (0.3 * 1.1 + -1.2 * 0.4 + 2.5 * -0.7);
        assert!((inner_l2(&u, &v, &g).unwrap() - by_hand).abs() < 1e-15);
    }

    #[test]
    fn size_mismatch_reported() {
        let op = sine_op(4);
        assert!(matches!(
            inner_l2(&[1.0; 3], &[1.0; 4], op.grid()),
            Err(Error::SizeMismatch { .. })
        ));
        assert!(inner_h1(&[1.0; 5], &[1.0; 4], &op).is_err());
        assert!(norm_hminus1(&[1.0; 5], &op).is_err());
    }

    // second-order convergence of sin-based integrals: error ratio ~ 4 when h halves
    fn sine_errors(f: impl Fn(&DiscreteOperator, &[f64]) -> f64, exact: f64) -> (f64, f64) {
        let mut errs = Vec::new();
        for n in [63, 127] {
            let op = sine_op(n);
            let u = op.grid().sample(|x| x[0].sin());
            errs.push((f(&op, &u) - exact).abs());
        }
        (errs[0], errs[1])
    }

    #[test]
    fn l2_of_sine() {
        let (e1, e2) = sine_errors(|op, u| inner_l2(u, u, op.grid()).unwrap(), PI / 2.0);
        // nodal rule is exact for sin^2 on a uniform grid up to round-off
        assert!(e1 < 1e-12 && e2 < 1e-12);
    }

    #[test]
    fn h1_of_sine_second_order() {
        let (e1, e2) = sine_errors(|op, u| inner_h1(u, u, op).unwrap(), PI / 2.0);
        assert!(e1 > 0.0);
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
    }

    #[test]
    fn hminus1_of_sine_second_order() {
        let (e1, e2) = sine_errors(|op, u| norm_hminus1(u, op).unwrap(), (PI / 2.0).sqrt());
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
    }

    #[test]
    fn fractional_endpoints() {
        let op = sine_op(16);
        let w: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
        let l2 = norm_l2(&w, op.grid()).unwrap();
        let hm = norm_hminus1(&w, &op).unwrap();
        assert_eq!(fractional_norm(&w, &op, 0.0).unwrap(), l2);
        assert!((spectral_norm(&w, &op, 0.0).unwrap() - l2).abs() <= 1e-8 * l2);
        assert!((spectral_norm(&w, &op, 1.0).unwrap() - hm).abs() <= 1e-8 * hm);
        assert!(fractional_norm(&w, &op, 1.5).is_err());
    }

    #[test]
    fn gradient_form_excludes_beta() {
        let g = Grid::with_bounds(&[0.0], &[PI], &[31]).unwrap();
        let with_beta =
            build_operator(&g, &CoefficientField::constant(&g, 1.0, 3.0).unwrap()).unwrap();
        let without = sine_op(31);
        let u = g.sample(|x| x[0].sin() * (1.0 + x[0]));
        let a = gradient_form(&u, &with_beta).unwrap();
        let b = inner_h1(&u, &u, &without).unwrap();
        assert!((a - b).abs() < 1e-10 * b);
    }
}
