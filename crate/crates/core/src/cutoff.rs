//! Radial cutoff fields used to localize energies outside a ball.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Ramp `bar_theta`: 0 on `(-inf, 1]`, 1 on `[2, inf)`, and the quintic
/// smoothstep `6t^5 - 15t^4 + 10t^3` with `t = s - 1` in between (C^2, monotone).
pub fn ramp(s: f64) -> f64 {
    if s <= 1.0 {
        0.0
    } else if s >= 2.0 {
        1.0
    } else {
        let t = s - 1.0;
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// `theta = bar_theta^2`.
pub fn ramp_squared(s: f64) -> f64 {
    let r = ramp(s);
    r * r
}

/// Nodal values of `bar_theta_k(x) = bar_theta(|x|^2 / k^2)` and `theta_k = bar_theta_k^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffField {
    pub k: u32,
    pub bar_theta: Vec<f64>,
    pub theta: Vec<f64>,
}

pub fn cutoff_field(grid: &Grid, k: u32) -> Result<CutoffField> {
    if k == 0 {
        return Err(Error::Config("cutoff radius k must be at least 1".into()));
    }
    let k2 = (k as f64) * (k as f64);
    let bar_theta: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            let r2: f64 = x.iter().map(|c| c * c).sum();
            ramp(r2 / k2)
        })
        .collect();
    let theta = bar_theta.iter().map(|b| b * b).collect();
    Ok(CutoffField {
        k,
        bar_theta,
        theta,
    })
}

impl CutoffField {
    /// Nodewise product `theta_k * z`.
    pub fn localize(&self, z: &[f64]) -> Vec<f64> {
        self.theta.iter().zip(z).map(|(t, v)| t * v).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints_and_monotone() {
        assert_eq!(ramp(-3.0), 0.0);
        assert_eq!(ramp(1.0), 0.0);
        assert_eq!(ramp(2.0), 1.0);
        assert_eq!(ramp(7.0), 1.0);
        let mut prev = 0.0;
        for i in 0..=1000 {
            let v = ramp(1.0 + i as f64 / 1000.0);
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        assert!((ramp(1.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cutoff_values_at_reference_radii() {
        let g = Grid::build(&[50.0], &[999]).unwrap();
        let k = 10;
        let c = cutoff_field(&g, k).unwrap();
        for i in 0..g.len() {
            let r = g.radius(i);
            if r <= k as f64 / 2.0 || r <= k as f64 {
                assert_eq!(c.theta[i], 0.0);
            }
            if r >= 2.0 * k as f64 || r >= 2f64.sqrt() * k as f64 + 1e-12 {
                assert_eq!(c.theta[i], 1.0);
            }
            assert_eq!(c.theta[i], c.bar_theta[i] * c.bar_theta[i]);
        }
    }

    #[test]
    fn larger_k_is_smaller() {
        let g = Grid::build(&[30.0, 30.0], &[41, 41]).unwrap();
        let a = cutoff_field(&g, 5).unwrap();
        let b = cutoff_field(&g, 9).unwrap();
        assert!(a.theta.iter().zip(&b.theta).all(|(x, y)| y <= x));
    }

    #[test]
    fn zero_k_rejected() {
        let g = Grid::build(&[1.0], &[3]).unwrap();
        assert!(cutoff_field(&g, 0).is_err());
    }
}
