use dampwave::attractor::{semidistance, semidistance_sym, AttractorApproximation, EnsembleSpec};
use dampwave::cutoff::cutoff_field;
use dampwave::dynamics::HyperbolicState;
use dampwave::energy::fit_order;
use dampwave::io::{read_snapshots, write_snapshots, SnapshotSet};
use dampwave::norms::{inner_h1, inner_l2, norm_h1, norm_hminus1, norm_l2};
use dampwave::tails::tail_energy_parts;
use dampwave::{build_operator, CoefficientField, DiscreteOperator, Grid, Nonlinearity};
use proptest::prelude::*;
use std::f64::consts::PI;

const N: usize = 24;

fn variable_operator() -> DiscreteOperator {
    let g = Grid::with_bounds(&[0.0], &[PI], &[N]).unwrap();
    let c = CoefficientField::isotropic(&g, |x| 1.0 + 0.5 * x[0].sin(), |x| 0.2 * x[0]).unwrap();
    build_operator(&g, &c).unwrap()
}

fn field() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, N)
}

fn set_from(rows: Vec<(Vec<f64>, Vec<f64>)>, hash: u64) -> AttractorApproximation {
    let (u, v): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    AttractorApproximation {
        eps: 0.1,
        ensemble: EnsembleSpec {
            members: 1,
            modes: 1,
            radius: 1.0,
            decades: 0.0,
        },
        seed: 0,
        t0: 0.0,
        t_sample: 0.0,
        dt: 0.1,
        stride: 1,
        grid_hash: hash,
        times: vec![0.0; u.len()],
        member: vec![0; u.len()],
        u,
        v,
    }
}

fn snapshot_set() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    prop::collection::vec((field(), field()), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_is_symmetric(u in field(), w in field()) {
        let op = variable_operator();
        let (a, b) = (inner_h1(&u, &w, &op).unwrap(), inner_h1(&w, &u, &op).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn poincare_inequality(u in field()) {
        let op = variable_operator();
        let l1 = op.lambda1().unwrap();
        let h1 = norm_h1(&u, &op).unwrap().powi(2);
        let l2 = norm_l2(&u, op.grid()).unwrap().powi(2);
        prop_assert!(h1 >= l1 * l2 * (1.0 - 1e-9));
    }

    #[test]
    fn hminus1_duality(u in field(), w in field()) {
        let op = variable_operator();
        let pairing = inner_l2(&w, &u, op.grid()).unwrap().abs();
        let bound = norm_hminus1(&w, &op).unwrap() * norm_h1(&u, &op).unwrap();
        prop_assert!(pairing <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn cutoff_shrinks_with_radius(k in 1u32..35, u in field(), v in field()) {
        let g = Grid::with_bounds(&[-50.0], &[50.0], &[N]).unwrap();
        let op = build_operator(&g, &CoefficientField::constant(&g, 1.0, 0.5).unwrap()).unwrap();
        let (small, large) = (cutoff_field(&g, k).unwrap(), cutoff_field(&g, k + 1).unwrap());
        prop_assert!(small.theta.iter().zip(&large.theta).all(|(a, b)| b <= a));
        prop_assert!(small.theta.iter().all(|t| (0.0..=1.0).contains(t)));
        let s = HyperbolicState::new(u, v, 0.0, 0.1).unwrap();
        let (p, q) = (tail_energy_parts(&s, k, &op).unwrap(), tail_energy_parts(&s, k + 1, &op).unwrap());
        prop_assert!(q.l2_parts() <= p.l2_parts() * (1.0 + 1e-12));
    }

    #[test]
    fn dissipation_matches_its_definition(
        coeffs in prop::array::uniform4(-3.0..3.0f64),
        mu_bar in 2.0..6.0f64,
        u in -10.0..10.0f64,
    ) {
        let nl = Nonlinearity::polynomial(coeffs.map(|c| vec![c]), mu_bar, vec![1.0]).unwrap();
        let direct = nl.f_at(0, u) * u - mu_bar * nl.antiderivative_at(0, u);
        prop_assert!((nl.dissipation_at(0, u) - direct).abs() <= 1e-9 * (1.0 + u.powi(4)));
    }

    #[test]
    fn semidistance_axioms(x in snapshot_set(), y in snapshot_set(), z in snapshot_set()) {
        let op = variable_operator();
        let h = op.grid().hash();
        let (x, y, z) = (set_from(x, h), set_from(y, h), set_from(z, h));
        let sd = |a: &AttractorApproximation, b: &AttractorApproximation| semidistance(a, b, &op, 1.0).unwrap();
        prop_assert_eq!(sd(&x, &x), 0.0);
        prop_assert!(sd(&x, &y) >= 0.0);
        prop_assert!(sd(&x, &y.union(&z).unwrap()) <= sd(&x, &y));
        prop_assert!(sd(&x.select(&[0]), &y) <= sd(&x, &y));
        let chained = sd(&x, &y) + semidistance_sym(&y, &z, &op, 1.0).unwrap();
        prop_assert!(sd(&x, &z) <= chained * (1.0 + 1e-12));
    }

    #[test]
    fn snapshots_round_trip(rows in snapshot_set(), eps in 0.01..1.0f64, with_v in any::<bool>()) {
        let times: Vec<f64> = (0..rows.len()).map(|i| 0.25 * i as f64).collect();
        let (u, v): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let set = SnapshotSet { grid_hash: 0xfeed, eps, dt: 1e-3, n: N, times, u, v: if with_v { v } else { Vec::new() } };
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &set).unwrap();
        prop_assert_eq!(buf.len(), 56 + set.times.len() * 8 * (1 + N * if with_v { 2 } else { 1 }));
        prop_assert_eq!(read_snapshots(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn fit_order_recovers_power_laws(p in 0.5..3.0f64, c in 1e-3..1e3f64) {
        let dts = [4e-3, 2e-3, 1e-3];
        let worst: Vec<f64> = dts.iter().map(|dt: &f64| c * dt.powf(p)).collect();
        let fit = fit_order(&dts, &worst).unwrap();
        prop_assert!((fit.order - p).abs() < 1e-9);
        prop_assert!((fit.constant / c - 1.0).abs() < 1e-8);
        prop_assert!(fit.r2 > 1.0 - 1e-12);
    }
}
