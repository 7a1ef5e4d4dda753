use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::dynamics::builtin_model;
use crate::hamiltonian::{HamiltonianEvaluator, HamiltonianSettings};
use crate::solver::{sl_default_dt, solve_both_values, Backend, SolveConfig};

fn model(name: &str) -> GameModel {
    builtin_model(name, &BTreeMap::new()).unwrap()
}

fn square(n: usize) -> Grid {
    Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![n, n]).unwrap()
}

fn vertex_game(m: &GameModel, grid: Grid, dt: f64) -> DiscreteGame {
    DiscreteGame::build(
        m,
        grid,
        m.control_box().vertices(),
        m.disturbance_box().vertices(),
        0.1,
        dt,
    )
    .unwrap()
}

#[test]
fn hat_weights_form_a_partition_of_unity() {
    let w = axis_weights(-1.0, 1.0, 5, 0.25);
    assert_eq!(w.len(), 2);
    assert_eq!(w[0].0, 2);
    assert!((w[0].1 - 0.5).abs() < 1e-15 && (w[1].1 - 0.5).abs() < 1e-15);
    assert_eq!(axis_weights(-1.0, 1.0, 5, 0.5), vec![(3, 1.0)]);
    assert_eq!(axis_weights(-1.0, 1.0, 5, 7.0), vec![(4, 1.0)]);
}

#[test]
fn constant_obstacle_is_its_own_value() {
    let m = model("jet_engine");
    let grid = square(9);
    let n = grid.len();
    let game = vertex_game(&m, grid, 0.05).with_obstacle(vec![0.2; n]).unwrap();
    for kind in [ValueKind::Lower, ValueKind::Upper] {
        let v = brute_force_value(&game, kind, 1e-14).unwrap();
        assert!(v.iter().all(|x| (x - 0.2).abs() <= 1e-14));
    }
}

#[test]
fn lower_is_below_upper_and_bounded() {
    let m = model("jet_engine");
    let game = vertex_game(&m, square(11), 0.02);
    let lo = brute_force_value(&game, ValueKind::Lower, 1e-10).unwrap();
    let up = brute_force_value(&game, ValueKind::Upper, 1e-10).unwrap();
    let h = game.obstacle();
    let (hmin, hmax) = h.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    for ((l, u), h) in lo.iter().zip(&up).zip(h) {
        assert!(*l <= *u + 1e-12);
        assert!(*l >= *h);
    }
    for v in [&lo, &up] {
        assert!(v.iter().all(|x| *x >= hmin && *x <= hmax.max(0.0) + 1e-12));
    }
}

#[test]
fn matches_semi_lagrangian_solver() {
    let m = model("jet_engine");
    let grid = square(11);
    let cfg = SolveConfig {
        backend: Backend::Sl,
        tol: 1e-13,
        ..SolveConfig::default()
    };
    let evaluator = HamiltonianEvaluator::new(&m, &HamiltonianSettings::default()).unwrap();
    let alpha = evaluator.dissipation_bounds(&grid).unwrap();
    let dt = sl_default_dt(&grid, &alpha);
    let both = solve_both_values(&m, &grid, &cfg).unwrap();
    assert_eq!(both.lower_report.dt, dt);
    let game = vertex_game(&m, grid, dt);
    for (field, kind) in [(&both.lower, ValueKind::Lower), (&both.upper, ValueKind::Upper)] {
        let v = brute_force_value(&game, kind, 1e-13).unwrap();
        let diff = v.iter().zip(field.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-10, "{kind}: {diff}");
    }
}

#[test]
fn build_rejects_bad_inputs() {
    let m = model("jet_engine");
    assert!(DiscreteGame::build(&m, square(5), vec![], vec![vec![0.0]], 0.1, 0.01).is_err());
    assert!(DiscreteGame::build(&m, square(5), vec![vec![0.0]], vec![vec![0.0]], 0.0, 0.01).is_err());
    let game = vertex_game(&m, square(5), 0.01);
    assert!(game.with_obstacle(vec![0.0; 3]).is_err());
}

#[test]
fn payoff_preconditions() {
    let jet = model("jet_engine");
    assert!(matches!(
        direct_payoff(&jet, &[0.0, 0.0], 0.1, 200.0, 0.01),
        Err(Error::Precondition(_))
    ));
    let s = model("singleton_1d");
    assert!(matches!(direct_payoff(&s, &[0.4], 0.1, 10.0, 0.01), Err(Error::Precondition(_))));
}

#[test]
fn payoff_on_the_boundary_is_zero() {
    let s = model("singleton_1d");
    let p = direct_payoff(&s, &[0.5], 0.1, 140.0, 0.01).unwrap();
    assert_eq!(p.value, 0.0);
    assert_eq!(p.argmax_time, 0.0);
}

#[test]
fn payoff_far_outside_is_at_least_initial_h() {
    let s = model("singleton_1d");
    // h(x0) = 0.49 for x0² − 0.25 = (1 − √(1 − 4·0.49²)) / (2·0.49).
    let sq = (1.0 - (1.0f64 - 4.0 * 0.49 * 0.49).sqrt()) / 0.98;
    let x0 = (0.25 + sq).sqrt();
    assert!((s.eval_constraint(&[x0]) - 0.49).abs() < 1e-12);
    let p = direct_payoff(&s, &[x0], 0.1, 140.0, 0.01).unwrap();
    assert!(p.value >= 0.49 - 1e-12);
}

#[test]
fn payoff_regression_inside_the_set() {
    let s = model("singleton_1d");
    let p = direct_payoff(&s, &[0.4], 0.1, 140.0, 0.01).unwrap();
    assert!(p.value < 0.0);
    assert_eq!(p.value, PAYOFF_AT_0_4);
    assert!(p.error_bar < 1e-2);
}

/// First verified output of `direct_payoff(singleton_1d, 0.4, 0.1, 140, 0.01)`.
const PAYOFF_AT_0_4: f64 = -1.9565381625966304e-7;

#[test]
fn large_discount_recovers_initial_obstacle() {
    let s = model("singleton_1d");
    for x0 in [-0.9, -0.6, -0.2, 0.0, 0.4, 0.55, 0.95] {
        let p = direct_payoff(&s, &[x0], 10.0, 2.0, 0.001).unwrap();
        let expect = s.eval_constraint(&[x0]).max(0.0);
        assert!((p.value - expect).abs() <= 0.01, "{x0}: {} vs {expect}", p.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn value_is_monotone_in_the_obstacle(
        base in prop::collection::vec(-0.5f64..0.5, 25),
        bump in prop::collection::vec(0.0f64..0.3, 25),
    ) {
        let m = model("affine_test_2d");
        let game = vertex_game(&m, square(5), 0.05);
        let raised: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let g1 = game.clone().with_obstacle(base).unwrap();
        let g2 = game.with_obstacle(raised).unwrap();
        for kind in [ValueKind::Lower, ValueKind::Upper] {
            let v1 = brute_force_value(&g1, kind, 1e-12).unwrap();
            let v2 = brute_force_value(&g2, kind, 1e-12).unwrap();
            prop_assert!(v1.iter().zip(&v2).all(|(a, b)| *a <= *b + 1e-10));
        }
    }
}
