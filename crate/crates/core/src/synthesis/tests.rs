use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::dynamics::builtin_model;
use crate::grid::{Grid, ValueKind};
use crate::setops::extract_sublevel;

fn model(name: &str) -> GameModel {
    builtin_model(name, &BTreeMap::new()).unwrap()
}

fn square(n: usize) -> Grid {
    Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![n, n]).unwrap()
}

fn field(grid: Grid, f: impl Fn(&[f64]) -> f64) -> ValueField {
    ValueField::from_fn(grid, 0.1, ValueKind::Lower, f).unwrap()
}

fn policy<'a>(m: &'a GameModel, f: &'a ValueField) -> FeedbackPolicy<'a> {
    FeedbackPolicy::new(m, f, &HamiltonianSettings::default()).unwrap()
}

#[test]
fn singleton_boxes_return_the_point() {
    let m = model("singleton_1d");
    let f = field(Grid::new(vec![-1.0], vec![1.0], vec![21]).unwrap(), |p| p[0] * p[0]);
    let p = policy(&m, &f);
    for x in [-0.7, 0.0, 0.3] {
        assert_eq!(p.feedback_control(&[x], &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(p.worst_case_disturbance(&[x]).unwrap(), vec![0.0]);
    }
}

#[test]
fn jet_sign_analysis() {
    let m = model("jet_engine");
    let vy = field(square(21), |p| p[1]);
    let p = policy(&m, &vy);
    assert_eq!(p.feedback_control(&[0.5, 0.1], &[0.0]).unwrap(), vec![-0.01]);
    assert_eq!(p.feedback_control(&[-0.5, 0.1], &[0.0]).unwrap(), vec![0.01]);
    let vx = field(square(21), |p| p[0]);
    let p = policy(&m, &vx);
    assert_eq!(p.worst_case_disturbance(&[0.2, -0.3]).unwrap(), vec![0.02]);
}

#[test]
fn zero_gradient_takes_first_sample() {
    let m = model("jet_engine");
    let flat = field(square(11), |_| 0.2);
    let p = policy(&m, &flat);
    assert_eq!(p.gradient(&[0.1, 0.2]).unwrap(), vec![0.0, 0.0]);
    assert_eq!(p.feedback_control(&[0.1, 0.2], &[0.02]).unwrap(), vec![-0.01]);
    assert_eq!(p.worst_case_disturbance(&[0.1, 0.2]).unwrap(), vec![-0.02]);
}

#[test]
fn disturbance_outside_box_is_rejected() {
    let m = model("jet_engine");
    let f = field(square(11), |p| p[0]);
    let p = policy(&m, &f);
    assert!(matches!(p.feedback_control(&[0.0, 0.0], &[0.5]), Err(Error::Domain(_))));
}

#[test]
fn gradient_of_affine_field_is_exact() {
    let m = model("jet_engine");
    let f = field(square(21), |p| 2.0 * p[0] - 3.0 * p[1]);
    let p = policy(&m, &f);
    for x in [[0.13, -0.4], [1.0, 1.0], [-1.0, 0.5], [2.0, -3.0]] {
        let g = p.gradient(&x).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12, "{x:?}: {g:?}");
    }
}

#[test]
fn zero_horizon_gives_one_row() {
    let m = model("jet_engine");
    let t = simulate(
        &m,
        &ControlPolicy::Constant(vec![0.0]),
        &DisturbancePolicy::Constant(vec![0.0]),
        &[0.0, 0.0],
        0.0,
        0.01,
    )
    .unwrap();
    assert_eq!(t.len(), 1);
    let csv = t.to_csv();
    assert!(csv.starts_with("t,x_1,x_2,u_1,d_1,h\n"));
    assert_eq!(csv.lines().count(), 2);
}

fn singleton_error(dt: f64) -> f64 {
    let m = model("singleton_1d");
    let t = simulate(
        &m,
        &ControlPolicy::Constant(vec![0.0]),
        &DisturbancePolicy::Constant(vec![0.0]),
        &[0.4],
        5.0,
        dt,
    )
    .unwrap();
    (t.final_state().unwrap()[0] - 0.4 * (-5.0f64).exp()).abs()
}

#[test]
fn singleton_final_state_and_rk4_order() {
    assert!(singleton_error(0.01) <= 1e-6);
    let (coarse, fine) = (singleton_error(0.1), singleton_error(0.05));
    let ratio = coarse / fine;
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn bad_inputs_are_rejected() {
    let m = model("jet_engine");
    let u = ControlPolicy::Constant(vec![0.0]);
    let d = DisturbancePolicy::Constant(vec![0.0]);
    assert!(matches!(simulate(&m, &u, &d, &[0.0, 0.0], 1.0, 0.0), Err(Error::Precondition(_))));
    assert!(matches!(simulate(&m, &u, &d, &[0.0, 0.0], -1.0, 0.1), Err(Error::Precondition(_))));
    let big = ControlPolicy::Constant(vec![1.0]);
    assert!(simulate(&m, &big, &d, &[0.0, 0.0], 1.0, 0.1).is_err());
}

#[test]
fn blow_up_returns_partial_trajectory() {
    let m = model("jet_engine");
    let err = simulate(
        &m,
        &ControlPolicy::Constant(vec![0.0]),
        &DisturbancePolicy::Constant(vec![0.0]),
        &[20.0, 0.0],
        100.0,
        5.0,
    )
    .unwrap_err();
    match err {
        Error::Diverged { time, partial } => {
            assert!(time > 0.0);
            assert!(!partial.is_empty());
            assert!(partial.states.iter().all(|s| s.iter().all(|v| v.is_finite())));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let m = model("jet_engine");
    let h = field(square(41), |p| m.eval_constraint(p));
    let p = policy(&m, &h);
    let run = |seed| {
        simulate(
            &m,
            &ControlPolicy::Feedback(&p),
            &DisturbancePolicy::Random { seed },
            &[0.2, -0.1],
            3.0,
            0.01,
        )
        .unwrap()
        .to_csv()
    };
    assert_eq!(run(7), run(7));
    assert_ne!(run(7), run(8));
}

#[test]
fn control_is_best_response_to_applied_disturbance() {
    let m = model("jet_engine");
    let h = field(square(41), |p| m.eval_constraint(p));
    let p = policy(&m, &h);
    for dist in [DisturbancePolicy::WorstCase(&p), DisturbancePolicy::Random { seed: 3 }] {
        let t = simulate(&m, &ControlPolicy::Feedback(&p), &dist, &[0.3, 0.2], 2.0, 0.01).unwrap();
        for k in 0..t.len() {
            let x = &t.states[k];
            let g = p.gradient(x).unwrap();
            let rate = |u: &[f64]| -> f64 {
                let f = m.eval_dynamics(x, u, &t.disturbances[k]).unwrap();
                g.iter().zip(&f).map(|(a, b)| a * b).sum()
            };
            let chosen = rate(&t.controls[k]);
            for u in p.controls() {
                assert!(chosen <= rate(u));
            }
        }
    }
}

#[test]
fn contracting_singleton_set_is_invariant() {
    let m = model("singleton_1d");
    let grid = Grid::new(vec![-1.0], vec![1.0], vec![201]).unwrap();
    let f = field(grid, |p| p[0].abs() - 0.45);
    let mask = extract_sublevel(&f, 1e-12).unwrap();
    let settings = VerifySettings {
        trials: 30,
        epsilon: 0.01,
        ..VerifySettings::default()
    };
    let report = verify_invariance(&m, &f, &mask, &settings).unwrap();
    assert_eq!(report.trials, 30);
    assert_eq!(report.runs, 60);
    assert_eq!(report.pass_fraction, 1.0);
    let again = verify_invariance(&m, &f, &mask, &settings).unwrap();
    assert_eq!(report.to_text(), again.to_text());
}

#[test]
fn empty_interior_is_flagged() {
    let m = model("jet_engine");
    let f = field(square(11), |_| 0.3);
    let mask = extract_sublevel(&f, 0.01).unwrap();
    let report = verify_invariance(&m, &f, &mask, &VerifySettings::default()).unwrap();
    assert!(report.empty_interior);
    assert_eq!(report.runs, 0);
    let zero = VerifySettings {
        trials: 0,
        ..VerifySettings::default()
    };
    assert!(verify_invariance(&m, &f, &mask, &zero).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policies_stay_in_the_boxes(x in -1.5f64..1.5, y in -1.5f64..1.5, d in -0.02f64..0.02) {
        let m = model("jet_engine");
        let f = field(square(21), |p| m.eval_constraint(p) + 0.3 * p[0] * p[1]);
        let p = policy(&m, &f);
        let u = p.feedback_control(&[x, y], &[d]).unwrap();
        prop_assert!(m.control_box().contains(&u));
        let w = p.worst_case_disturbance(&[x, y]).unwrap();
        prop_assert!(m.disturbance_box().contains(&w));
    }
}
