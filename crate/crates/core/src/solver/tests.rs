use std::collections::BTreeMap;

use approx::assert_relative_eq;

use super::*;
use crate::dynamics::builtin_model;

fn model(name: &str) -> GameModel {
    builtin_model(name, &BTreeMap::new()).unwrap()
}

fn square(n: usize) -> Grid {
    Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![n, n]).unwrap()
}

fn line(n: usize) -> Grid {
    Grid::new(vec![-1.0], vec![1.0], vec![n]).unwrap()
}

fn config(backend: Backend, tol: f64) -> SolveConfig {
    SolveConfig {
        backend,
        tol,
        ..SolveConfig::default()
    }
}

fn obstacle(model: &GameModel, grid: &Grid) -> Vec<f64> {
    (0..grid.len()).map(|i| model.eval_constraint(&grid.point(i))).collect()
}

fn assert_bounds(model: &GameModel, field: &ValueField) {
    assert!(field.min() >= -1e-9, "min {}", field.min());
    assert!(field.max() <= model.bound() + 1e-9, "max {}", field.max());
    for (v, h) in field.values().iter().zip(obstacle(model, field.grid())) {
        assert!(*v >= h - 1e-9, "V {v} below h {h}");
    }
}

/// sup_t e^{−γt} h(x e^{−t}) for the singleton model, densely sampled.
fn singleton_exact(model: &GameModel, x: f64, gamma: f64) -> f64 {
    let mut best = 0.0f64;
    let dt = 1e-3;
    for k in 0..=200_000 {
        let t = k as f64 * dt;
        best = best.max((-gamma * t).exp() * model.eval_constraint(&[x * (-t).exp()]));
    }
    best
}

#[test]
fn contraction_factor_example() {
    let m = model("jet_engine");
    let cfg = SolveConfig {
        dt: Some(0.01),
        max_iters: 5,
        ..config(Backend::Sl, 1e-12)
    };
    let (_, report) = solve(&m, &square(21), &cfg).unwrap();
    assert_relative_eq!(report.contraction_factor.unwrap(), 0.9990005, epsilon = 1e-7);
    assert_eq!(report.iterations, 5);
    assert!(!report.converged);
}

#[test]
fn sl_iterates_are_monotone_and_contract() {
    let m = model("jet_engine");
    let grid = square(21);
    let cfg = config(Backend::Sl, 1e-8);
    let prep = prepare(&m, &grid, &cfg).unwrap();
    let table = sl::Transitions::build(&prep.evaluator, &grid, prep.dt, cfg.foot_step).unwrap();
    let beta = (-cfg.gamma * prep.dt).exp();
    for kind in [ValueKind::Lower, ValueKind::Upper] {
        let sweep = sl::SlSweep::new(&table, &m, &grid, kind, prep.dt, cfg.gamma);
        let mut cur = sweep.init();
        assert!(cur.iter().zip(obstacle(&m, &grid)).all(|(v, h)| *v == h.max(0.0)));
        let mut next = vec![0.0; cur.len()];
        let mut prev_r = f64::INFINITY;
        for _ in 0..400 {
            let step = sweep_once(&sweep, &cur, &mut next);
            let r = step.residual;
            assert!(step.min_increment >= -1e-12);
            for (a, b) in next.iter().zip(&cur) {
                assert!(*a >= *b - 1e-12);
            }
            assert!(r <= beta * prev_r + 1e-12, "{r} > {beta} * {prev_r}");
            prev_r = r;
            std::mem::swap(&mut cur, &mut next);
        }
    }
}

#[test]
fn fd_singleton_reaches_steady_state() {
    let m = model("singleton_1d");
    let grid = line(201);
    let eq_tol = 1e-6;
    let prep = prepare(&m, &grid, &config(Backend::Fd, 1e-8)).unwrap();
    let cfg = config(Backend::Fd, eq_tol * prep.dt);
    let (field, report) = solve(&m, &grid, &cfg).unwrap();
    assert!(report.converged);
    assert!(report.final_residual <= cfg.tol);
    let sweep = fd::FdSweep::new(&prep.evaluator, &grid, ValueKind::Lower, prep.dt, cfg.gamma);
    for node in 0..grid.len() {
        if grid.in_boundary_band(node, BOUNDARY_BAND) {
            continue;
        }
        let v = field.values()[node];
        let residual = (v - sweep.update(node, field.values())) / prep.dt;
        assert!(residual.abs() <= 10.0 * eq_tol, "node {node}: {residual}");
    }
    assert_bounds(&m, &field);
}

#[test]
fn singleton_matches_closed_form() {
    let m = model("singleton_1d");
    let grid = line(201);
    for backend in [Backend::Sl, Backend::Fd] {
        let (field, report) = solve(&m, &grid, &config(backend, 1e-9)).unwrap();
        assert!(report.converged, "{backend}");
        for x in [-0.95, -0.7, -0.55, -0.3, 0.0, 0.2, 0.45, 0.6, 0.8, 0.9] {
            let exact = singleton_exact(&m, x, 0.1);
            let v = field.interpolate(&[x]).unwrap();
            assert!((v - exact).abs() < 0.02, "{backend} x={x}: {v} vs {exact}");
        }
    }
}

#[test]
fn jet_bounds_both_backends() {
    let m = model("jet_engine");
    let grid = square(41);
    for backend in [Backend::Sl, Backend::Fd] {
        let both = solve_both_values(&m, &grid, &config(backend, 1e-6)).unwrap();
        assert!(both.lower_report.converged && both.upper_report.converged);
        assert_bounds(&m, &both.lower);
        assert_bounds(&m, &both.upper);
        assert!(both.minimax_excess <= 1e-9, "{backend}: {}", both.minimax_excess);
        assert!(both.gap.min >= -1e-9);
        assert_eq!(both.lower_report.iterations, both.upper_report.iterations);
    }
}

#[test]
fn singleton_boxes_give_identical_values() {
    let m = model("singleton_1d");
    for backend in [Backend::Sl, Backend::Fd] {
        let both = solve_both_values(&m, &line(41), &config(backend, 1e-8)).unwrap();
        assert_eq!(both.lower.values(), both.upper.values());
        assert_eq!(both.gap.max, 0.0);
    }
}

#[test]
fn minimax_inequality_on_affine_model() {
    let m = model("affine_test_2d");
    let both = solve_both_values(&m, &square(31), &config(Backend::Sl, 1e-7)).unwrap();
    assert!(both.minimax_excess <= 1e-9);
    assert_bounds(&m, &both.lower);
}

#[test]
fn forced_non_convergence_is_reported() {
    let m = model("jet_engine");
    let cfg = SolveConfig {
        max_iters: 1,
        ..config(Backend::Sl, 1e-8)
    };
    let (field, report) = solve(&m, &square(21), &cfg).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 1);
    assert_eq!(field.residual_history().len(), 1);
    assert!(report.to_text(false).contains("converged = false"));
    assert!(!report.to_text(false).contains("wall_time"));
    assert!(report.min_increment >= 0.0);
}

#[test]
fn fd_rejects_unstable_step() {
    let m = model("jet_engine");
    let cfg = SolveConfig {
        dt: Some(1.0),
        ..config(Backend::Fd, 1e-8)
    };
    assert!(matches!(solve(&m, &square(21), &cfg), Err(Error::Config(_))));
}

#[test]
fn grid_dimension_must_match() {
    let m = model("jet_engine");
    assert!(matches!(
        solve(&m, &line(21), &config(Backend::Sl, 1e-6)),
        Err(Error::Shape(_))
    ));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let m = model("jet_engine");
    let grid = square(61);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut out = Vec::new();
            for backend in [Backend::Sl, Backend::Fd] {
                let cfg = SolveConfig {
                    max_iters: 300,
                    ..config(backend, 1e-8)
                };
                let both = solve_both_values(&m, &grid, &cfg).unwrap();
                out.push(both.lower.values().to_vec());
                out.push(both.upper.values().to_vec());
                out.push(both.lower.residual_history().to_vec());
            }
            out
        })
    };
    let one = run(1);
    let many = run(4);
    for (a, b) in one.iter().zip(&many) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn residual_ratio_summary() {
    let (max, last) = residual_ratios(&[1.0, 0.5, 0.4, 0.0]);
    assert_eq!(max, Some(0.8));
    assert_eq!(last, Some(0.0));
    assert_eq!(residual_ratios(&[1.0]), (None, None));
}

/// ẋ = u + d with both players on the same axis and the disturbance
/// stronger than the control.
fn shared_axis_model() -> GameModel {
    use crate::dynamics::{ActionBox, AffineDynamics, Constraint, Dynamics, PolynomialMap, Term};
    let poly = |terms: Vec<Vec<Term>>| PolynomialMap::new(1, terms).unwrap();
    GameModel::new(
        "shared_axis",
        1,
        ActionBox::symmetric(&[0.5]).unwrap(),
        ActionBox::symmetric(&[1.0]).unwrap(),
        Dynamics::Affine(AffineDynamics {
            drift: poly(vec![vec![]]),
            control: poly(vec![vec![Term::new(1.0, vec![0])]]),
            disturbance: poly(vec![vec![Term::new(1.0, vec![0])]]),
        }),
        Constraint::Polynomial {
            poly: poly(vec![vec![Term::new(1.0, vec![2]), Term::new(-0.25, vec![0])]]),
            normalize: true,
        },
        0.5,
    )
    .unwrap()
}

#[test]
fn move_order_matters_on_a_shared_axis() {
    let m = shared_axis_model();
    let both = solve_both_values(&m, &line(81), &config(Backend::Sl, 1e-9)).unwrap();
    assert!(both.minimax_excess <= 1e-9);
    assert!(both.gap.max > 1e-6, "gap {:?}", both.gap);
}
