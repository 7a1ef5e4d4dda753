//! Feedback synthesis from a value field, closed-loop simulation and
//! invariance checks by simulation.
//!
//! Strategies are realised state by state: at each hold interval the
//! disturbance is chosen first and the control responds to it, which mirrors
//! the information pattern of the lower game.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{ActionBox, GameModel};
use crate::error::{Error, Result};
use crate::grid::format::{fmt_scalar, fmt_vector};
use crate::grid::ValueField;
use crate::hamiltonian::{HamiltonianEvaluator, HamiltonianSettings};
use crate::setops::GridMask;

/// Greedy best responses against ∇V, with ∇V taken by central differences
/// of the interpolated field (half-cell step).
#[derive(Debug, Clone)]
pub struct FeedbackPolicy<'a> {
    model: &'a GameModel,
    field: &'a ValueField,
    controls: Vec<Vec<f64>>,
    disturbances: Vec<Vec<f64>>,
}

impl<'a> FeedbackPolicy<'a> {
    /// Uses the sample plan of `settings`: box vertices for affine dynamics
    /// by default.
    pub fn new(model: &'a GameModel, field: &'a ValueField, settings: &HamiltonianSettings) -> Result<Self> {
        if field.grid().dim() != model.state_dim() {
            return Err(Error::Shape(format!(
                "field dimension {} does not match state dimension {}",
                field.grid().dim(),
                model.state_dim()
            )));
        }
        let plan = HamiltonianEvaluator::new(model, settings)?;
        Ok(Self {
            model,
            field,
            controls: plan.controls().to_vec(),
            disturbances: plan.disturbances().to_vec(),
        })
    }

    pub fn model(&self) -> &'a GameModel {
        self.model
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let grid = self.field.grid();
        let mut g = vec![0.0; x.len()];
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        grid.clamp(&mut plus);
        grid.clamp(&mut minus);
        for axis in 0..x.len() {
            let base = plus[axis];
            let step = 0.5 * grid.spacing()[axis];
            plus[axis] = (base + step).min(grid.upper()[axis]);
            minus[axis] = (base - step).max(grid.lower()[axis]);
            let span = plus[axis] - minus[axis];
            g[axis] = (self.field.interpolate(&plus)? - self.field.interpolate(&minus)?) / span;
            plus[axis] = base;
            minus[axis] = base;
        }
        Ok(g)
    }

    fn rate(&self, x: &[f64], g: &[f64], u: &[f64], d: &[f64], buf: &mut [f64]) -> f64 {
        self.model.dynamics_into(x, u, d, buf);
        g.iter().zip(buf.iter()).map(|(a, b)| a * b).sum()
    }

    /// argmin over control samples of ∇V(x)·f(x, u, d); the first sample wins
    /// ties.
    pub fn feedback_control(&self, x: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        if !self.model.disturbance_box().contains(d) {
            return Err(Error::Domain(format!("disturbance {d:?} outside the disturbance box")));
        }
        let g = self.gradient(x)?;
        Ok(self.controls[self.best_control(x, &g, d).0].clone())
    }

    fn best_control(&self, x: &[f64], g: &[f64], d: &[f64]) -> (usize, f64) {
        let mut buf = vec![0.0; x.len()];
        let mut best = (0, f64::INFINITY);
        for (k, u) in self.controls.iter().enumerate() {
            let r = self.rate(x, g, u, d, &mut buf);
            if r < best.1 {
                best = (k, r);
            }
        }
        best
    }

    /// argmax over disturbance samples of min over controls of ∇V·f; the
    /// first sample wins ties.
    pub fn worst_case_disturbance(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.gradient(x)?;
        let mut best = (0, f64::NEG_INFINITY);
        for (k, d) in self.disturbances.iter().enumerate() {
            let (_, r) = self.best_control(x, &g, d);
            if r > best.1 {
                best = (k, r);
            }
        }
        Ok(self.disturbances[best.0].clone())
    }
}

#[derive(Debug, Clone)]
pub enum ControlPolicy<'a> {
    Feedback(&'a FeedbackPolicy<'a>),
    Constant(Vec<f64>),
    /// One action per hold interval; the last entry is held afterwards.
    Sequence(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub enum DisturbancePolicy<'a> {
    WorstCase(&'a FeedbackPolicy<'a>),
    /// Independent uniform draws over the box each interval.
    Random { seed: u64 },
    Constant(Vec<f64>),
    Sequence(Vec<Vec<f64>>),
}

/// Time-stamped closed-loop run. Row k holds the state at t_k together with
/// the actions chosen there (applied over [t_k, t_k + dt) except on the last
/// row).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub constraint: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }

    /// sup over recorded times of h(x(t)).
    pub fn max_constraint(&self) -> f64 {
        self.constraint.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with columns t, x_1..x_n, u_1..u_m, d_1..d_l, h.
    pub fn to_csv(&self) -> String {
        let (n, m, l) = (
            self.states.first().map_or(0, |s| s.len()),
            self.controls.first().map_or(0, |s| s.len()),
            self.disturbances.first().map_or(0, |s| s.len()),
        );
        let mut out = String::from("t");
        for (prefix, count) in [("x", n), ("u", m), ("d", l)] {
            for i in 1..=count {
                let _ = write!(out, ",{prefix}_{i}");
            }
        }
        out.push_str(",h\n");
        for k in 0..self.len() {
            out.push_str(&fmt_scalar(self.times[k]));
            for v in self.states[k]
                .iter()
                .chain(&self.controls[k])
                .chain(&self.disturbances[k])
                .chain(std::iter::once(&self.constraint[k]))
            {
                out.push(',');
                out.push_str(&fmt_scalar(*v));
            }
            out.push('\n');
        }
        out
    }
}

fn check_in_box(b: &ActionBox, v: &[f64], what: &str) -> Result<()> {
    if b.contains(v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} {v:?} outside its box")))
    }
}

fn rk4_step(model: &GameModel, x: &[f64], u: &[f64], d: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let f = |s: &[f64]| {
        let mut out = vec![0.0; n];
        model.dynamics_into(s, u, d, &mut out);
        out
    };
    let shift = |base: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, k)| b + c * k).collect()
    };
    let k1 = f(x);
    let k2 = f(&shift(x, &k1, 0.5 * dt));
    let k3 = f(&shift(x, &k2, 0.5 * dt));
    let k4 = f(&shift(x, &k3, dt));
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrate the closed loop with classical RK4 under a zero-order hold of
/// both players' actions over each `dt_sim` interval.
pub fn simulate(
    model: &GameModel,
    control: &ControlPolicy<'_>,
    disturbance: &DisturbancePolicy<'_>,
    x0: &[f64],
    t_final: f64,
    dt_sim: f64,
) -> Result<Trajectory> {
    if !(dt_sim.is_finite() && dt_sim > 0.0) {
        return Err(Error::Precondition(format!("dt_sim must be positive, got {dt_sim}")));
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::Precondition(format!("t_final must be nonnegative, got {t_final}")));
    }
    if x0.len() != model.state_dim() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("invalid initial state {x0:?}")));
    }
    match control {
        ControlPolicy::Constant(u) => check_in_box(model.control_box(), u, "control")?,
        ControlPolicy::Sequence(seq) => {
            if seq.is_empty() {
                return Err(Error::Precondition("empty control sequence".into()));
            }
            for u in seq {
                check_in_box(model.control_box(), u, "control")?;
            }
        }
        ControlPolicy::Feedback(_) => {}
    }
    match disturbance {
        DisturbancePolicy::Constant(d) => check_in_box(model.disturbance_box(), d, "disturbance")?,
        DisturbancePolicy::Sequence(seq) => {
            if seq.is_empty() {
                return Err(Error::Precondition("empty disturbance sequence".into()));
            }
            for d in seq {
                check_in_box(model.disturbance_box(), d, "disturbance")?;
            }
        }
        _ => {}
    }

    let steps = (t_final / dt_sim).round() as usize;
    let mut rng = match disturbance {
        DisturbancePolicy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let dbox = model.disturbance_box();
    let mut traj = Trajectory::default();
    let mut x = x0.to_vec();
    for k in 0..=steps {
        let d = match disturbance {
            DisturbancePolicy::WorstCase(p) => p.worst_case_disturbance(&x)?,
            DisturbancePolicy::Random { .. } => {
                let rng = rng.as_mut().expect("seeded above");
                (0..dbox.dim())
                    .map(|i| {
                        let (lo, hi) = (dbox.lower()[i], dbox.upper()[i]);
                        if lo == hi {
                            lo
                        } else {
                            rng.gen_range(lo..=hi)
                        }
                    })
                    .collect()
            }
            DisturbancePolicy::Constant(d) => d.clone(),
            DisturbancePolicy::Sequence(seq) => seq[k.min(seq.len() - 1)].clone(),
        };
        let u = match control {
            ControlPolicy::Feedback(p) => p.feedback_control(&x, &d)?,
            ControlPolicy::Constant(u) => u.clone(),
            ControlPolicy::Sequence(seq) => seq[k.min(seq.len() - 1)].clone(),
        };
        let t = k as f64 * dt_sim;
        traj.times.push(t);
        traj.constraint.push(model.eval_constraint(&x));
        traj.states.push(x.clone());
        traj.controls.push(u.clone());
        traj.disturbances.push(d.clone());
        if k == steps {
            break;
        }
        let next = rk4_step(model, &x, &u, &d, dt_sim);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                time: t + dt_sim,
                partial: Box::new(traj),
            });
        }
        x = next;
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub trials: usize,
    pub epsilon: f64,
    pub t_final: f64,
    pub dt_sim: f64,
    pub seed: u64,
    /// Nodes closer than this many cells to the mask boundary are not used
    /// as initial states.
    pub interior_margin: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            trials: 100,
            epsilon: 0.05,
            t_final: 10.0,
            dt_sim: 0.01,
            seed: 0,
            interior_margin: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub mask_nodes: usize,
    pub interior_nodes: usize,
    /// Initial states used.
    pub trials: usize,
    /// Simulations run (two per initial state).
    pub runs: usize,
    pub passed: usize,
    pub pass_fraction: f64,
    pub diverged: usize,
    pub worst_sup_h: f64,
    pub worst_initial: Option<Vec<f64>>,
    pub worst_scenario: Option<&'static str>,
    /// True when the mask had no interior node to start from.
    pub empty_interior: bool,
    pub epsilon: f64,
}

impl VerificationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mask_nodes = {}", self.mask_nodes);
        let _ = writeln!(s, "interior_nodes = {}", self.interior_nodes);
        let _ = writeln!(s, "initial_states = {}", self.trials);
        let _ = writeln!(s, "runs = {}", self.runs);
        let _ = writeln!(s, "passed = {}", self.passed);
        let _ = writeln!(s, "pass_fraction = {}", fmt_scalar(self.pass_fraction));
        let _ = writeln!(s, "epsilon = {}", fmt_scalar(self.epsilon));
        let _ = writeln!(s, "diverged = {}", self.diverged);
        let _ = writeln!(s, "worst_sup_h = {}", fmt_scalar(self.worst_sup_h));
        let _ = writeln!(
            s,
            "worst_initial_state = {}",
            self.worst_initial.as_deref().map(fmt_vector).unwrap_or_else(|| "n/a".into())
        );
        let _ = writeln!(s, "worst_scenario = {}", self.worst_scenario.unwrap_or("n/a"));
        if self.empty_interior {
            let _ = writeln!(s, "flag = mask has no interior nodes; nothing simulated");
        }
        s
    }
}

/// Start from interior nodes of `mask`, run the synthesized feedback against
/// the worst-case and a seeded random disturbance, and count runs whose
/// sup_t h(x(t)) stays at or below `epsilon`.
pub fn verify_invariance(
    model: &GameModel,
    field: &ValueField,
    mask: &GridMask,
    settings: &VerifySettings,
) -> Result<VerificationReport> {
    if settings.trials == 0 {
        return Err(Error::Precondition("need at least one trial".into()));
    }
    if !mask.grid().same_shape(field.grid()) {
        return Err(Error::Shape("mask and field grids differ".into()));
    }
    let policy = FeedbackPolicy::new(model, field, &HamiltonianSettings::default())?;
    let interior = mask.interior_nodes(settings.interior_margin);
    let mut report = VerificationReport {
        mask_nodes: mask.count(),
        interior_nodes: interior.len(),
        trials: 0,
        runs: 0,
        passed: 0,
        pass_fraction: 0.0,
        diverged: 0,
        worst_sup_h: f64::NEG_INFINITY,
        worst_initial: None,
        worst_scenario: None,
        empty_interior: interior.is_empty(),
        epsilon: settings.epsilon,
    };
    if interior.is_empty() {
        return Ok(report);
    }
    let mut master = ChaCha8Rng::seed_from_u64(settings.seed);
    let chosen: Vec<usize> = if interior.len() <= settings.trials {
        interior
    } else {
        let mut picks: Vec<usize> = rand::seq::index::sample(&mut master, interior.len(), settings.trials)
            .into_iter()
            .map(|k| interior[k])
            .collect();
        picks.sort_unstable();
        picks
    };
    let seeds: Vec<u64> = chosen.iter().map(|_| master.gen()).collect();
    let grid = mask.grid();

    // (sup h, diverged) for the worst-case and random runs of each start.
    let outcomes: Vec<[(f64, bool); 2]> = chosen
        .par_iter()
        .zip(&seeds)
        .map(|(&node, &seed)| {
            let x0 = grid.point(node);
            let control = ControlPolicy::Feedback(&policy);
            let run = |dist: DisturbancePolicy<'_>| {
                match simulate(model, &control, &dist, &x0, settings.t_final, settings.dt_sim) {
                    Ok(t) => (t.max_constraint(), false),
                    Err(_) => (f64::INFINITY, true),
                }
            };
            [
                run(DisturbancePolicy::WorstCase(&policy)),
                run(DisturbancePolicy::Random { seed }),
            ]
        })
        .collect();

    report.trials = chosen.len();
    for (node, pair) in chosen.iter().zip(&outcomes) {
        for (scenario, &(sup_h, diverged)) in ["worst-case", "random"].into_iter().zip(pair) {
            report.runs += 1;
            if diverged {
                report.diverged += 1;
            } else if sup_h <= settings.epsilon {
                report.passed += 1;
            }
            if sup_h > report.worst_sup_h {
                report.worst_sup_h = sup_h;
                report.worst_initial = Some(grid.point(*node));
                report.worst_scenario = Some(scenario);
            }
        }
    }
    report.pass_fraction = report.passed as f64 / report.runs as f64;
    Ok(report)
}

#[cfg(test)]
mod tests;
