//! Stationary solvers for min{γV − H^∓(x, ∇V), V − h} = 0.
//!
//! Two backends share one Jacobi driver: explicit Lax-Friedrichs time marching
//! ([`Backend::Fd`]) and semi-Lagrangian fixed-point iteration of the discrete
//! dynamic programming principle ([`Backend::Sl`]). Every sweep reads the
//! previous iterate and writes a fresh buffer, so node updates are independent
//! and results do not depend on the number of threads.

mod fd;
mod sl;

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::GameModel;
use crate::error::{Error, Result};
use crate::grid::format::fmt_scalar;
use crate::grid::{Grid, ValueField, ValueKind, BOUNDARY_BAND};
use crate::hamiltonian::{HamiltonianEvaluator, HamiltonianSettings};

pub use sl::{sl_default_dt, FootStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Fd,
    Sl,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Fd => "fd",
            Backend::Sl => "sl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub gamma: f64,
    pub backend: Backend,
    /// Time step; `None` picks the backend default.
    pub dt: Option<f64>,
    /// Fraction of the stability limit used for the automatic FD step.
    pub cfl: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub kind: ValueKind,
    pub hamiltonian: HamiltonianSettings,
    pub foot_step: FootStep,
    /// Print a progress line to stderr every this many iterations (0 = off).
    pub progress_interval: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            backend: Backend::Sl,
            dt: None,
            cfl: 0.5,
            tol: 1e-8,
            max_iters: 200_000,
            kind: ValueKind::Lower,
            hamiltonian: HamiltonianSettings::default(),
            foot_step: FootStep::Euler,
            progress_interval: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub backend: Backend,
    pub kind: ValueKind,
    pub gamma: f64,
    pub dt: f64,
    pub tol: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Per-sweep contraction factor e^{−γ dt} (semi-Lagrangian only).
    pub contraction_factor: Option<f64>,
    /// Largest observed residual ratio r_{k+1}/r_k after the first sweep.
    pub max_residual_ratio: Option<f64>,
    /// Last observed residual ratio.
    pub last_residual_ratio: Option<f64>,
    /// Smallest nodewise change V^{k+1} − V^k over all sweeps (+inf if none
    /// ran).
    pub min_increment: f64,
    pub dissipation: Vec<f64>,
    pub hamiltonian: &'static str,
    pub wall_time: Duration,
}

impl SolveReport {
    /// Plain-text report. Timing is left out unless asked for so report files
    /// stay byte-identical across runs.
    pub fn to_text(&self, with_timing: bool) -> String {
        let opt = |v: Option<f64>| v.map(fmt_scalar).unwrap_or_else(|| "n/a".into());
        let mut s = String::new();
        s.push_str(&format!("backend = {}\n", self.backend));
        s.push_str(&format!("kind = {}\n", self.kind));
        s.push_str(&format!("ordering = {}\n", self.kind.ordering()));
        s.push_str(&format!("hamiltonian = {}\n", self.hamiltonian));
        s.push_str(&format!("gamma = {}\n", fmt_scalar(self.gamma)));
        s.push_str(&format!("dt = {}\n", fmt_scalar(self.dt)));
        s.push_str(&format!("tol = {}\n", fmt_scalar(self.tol)));
        s.push_str(&format!("iterations = {}\n", self.iterations));
        s.push_str(&format!("final_residual = {}\n", fmt_scalar(self.final_residual)));
        s.push_str(&format!("converged = {}\n", self.converged));
        s.push_str(&format!("contraction_factor = {}\n", opt(self.contraction_factor)));
        s.push_str(&format!("max_residual_ratio = {}\n", opt(self.max_residual_ratio)));
        s.push_str(&format!("last_residual_ratio = {}\n", opt(self.last_residual_ratio)));
        s.push_str(&format!("min_increment = {}\n", fmt_scalar(self.min_increment)));
        let alpha: Vec<String> = self.dissipation.iter().map(|&a| fmt_scalar(a)).collect();
        s.push_str(&format!("dissipation = {}\n", alpha.join(", ")));
        if with_timing {
            s.push_str(&format!("wall_time_s = {:.3}\n", self.wall_time.as_secs_f64()));
        }
        s
    }
}

/// One Jacobi sweep: `next` from `cur`, node by node.
pub(crate) trait Sweep: Sync {
    fn init(&self) -> Vec<f64>;
    fn update(&self, node: usize, cur: &[f64]) -> f64;
}

const CHUNK: usize = 512;

/// Change statistics of one sweep.
#[derive(Debug, Clone, Copy)]
struct Step {
    /// ‖next − cur‖∞, NaN if any update is non-finite.
    residual: f64,
    /// min over nodes of next − cur.
    min_increment: f64,
}

impl Step {
    const ZERO: Step = Step {
        residual: 0.0,
        min_increment: f64::INFINITY,
    };

    fn merge(self, other: Step) -> Step {
        let residual = if self.residual.is_nan() || other.residual.is_nan() {
            f64::NAN
        } else {
            self.residual.max(other.residual)
        };
        Step {
            residual,
            min_increment: self.min_increment.min(other.min_increment),
        }
    }
}

/// Apply one sweep in parallel. Both reductions are order-independent, so
/// the result does not depend on the thread count.
fn sweep_once(sweep: &dyn Sweep, cur: &[f64], next: &mut [f64]) -> Step {
    next.par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let start = c * CHUNK;
            let mut step = Step::ZERO;
            for (k, slot) in chunk.iter_mut().enumerate() {
                let node = start + k;
                let v = sweep.update(node, cur);
                *slot = v;
                let change = v - cur[node];
                if !change.is_finite() {
                    step.residual = f64::NAN;
                    break;
                }
                step.residual = step.residual.max(change.abs());
                step.min_increment = step.min_increment.min(change);
            }
            step
        })
        .reduce(|| Step::ZERO, Step::merge)
}

pub(crate) struct RunOutcome {
    pub values: Vec<f64>,
    pub history: Vec<f64>,
    pub min_increment: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate all sweeps together until every residual is at most `tol` or
/// `max_iters` sweeps have run. All sweeps always perform the same number of
/// iterations.
pub(crate) fn run_lockstep(
    sweeps: &[&dyn Sweep],
    tol: f64,
    max_iters: usize,
    progress: usize,
    label: &str,
) -> Result<Vec<RunOutcome>> {
    let mut cur: Vec<Vec<f64>> = sweeps.iter().map(|s| s.init()).collect();
    let mut next: Vec<Vec<f64>> = cur.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); sweeps.len()];
    let mut min_increment = vec![f64::INFINITY; sweeps.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let mut worst = 0.0f64;
        for (k, sweep) in sweeps.iter().enumerate() {
            let step = sweep_once(*sweep, &cur[k], &mut next[k]);
            let r = step.residual;
            if r.is_nan() {
                return Err(Error::Domain(format!(
                    "{label}: non-finite value after {} sweeps",
                    iterations + 1
                )));
            }
            history[k].push(r);
            min_increment[k] = min_increment[k].min(step.min_increment);
            worst = worst.max(r);
            std::mem::swap(&mut cur[k], &mut next[k]);
        }
        iterations += 1;
        if progress > 0 && iterations % progress == 0 {
            eprintln!("[{label}] iteration {iterations}: residual {worst:.3e}");
        }
        if worst <= tol {
            converged = true;
            break;
        }
    }
    Ok(cur
        .into_iter()
        .zip(history)
        .zip(min_increment)
        .map(|((values, history), min_increment)| RunOutcome {
            values,
            history,
            min_increment,
            iterations,
            converged,
        })
        .collect())
}

fn residual_ratios(history: &[f64]) -> (Option<f64>, Option<f64>) {
    let ratios: Vec<f64> = history
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    (
        ratios.iter().copied().reduce(f64::max),
        ratios.last().copied(),
    )
}

/// Checks shared by both backends: shapes and the declared bound on h.
fn validate_inputs(model: &GameModel, grid: &Grid, config: &SolveConfig) -> Result<()> {
    config.validate()?;
    if grid.dim() != model.state_dim() {
        return Err(Error::Shape(format!(
            "grid dimension {} does not match state dimension {}",
            grid.dim(),
            model.state_dim()
        )));
    }
    // Lattice twice as fine as the grid, capped at a few million samples.
    let finest = 2 * grid.counts().iter().copied().max().unwrap_or(3) - 1;
    let cap = 4_000_000f64.powf(1.0 / grid.dim() as f64) as usize;
    model.check_constraint_bound(grid.lower(), grid.upper(), finest.min(cap))
}

/// Discretization shared by every kind solved in one call.
struct Prepared<'a> {
    evaluator: HamiltonianEvaluator<'a>,
    alpha: Vec<f64>,
    dt: f64,
}

fn prepare<'a>(model: &'a GameModel, grid: &Grid, config: &SolveConfig) -> Result<Prepared<'a>> {
    validate_inputs(model, grid, config)?;
    let evaluator = HamiltonianEvaluator::new(model, &config.hamiltonian)?;
    let alpha = evaluator.dissipation_bounds(grid)?;
    let dt = match config.backend {
        Backend::Fd => fd::fd_dt(grid, &alpha, config)?,
        Backend::Sl => config.dt.unwrap_or_else(|| sl_default_dt(grid, &alpha)),
    };
    Ok(Prepared {
        evaluator,
        alpha,
        dt,
    })
}

fn solve_kinds(
    model: &GameModel,
    grid: &Grid,
    config: &SolveConfig,
    kinds: &[ValueKind],
) -> Result<Vec<(ValueField, SolveReport)>> {
    let started = Instant::now();
    let prep = prepare(model, grid, config)?;
    let label = format!("{} {}", config.backend, kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+"));
    let outcomes = match config.backend {
        Backend::Fd => {
            let sweeps: Vec<fd::FdSweep> = kinds
                .iter()
                .map(|&k| fd::FdSweep::new(&prep.evaluator, grid, k, prep.dt, config.gamma))
                .collect();
            let refs: Vec<&dyn Sweep> = sweeps.iter().map(|s| s as &dyn Sweep).collect();
            run_lockstep(&refs, config.tol, config.max_iters, config.progress_interval, &label)?
        }
        Backend::Sl => {
            let table = sl::Transitions::build(&prep.evaluator, grid, prep.dt, config.foot_step)?;
            let sweeps: Vec<sl::SlSweep> = kinds
                .iter()
                .map(|&k| sl::SlSweep::new(&table, model, grid, k, prep.dt, config.gamma))
                .collect();
            let refs: Vec<&dyn Sweep> = sweeps.iter().map(|s| s as &dyn Sweep).collect();
            run_lockstep(&refs, config.tol, config.max_iters, config.progress_interval, &label)?
        }
    };
    let wall_time = started.elapsed();
    let mut out = Vec::with_capacity(kinds.len());
    for (outcome, &kind) in outcomes.into_iter().zip(kinds) {
        let (max_ratio, last_ratio) = residual_ratios(&outcome.history);
        let report = SolveReport {
            backend: config.backend,
            kind,
            gamma: config.gamma,
            dt: prep.dt,
            tol: config.tol,
            iterations: outcome.iterations,
            final_residual: outcome.history.last().copied().unwrap_or(f64::INFINITY),
            converged: outcome.converged,
            contraction_factor: match config.backend {
                Backend::Sl => Some((-config.gamma * prep.dt).exp()),
                Backend::Fd => None,
            },
            max_residual_ratio: max_ratio,
            last_residual_ratio: last_ratio,
            min_increment: outcome.min_increment,
            dissipation: prep.alpha.clone(),
            hamiltonian: if prep.evaluator.is_analytic() { "analytic" } else { "sampled" },
            wall_time,
        };
        let field = ValueField::new(grid.clone(), outcome.values, config.gamma, kind)?
            .with_residual_history(outcome.history);
        out.push((field, report));
    }
    Ok(out)
}

/// Solve for the value kind in `config` with its backend.
pub fn solve(model: &GameModel, grid: &Grid, config: &SolveConfig) -> Result<(ValueField, SolveReport)> {
    Ok(solve_kinds(model, grid, config, &[config.kind])?.remove(0))
}

/// Lax-Friedrichs time marching, regardless of `config.backend`.
pub fn solve_fd(model: &GameModel, grid: &Grid, config: &SolveConfig) -> Result<(ValueField, SolveReport)> {
    let config = SolveConfig {
        backend: Backend::Fd,
        ..config.clone()
    };
    solve(model, grid, &config)
}

/// Semi-Lagrangian iteration, regardless of `config.backend`.
pub fn solve_sl(model: &GameModel, grid: &Grid, config: &SolveConfig) -> Result<(ValueField, SolveReport)> {
    let config = SolveConfig {
        backend: Backend::Sl,
        ..config.clone()
    };
    solve(model, grid, &config)
}

/// Spread of V⁺ − V⁻ away from the boundary band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsaacsGap {
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone)]
pub struct BothValues {
    pub lower: ValueField,
    pub upper: ValueField,
    pub lower_report: SolveReport,
    pub upper_report: SolveReport,
    pub gap: IsaacsGap,
    /// max over all nodes of V⁻ − V⁺; the discrete minimax inequality keeps
    /// this at or below zero up to rounding.
    pub minimax_excess: f64,
}

/// Solve both value kinds with one discretization, iterated in lockstep.
pub fn solve_both_values(model: &GameModel, grid: &Grid, config: &SolveConfig) -> Result<BothValues> {
    let mut solved = solve_kinds(model, grid, config, &[ValueKind::Lower, ValueKind::Upper])?;
    let (upper, upper_report) = solved.pop().expect("two kinds solved");
    let (lower, lower_report) = solved.pop().expect("two kinds solved");
    let gap = isaacs_gap(&lower, &upper)?;
    let minimax_excess = lower
        .values()
        .iter()
        .zip(upper.values())
        .map(|(l, u)| l - u)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BothValues {
        lower,
        upper,
        lower_report,
        upper_report,
        gap,
        minimax_excess,
    })
}

/// max and min of V⁺ − V⁻ over nodes outside the boundary band.
pub fn isaacs_gap(lower: &ValueField, upper: &ValueField) -> Result<IsaacsGap> {
    let grid = lower.grid();
    if !grid.same_shape(upper.grid()) {
        return Err(Error::Shape("lower and upper fields live on different grids".into()));
    }
    let mut gap = IsaacsGap {
        max: f64::NEG_INFINITY,
        min: f64::INFINITY,
    };
    for (node, (l, u)) in lower.values().iter().zip(upper.values()).enumerate() {
        if grid.in_boundary_band(node, BOUNDARY_BAND) {
            continue;
        }
        gap.max = gap.max.max(u - l);
        gap.min = gap.min.min(u - l);
    }
    Ok(gap)
}

#[cfg(test)]
mod tests;
