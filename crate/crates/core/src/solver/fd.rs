//! Explicit Lax-Friedrichs marching toward the steady state of
//! V_t + min{γV − Ĥ, V − h} = 0.
//!
//! With the equation written as γV − H, the dissipation enters Ĥ with a plus
//! sign: Ĥ = H(x, (p⁻+p⁺)/2) + Σ α_i (p⁺_i − p⁻_i)/2. That makes the update
//! monotone in every neighbour once dt·(γ + Σ α_i/Δx_i) ≤ 1.
//!
//! α is taken per node (local Lax-Friedrichs): α_i(x) bounds |f_i| at x
//! only. The step still comes from the grid-wide bound. A grid-wide α adds
//! viscosity of order α·Δx everywhere, and for a sup-over-time payoff with
//! weak discounting that viscosity carries the large outer values into the
//! invariant region.
//!
//! At box faces the missing neighbour is a copy of the face node (zero
//! outward difference). Linear extrapolation there gives a negative
//! neighbour weight on outflow faces and the iteration leaves [0, M].

use super::{SolveConfig, Sweep};
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueKind};
use crate::hamiltonian::{HamiltonianEvaluator, HamiltonianTable};

const MAX_DIM: usize = 16;

/// Stability limit 1 / (γ + Σ α_i/Δx_i).
pub(crate) fn fd_stability_limit(grid: &Grid, alpha: &[f64], gamma: f64) -> f64 {
    let rate: f64 = alpha
        .iter()
        .zip(grid.spacing())
        .map(|(a, h)| a / h)
        .sum::<f64>()
        + gamma;
    1.0 / rate
}

pub(crate) fn fd_dt(grid: &Grid, alpha: &[f64], config: &SolveConfig) -> Result<f64> {
    let limit = fd_stability_limit(grid, alpha, config.gamma);
    match config.dt {
        None => Ok(config.cfl * limit),
        Some(dt) if dt <= limit => Ok(dt),
        Some(dt) => Err(Error::Config(format!(
            "explicit dt = {dt} violates the CFL limit {limit:.6e}"
        ))),
    }
}

pub(crate) struct FdSweep<'g> {
    grid: &'g Grid,
    h: Vec<f64>,
    table: HamiltonianTable,
    kind: ValueKind,
    /// Node-major local dissipation α_i(x).
    alpha: Vec<f64>,
    dt: f64,
    gamma: f64,
}

impl<'g> FdSweep<'g> {
    pub(crate) fn new(
        evaluator: &HamiltonianEvaluator<'_>,
        grid: &'g Grid,
        kind: ValueKind,
        dt: f64,
        gamma: f64,
    ) -> Self {
        assert!(grid.dim() <= MAX_DIM, "at most {MAX_DIM} dimensions");
        let model = evaluator.model();
        let h = (0..grid.len())
            .map(|i| model.eval_constraint(&grid.point(i)))
            .collect();
        Self {
            grid,
            h,
            table: evaluator.node_table(grid),
            kind,
            alpha: evaluator.local_dissipation(grid),
            dt,
            gamma,
        }
    }
}

/// (D⁻, D⁺) along `axis`, with a zero difference across a box face.
#[inline]
fn face_differences(grid: &Grid, values: &[f64], flat: usize, i: usize, axis: usize) -> (f64, f64) {
    let stride = grid.strides()[axis];
    let h = grid.spacing()[axis];
    let centre = values[flat];
    let back = if i == 0 { 0.0 } else { (centre - values[flat - stride]) / h };
    let fwd = if i + 1 == grid.counts()[axis] { 0.0 } else { (values[flat + stride] - centre) / h };
    (back, fwd)
}

impl Sweep for FdSweep<'_> {
    /// V⁰ = max(h, 0).
    fn init(&self) -> Vec<f64> {
        self.h.iter().map(|&h| h.max(0.0)).collect()
    }

    #[inline]
    fn update(&self, node: usize, cur: &[f64]) -> f64 {
        let grid = self.grid;
        let dim = grid.dim();
        let mut p = [0.0f64; MAX_DIM];
        let mut dissipation = 0.0;
        let alpha = &self.alpha[node * dim..(node + 1) * dim];
        let mut rest = node;
        for axis in 0..dim {
            let stride = grid.strides()[axis];
            let i = rest / stride;
            rest %= stride;
            let (back, fwd) = face_differences(grid, cur, node, i, axis);
            p[axis] = 0.5 * (back + fwd);
            dissipation += 0.5 * alpha[axis] * (fwd - back);
        }
        let hamiltonian = self.table.eval(node, self.kind, &p[..dim]) + dissipation;
        let v = cur[node];
        let residual = (self.gamma * v - hamiltonian).min(v - self.h[node]);
        v - self.dt * residual
    }
}
