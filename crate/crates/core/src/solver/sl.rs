//! Semi-Lagrangian iteration of the discrete dynamic programming principle
//!
//!   V^{k+1}(x_i) = max{ h(x_i), e^{−γ dt} · OPT I[V^k](clamp(x_i + dt f(x_i, u, d))) }
//!
//! where OPT is max_d min_u for the lower value and min_u max_d for the upper
//! value. The map is monotone and contracts with factor e^{−γ dt} in the sup
//! norm. The dynamics do not depend on time, so the interpolation stencils of
//! all foot points are computed once and reused by every sweep.

use serde::{Deserialize, Serialize};

use super::Sweep;
use crate::dynamics::GameModel;
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueKind};
use crate::hamiltonian::HamiltonianEvaluator;

const MAX_DIM: usize = 16;
/// Largest stencil table (entries) held in memory.
const MAX_TABLE_ENTRIES: usize = 1 << 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FootStep {
    /// x + dt f(x, u, d).
    #[default]
    Euler,
    /// Heun's method with (u, d) frozen over the step.
    Rk2,
}

/// min_i Δx_i / (2 max_i α_i).
pub fn sl_default_dt(grid: &Grid, alpha: &[f64]) -> f64 {
    let min_dx = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    let max_alpha = alpha.iter().copied().fold(0.0, f64::max);
    min_dx / (2.0 * max_alpha)
}

/// Foot point of one step from `x` under fixed (u, d), clamped to the box.
fn foot_point(
    model: &GameModel,
    grid: &Grid,
    step: FootStep,
    dt: f64,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    out: &mut [f64],
) {
    let n = x.len();
    let mut k1 = [0.0f64; MAX_DIM];
    model.dynamics_into(x, u, d, &mut k1[..n]);
    match step {
        FootStep::Euler => {
            for i in 0..n {
                out[i] = x[i] + dt * k1[i];
            }
        }
        FootStep::Rk2 => {
            let mut mid = [0.0f64; MAX_DIM];
            for i in 0..n {
                mid[i] = x[i] + dt * k1[i];
            }
            let mut k2 = [0.0f64; MAX_DIM];
            model.dynamics_into(&mid[..n], u, d, &mut k2[..n]);
            for i in 0..n {
                out[i] = x[i] + 0.5 * dt * (k1[i] + k2[i]);
            }
        }
    }
    grid.clamp(out);
}

/// Interpolation stencils of every (node, disturbance, control) foot point.
pub(crate) enum Transitions<'a> {
    Table {
        controls: usize,
        disturbances: usize,
        pairs: usize,
        corners: usize,
        indices: Vec<u32>,
        weights: Vec<f64>,
    },
    /// Stencils recomputed on every sweep for grids too large to tabulate.
    OnTheFly {
        model: &'a GameModel,
        grid: &'a Grid,
        controls: Vec<Vec<f64>>,
        disturbances: Vec<Vec<f64>>,
        dt: f64,
        step: FootStep,
    },
}

impl<'a> Transitions<'a> {
    pub(crate) fn build(
        evaluator: &HamiltonianEvaluator<'a>,
        grid: &'a Grid,
        dt: f64,
        step: FootStep,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("semi-Lagrangian dt must be positive, got {dt}")));
        }
        let model = evaluator.model();
        let n = grid.dim();
        if n > MAX_DIM {
            return Err(Error::UnsupportedDimension(format!(
                "semi-Lagrangian solver supports at most {MAX_DIM} dimensions"
            )));
        }
        let controls = evaluator.controls().to_vec();
        let disturbances = evaluator.disturbances().to_vec();
        let pairs = controls.len() * disturbances.len();
        let corners = grid.corner_count();
        let entries = grid.len().checked_mul(pairs).and_then(|e| e.checked_mul(corners));
        let fits = matches!(entries, Some(e) if e <= MAX_TABLE_ENTRIES) && grid.len() <= u32::MAX as usize;
        if !fits {
            log::info!("semi-Lagrangian stencils computed on the fly for {} nodes", grid.len());
            return Ok(Transitions::OnTheFly {
                model,
                grid,
                controls,
                disturbances,
                dt,
                step,
            });
        }
        let per_node = pairs * corners;
        let mut indices = vec![0u32; grid.len() * per_node];
        let mut weights = vec![0.0f64; grid.len() * per_node];
        use rayon::prelude::*;
        indices
            .par_chunks_mut(per_node)
            .zip(weights.par_chunks_mut(per_node))
            .enumerate()
            .for_each(|(node, (idx, w))| {
                let mut x = [0.0f64; MAX_DIM];
                let mut foot = [0.0f64; MAX_DIM];
                let mut tmp_idx = vec![0usize; corners];
                grid.point_into(node, &mut x[..n]);
                let mut k = 0;
                for d in &disturbances {
                    for u in &controls {
                        foot_point(model, grid, step, dt, &x[..n], u, d, &mut foot[..n]);
                        grid.stencil_into(&foot[..n], &mut tmp_idx, &mut w[k * corners..(k + 1) * corners]);
                        for (slot, &i) in idx[k * corners..(k + 1) * corners].iter_mut().zip(&tmp_idx) {
                            *slot = i as u32;
                        }
                        k += 1;
                    }
                }
            });
        Ok(Transitions::Table {
            controls: controls.len(),
            disturbances: disturbances.len(),
            pairs,
            corners,
            indices,
            weights,
        })
    }

    /// (control samples, disturbance samples).
    fn sample_counts(&self) -> (usize, usize) {
        match self {
            Transitions::Table {
                controls,
                disturbances,
                ..
            } => (*controls, *disturbances),
            Transitions::OnTheFly {
                controls,
                disturbances,
                ..
            } => (controls.len(), disturbances.len()),
        }
    }
}

pub(crate) struct SlSweep<'t, 'a> {
    transitions: &'t Transitions<'a>,
    h: Vec<f64>,
    beta: f64,
    kind: ValueKind,
    controls: usize,
    disturbances: usize,
}

impl<'t, 'a> SlSweep<'t, 'a> {
    pub(crate) fn new(
        transitions: &'t Transitions<'a>,
        model: &GameModel,
        grid: &Grid,
        kind: ValueKind,
        dt: f64,
        gamma: f64,
    ) -> Self {
        let h = (0..grid.len())
            .map(|i| model.eval_constraint(&grid.point(i)))
            .collect();
        let (controls, disturbances) = transitions.sample_counts();
        Self {
            transitions,
            h,
            beta: (-gamma * dt).exp(),
            kind,
            controls,
            disturbances,
        }
    }

    /// I[V](foot of pair `pair` from `node`).
    #[inline]
    fn interpolated(&self, node: usize, pair: usize, cur: &[f64]) -> f64 {
        match self.transitions {
            Transitions::Table {
                pairs,
                corners,
                indices,
                weights,
                ..
            } => {
                let start = (node * pairs + pair) * corners;
                let idx = &indices[start..start + corners];
                let w = &weights[start..start + corners];
                let mut acc = 0.0;
                for c in 0..*corners {
                    acc += w[c] * cur[idx[c] as usize];
                }
                acc
            }
            Transitions::OnTheFly {
                model,
                grid,
                controls,
                disturbances,
                dt,
                step,
            } => {
                let n = grid.dim();
                let (d, u) = (pair / controls.len(), pair % controls.len());
                let mut x = [0.0f64; MAX_DIM];
                let mut foot = [0.0f64; MAX_DIM];
                grid.point_into(node, &mut x[..n]);
                foot_point(model, grid, *step, *dt, &x[..n], &controls[u], &disturbances[d], &mut foot[..n]);
                let corners = grid.corner_count();
                let mut idx = vec![0usize; corners];
                let mut w = vec![0.0; corners];
                grid.stencil_into(&foot[..n], &mut idx, &mut w);
                idx.iter().zip(&w).map(|(&i, &wi)| wi * cur[i]).sum()
            }
        }
    }
}

impl Sweep for SlSweep<'_, '_> {
    /// V⁰ = max(h, 0). The fixed point is nonnegative, and starting at or
    /// above zero keeps every iterate there, so stopping on the residual
    /// cannot leave values below zero. V¹ ≥ V⁰ still holds, hence the
    /// iterates are nondecreasing.
    fn init(&self) -> Vec<f64> {
        self.h.iter().map(|&h| h.max(0.0)).collect()
    }

    #[inline]
    fn update(&self, node: usize, cur: &[f64]) -> f64 {
        let (nu, nd) = (self.controls, self.disturbances);
        let opt = match self.kind {
            ValueKind::Lower => {
                let mut best = f64::NEG_INFINITY;
                for d in 0..nd {
                    let mut inner = f64::INFINITY;
                    for u in 0..nu {
                        inner = inner.min(self.interpolated(node, d * nu + u, cur));
                    }
                    best = best.max(inner);
                }
                best
            }
            ValueKind::Upper => {
                let mut best = f64::INFINITY;
                for u in 0..nu {
                    let mut inner = f64::NEG_INFINITY;
                    for d in 0..nd {
                        inner = inner.max(self.interpolated(node, d * nu + u, cur));
                    }
                    best = best.min(inner);
                }
                best
            }
        };
        self.h[node].max(self.beta * opt)
    }
}
