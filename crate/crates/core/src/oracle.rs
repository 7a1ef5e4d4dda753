//! Brute-force reference values for small instances.
//!
//! Nothing here calls into the solver: the discrete game builds its own
//! transition weights (tensor products of 1-D hat functions) and runs plain
//! value iteration, and the payoff evaluator integrates its own trajectories.

use crate::dynamics::GameModel;
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueKind};

/// Fully discretized game: nodes, finite action lists and stochastic-matrix
/// style transitions from one Euler step.
#[derive(Debug, Clone)]
pub struct DiscreteGame {
    nodes: Grid,
    controls: Vec<Vec<f64>>,
    disturbances: Vec<Vec<f64>>,
    discount: f64,
    obstacle: Vec<f64>,
    /// transitions[(node * |D| + d) * |U| + u] = sparse (target, weight).
    transitions: Vec<Vec<(usize, f64)>>,
}

/// Hat-function weights of coordinate `x` on a uniform axis.
fn axis_weights(lower: f64, upper: f64, count: usize, x: f64) -> Vec<(usize, f64)> {
    let x = x.max(lower).min(upper);
    let h = (upper - lower) / (count - 1) as f64;
    let mut out = Vec::with_capacity(2);
    for j in 0..count {
        let node = lower + j as f64 * h;
        let w = 1.0 - (x - node).abs() / h;
        if w > 1e-13 {
            out.push((j, w));
        }
    }
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut out {
        *w /= total;
    }
    out
}

impl DiscreteGame {
    pub fn build(
        model: &GameModel,
        nodes: Grid,
        controls: Vec<Vec<f64>>,
        disturbances: Vec<Vec<f64>>,
        gamma: f64,
        dt: f64,
    ) -> Result<Self> {
        if controls.is_empty() || disturbances.is_empty() {
            return Err(Error::Precondition("action sets must be nonempty".into()));
        }
        if !(gamma > 0.0 && dt > 0.0) {
            return Err(Error::Precondition("gamma and dt must be positive".into()));
        }
        let n = nodes.dim();
        let mut transitions = Vec::with_capacity(nodes.len() * controls.len() * disturbances.len());
        let mut obstacle = Vec::with_capacity(nodes.len());
        for node in 0..nodes.len() {
            let idx = nodes.multi_index(node);
            let x: Vec<f64> = (0..n)
                .map(|a| nodes.lower()[a] + idx[a] as f64 * nodes.spacing()[a])
                .collect();
            obstacle.push(model.eval_constraint(&x));
            for d in &disturbances {
                for u in &controls {
                    let f = model.eval_dynamics(&x, u, d)?;
                    let mut targets: Vec<(usize, f64)> = vec![(0, 1.0)];
                    for a in 0..n {
                        let next = x[a] + dt * f[a];
                        let w = axis_weights(nodes.lower()[a], nodes.upper()[a], nodes.counts()[a], next);
                        let stride: usize = nodes.counts()[a + 1..].iter().product();
                        targets = targets
                            .iter()
                            .flat_map(|&(t, tw)| w.iter().map(move |&(j, wj)| (t + j * stride, tw * wj)))
                            .collect();
                    }
                    transitions.push(targets);
                }
            }
        }
        Ok(Self {
            nodes,
            controls,
            disturbances,
            discount: (-gamma * dt).exp(),
            obstacle,
            transitions,
        })
    }

    pub fn nodes(&self) -> &Grid {
        &self.nodes
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn obstacle(&self) -> &[f64] {
        &self.obstacle
    }

    /// Replace the obstacle (e.g. to test monotonicity in h).
    pub fn with_obstacle(mut self, obstacle: Vec<f64>) -> Result<Self> {
        if obstacle.len() != self.obstacle.len() {
            return Err(Error::Shape("obstacle length differs from node count".into()));
        }
        self.obstacle = obstacle;
        Ok(self)
    }

    pub fn transition(&self, node: usize, d: usize, u: usize) -> &[(usize, f64)] {
        &self.transitions[(node * self.disturbances.len() + d) * self.controls.len() + u]
    }
}

/// Value iteration V ← max{h, β · OPT Σ w V} from V = h until successive
/// iterates differ by at most `tol` in the sup norm.
pub fn brute_force_value(game: &DiscreteGame, kind: ValueKind, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("tol must be positive".into()));
    }
    let (nu, nd) = (game.controls.len(), game.disturbances.len());
    let expect = |v: &[f64], node: usize, d: usize, u: usize| -> f64 {
        game.transition(node, d, u).iter().map(|&(t, w)| w * v[t]).sum()
    };
    let mut v = game.obstacle.clone();
    loop {
        let mut next = vec![0.0; v.len()];
        for node in 0..v.len() {
            let opt = match kind {
                ValueKind::Lower => (0..nd)
                    .map(|d| (0..nu).map(|u| expect(&v, node, d, u)).fold(f64::INFINITY, f64::min))
                    .fold(f64::NEG_INFINITY, f64::max),
                ValueKind::Upper => (0..nu)
                    .map(|u| (0..nd).map(|d| expect(&v, node, d, u)).fold(f64::NEG_INFINITY, f64::max))
                    .fold(f64::INFINITY, f64::min),
            };
            next[node] = game.obstacle[node].max(game.discount * opt);
        }
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if change <= tol {
            return Ok(v);
        }
    }
}

/// Sampled payoff with an error bar covering the unsampled tail and the gaps
/// between samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffEstimate {
    pub value: f64,
    pub error_bar: f64,
    /// Sample time at which the maximum was attained.
    pub argmax_time: f64,
}

/// J(x0) = sup_t e^{−γt} h(φ(t)) for a model whose action sets are single
/// points, sampled on an RK4 time grid up to `t_final`.
pub fn direct_payoff(
    model: &GameModel,
    x0: &[f64],
    gamma: f64,
    t_final: f64,
    dt_sim: f64,
) -> Result<PayoffEstimate> {
    if !(model.control_box().is_singleton() && model.disturbance_box().is_singleton()) {
        return Err(Error::Precondition(
            "direct payoff needs singleton control and disturbance sets".into(),
        ));
    }
    if !(gamma > 0.0 && dt_sim > 0.0) {
        return Err(Error::Precondition("gamma and dt_sim must be positive".into()));
    }
    let tail = (-gamma * t_final).exp() * model.bound();
    if !(tail < 1e-6) {
        return Err(Error::Precondition(format!(
            "t_final = {t_final} leaves a tail bound of {tail:.3e} (need < 1e-6)"
        )));
    }
    let u = model.control_box().lower().to_vec();
    let d = model.disturbance_box().lower().to_vec();
    let n = x0.len();
    let f = |x: &[f64]| model.eval_dynamics(x, &u, &d);
    let steps = (t_final / dt_sim).ceil() as usize;
    let mut x = x0.to_vec();
    let mut best = model.eval_constraint(&x);
    let mut argmax = 0.0;
    let mut prev = best;
    let mut modulus = 0.0f64;
    for k in 1..=steps {
        let k1 = f(&x)?;
        let a: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt_sim * k1[i]).collect();
        let k2 = f(&a)?;
        let b: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt_sim * k2[i]).collect();
        let k3 = f(&b)?;
        let c: Vec<f64> = (0..n).map(|i| x[i] + dt_sim * k3[i]).collect();
        let k4 = f(&c)?;
        for i in 0..n {
            x[i] += dt_sim / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("payoff trajectory diverged".into()));
        }
        let t = k as f64 * dt_sim;
        let g = (-gamma * t).exp() * model.eval_constraint(&x);
        modulus = modulus.max((g - prev).abs());
        prev = g;
        if g > best {
            best = g;
            argmax = t;
        }
    }
    Ok(PayoffEstimate {
        value: best,
        error_bar: tail + modulus,
        argmax_time: argmax,
    })
}

#[cfg(test)]
mod tests;
