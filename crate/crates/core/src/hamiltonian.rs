//! Sup-inf and inf-sup Hamiltonians
//!
//!   H⁻(x, p) = sup_d inf_u p·f(x, u, d),   H⁺(x, p) = inf_u sup_d p·f(x, u, d).
//!
//! For control-affine dynamics over boxes both reduce to the same closed form.
//! Otherwise the optimisation runs over a finite action sample plan.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ActionBox, Dynamics, GameModel};
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianMode {
    /// Analytic when the dynamics are control-affine, sampled otherwise.
    Auto,
    Analytic,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonianSettings {
    pub mode: HamiltonianMode,
    /// Samples per nondegenerate action axis. `None` means box vertices for
    /// affine dynamics and 5 per axis otherwise.
    pub samples_per_axis: Option<usize>,
    pub safety_factor: f64,
}

impl Default for HamiltonianSettings {
    fn default() -> Self {
        Self {
            mode: HamiltonianMode::Auto,
            samples_per_axis: None,
            safety_factor: 1.1,
        }
    }
}

pub const DEFAULT_GENERAL_SAMPLES: usize = 5;

#[derive(Debug, Clone)]
pub struct HamiltonianEvaluator<'a> {
    model: &'a GameModel,
    analytic: bool,
    controls: Vec<Vec<f64>>,
    disturbances: Vec<Vec<f64>>,
    safety_factor: f64,
}

impl<'a> HamiltonianEvaluator<'a> {
    pub fn new(model: &'a GameModel, settings: &HamiltonianSettings) -> Result<Self> {
        let affine = matches!(model.dynamics(), Dynamics::Affine(_));
        let analytic = match settings.mode {
            HamiltonianMode::Auto => affine,
            HamiltonianMode::Analytic if !affine => {
                return Err(Error::Config(
                    "analytic Hamiltonian requires control-affine dynamics".into(),
                ))
            }
            HamiltonianMode::Analytic => true,
            HamiltonianMode::Sampled => false,
        };
        if !(settings.safety_factor.is_finite() && settings.safety_factor >= 1.0) {
            return Err(Error::Config(format!(
                "dissipation safety factor must be >= 1, got {}",
                settings.safety_factor
            )));
        }
        let per_axis = match settings.samples_per_axis {
            Some(k) if k < 2 => {
                return Err(Error::Config(format!(
                    "need at least 2 samples per action axis, got {k}"
                )))
            }
            Some(k) => k,
            None if affine => 2,
            None => DEFAULT_GENERAL_SAMPLES,
        };
        Ok(Self {
            model,
            analytic,
            controls: model.control_box().samples(per_axis),
            disturbances: model.disturbance_box().samples(per_axis),
            safety_factor: settings.safety_factor,
        })
    }

    pub fn model(&self) -> &'a GameModel {
        self.model
    }

    pub fn is_analytic(&self) -> bool {
        self.analytic
    }

    /// Control sample plan, lexicographic.
    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn disturbances(&self) -> &[Vec<f64>] {
        &self.disturbances
    }

    pub fn eval_lower(&self, x: &[f64], p: &[f64]) -> f64 {
        self.eval(ValueKind::Lower, x, p)
    }

    pub fn eval_upper(&self, x: &[f64], p: &[f64]) -> f64 {
        self.eval(ValueKind::Upper, x, p)
    }

    pub fn eval(&self, kind: ValueKind, x: &[f64], p: &[f64]) -> f64 {
        let layout = self.layout();
        let mut block = vec![0.0; layout.block_len()];
        self.fill_block(x, &mut block);
        layout.eval(&block, kind, p)
    }

    /// Per-axis bounds α_i on |∂H/∂p_i| = |f_i| over the grid nodes and the
    /// action vertices (affine) or sample plan (general), times the safety
    /// factor. Axes with no motion get a machine-epsilon floor.
    pub fn dissipation_bounds(&self, grid: &Grid) -> Result<Vec<f64>> {
        let n = self.model.state_dim();
        if grid.dim() != n {
            return Err(Error::Shape(format!(
                "grid dimension {} does not match state dimension {n}",
                grid.dim()
            )));
        }
        let plan = self.speed_plan();
        let mut max_speed = vec![0.0f64; n];
        let mut x = vec![0.0; n];
        let mut speed = vec![0.0; n];
        let mut f = vec![0.0; n];
        for node in 0..grid.len() {
            grid.point_into(node, &mut x);
            self.speeds_at(&plan, &x, &mut speed, &mut f);
            for (m, s) in max_speed.iter_mut().zip(&speed) {
                *m = m.max(*s);
            }
        }
        Ok(max_speed
            .into_iter()
            .enumerate()
            .map(|(axis, m)| {
                let alpha = self.safety_factor * m;
                if alpha > 0.0 {
                    alpha
                } else {
                    log::warn!("no motion along axis {axis}; dissipation floored at machine epsilon");
                    f64::EPSILON
                }
            })
            .collect())
    }

    /// Node-local α_i(x) = safety · max |f_i(x, u, d)| over the same action
    /// samples, stored node-major.
    pub(crate) fn local_dissipation(&self, grid: &Grid) -> Vec<f64> {
        let n = self.model.state_dim();
        let plan = self.speed_plan();
        let mut out = vec![0.0; grid.len() * n];
        let mut x = vec![0.0; n];
        let mut f = vec![0.0; n];
        for (node, alpha) in out.chunks_mut(n).enumerate() {
            grid.point_into(node, &mut x);
            self.speeds_at(&plan, &x, alpha, &mut f);
            for a in alpha.iter_mut() {
                *a *= self.safety_factor;
            }
        }
        out
    }

    /// Action samples bounding |f_i|: box vertices for affine dynamics, the
    /// sample plan otherwise.
    fn speed_plan(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        match self.model.dynamics() {
            Dynamics::Affine(_) => (
                self.model.control_box().vertices(),
                self.model.disturbance_box().vertices(),
            ),
            Dynamics::General(_) => (self.controls.clone(), self.disturbances.clone()),
        }
    }

    fn speeds_at(&self, plan: &(Vec<Vec<f64>>, Vec<Vec<f64>>), x: &[f64], speed: &mut [f64], f: &mut [f64]) {
        speed.fill(0.0);
        for d in &plan.1 {
            for u in &plan.0 {
                self.model.dynamics_into(x, u, d, f);
                for (m, fi) in speed.iter_mut().zip(f.iter()) {
                    *m = m.max(fi.abs());
                }
            }
        }
    }

    pub(crate) fn layout(&self) -> BlockLayout {
        let model = self.model;
        if self.analytic {
            let (u, d) = (model.control_box(), model.disturbance_box());
            BlockLayout::Affine {
                n: model.state_dim(),
                m: u.dim(),
                l: d.dim(),
                control_center: centers(u),
                control_radius: radii(u),
                dist_center: centers(d),
                dist_radius: radii(d),
            }
        } else {
            BlockLayout::Sampled {
                n: model.state_dim(),
                controls: self.controls.len(),
                disturbances: self.disturbances.len(),
            }
        }
    }

    /// Writes the state-dependent data the Hamiltonian needs at `x`.
    pub(crate) fn fill_block(&self, x: &[f64], block: &mut [f64]) {
        let model = self.model;
        let n = model.state_dim();
        match (self.analytic, model.dynamics()) {
            (true, Dynamics::Affine(a)) => {
                let (m, l) = (model.control_dim(), model.disturbance_dim());
                let (f1, rest) = block.split_at_mut(n);
                let (f2, f3) = rest.split_at_mut(n * m);
                a.drift.eval_into(x, f1);
                a.control.eval_into(x, f2);
                a.disturbance.eval_into(x, &mut f3[..n * l]);
            }
            _ => {
                let mut k = 0;
                for d in &self.disturbances {
                    for u in &self.controls {
                        model.dynamics_into(x, u, d, &mut block[k..k + n]);
                        k += n;
                    }
                }
            }
        }
    }

    /// Precompute the per-node blocks for every node of `grid`.
    pub(crate) fn node_table(&self, grid: &Grid) -> HamiltonianTable {
        let layout = self.layout();
        let stride = layout.block_len();
        let mut data = vec![0.0; stride * grid.len()];
        let mut x = vec![0.0; grid.dim()];
        for (node, block) in data.chunks_mut(stride.max(1)).enumerate().take(grid.len()) {
            grid.point_into(node, &mut x);
            self.fill_block(&x, block);
        }
        HamiltonianTable {
            layout,
            stride,
            data,
        }
    }
}

fn centers(b: &ActionBox) -> Vec<f64> {
    (0..b.dim()).map(|i| b.center(i)).collect()
}

fn radii(b: &ActionBox) -> Vec<f64> {
    (0..b.dim()).map(|i| b.radius(i)).collect()
}

/// How a per-state data block is laid out and evaluated.
#[derive(Debug, Clone)]
pub(crate) enum BlockLayout {
    /// Block = [f1 (n) | f2 (n×m) | f3 (n×l)].
    Affine {
        n: usize,
        m: usize,
        l: usize,
        control_center: Vec<f64>,
        control_radius: Vec<f64>,
        dist_center: Vec<f64>,
        dist_radius: Vec<f64>,
    },
    /// Block = velocities f(x, u_j, d_k), disturbance-major then control.
    Sampled {
        n: usize,
        controls: usize,
        disturbances: usize,
    },
}

impl BlockLayout {
    pub(crate) fn block_len(&self) -> usize {
        match *self {
            BlockLayout::Affine { n, m, l, .. } => n * (1 + m + l),
            BlockLayout::Sampled {
                n,
                controls,
                disturbances,
            } => n * controls * disturbances,
        }
    }

    #[inline]
    pub(crate) fn eval(&self, block: &[f64], kind: ValueKind, p: &[f64]) -> f64 {
        match self {
            BlockLayout::Affine {
                n,
                m,
                l,
                control_center,
                control_radius,
                dist_center,
                dist_radius,
            } => {
                let (n, m, l) = (*n, *m, *l);
                let f1 = &block[..n];
                let f2 = &block[n..n + n * m];
                let f3 = &block[n + n * m..];
                let mut h: f64 = p.iter().zip(f1).map(|(a, b)| a * b).sum();
                for j in 0..m {
                    let c: f64 = (0..n).map(|i| p[i] * f2[i * m + j]).sum();
                    h += c * control_center[j] - c.abs() * control_radius[j];
                }
                for k in 0..l {
                    let e: f64 = (0..n).map(|i| p[i] * f3[i * l + k]).sum();
                    h += e * dist_center[k] + e.abs() * dist_radius[k];
                }
                h
            }
            BlockLayout::Sampled {
                n,
                controls,
                disturbances,
            } => {
                let n = *n;
                let dot = |d: usize, u: usize| -> f64 {
                    let v = &block[(d * controls + u) * n..][..n];
                    p.iter().zip(v).map(|(a, b)| a * b).sum()
                };
                match kind {
                    ValueKind::Lower => {
                        let mut best = f64::NEG_INFINITY;
                        for d in 0..*disturbances {
                            let mut inner = f64::INFINITY;
                            for u in 0..*controls {
                                inner = inner.min(dot(d, u));
                            }
                            best = best.max(inner);
                        }
                        best
                    }
                    ValueKind::Upper => {
                        let mut best = f64::INFINITY;
                        for u in 0..*controls {
                            let mut inner = f64::NEG_INFINITY;
                            for d in 0..*disturbances {
                                inner = inner.max(dot(d, u));
                            }
                            best = best.min(inner);
                        }
                        best
                    }
                }
            }
        }
    }
}

/// Per-node Hamiltonian data for a fixed grid.
#[derive(Debug, Clone)]
pub(crate) struct HamiltonianTable {
    layout: BlockLayout,
    stride: usize,
    data: Vec<f64>,
}

impl HamiltonianTable {
    #[inline]
    pub(crate) fn eval(&self, node: usize, kind: ValueKind, p: &[f64]) -> f64 {
        let block = &self.data[node * self.stride..(node + 1) * self.stride];
        self.layout.eval(block, kind, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_model;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn jet() -> GameModel {
        builtin_model("jet_engine", &BTreeMap::new()).unwrap()
    }

    fn sampled(per_axis: Option<usize>) -> HamiltonianSettings {
        HamiltonianSettings {
            mode: HamiltonianMode::Sampled,
            samples_per_axis: per_axis,
            ..Default::default()
        }
    }

    /// sup_d inf_u p·f by plain enumeration of the given action lists.
    fn enumerate_lower(m: &GameModel, x: &[f64], p: &[f64], us: &[Vec<f64>], ds: &[Vec<f64>]) -> f64 {
        ds.iter()
            .map(|d| {
                us.iter()
                    .map(|u| {
                        let f = m.eval_dynamics(x, u, d).unwrap();
                        p.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn jet_engine_examples() {
        let m = jet();
        let ev = HamiltonianEvaluator::new(&m, &HamiltonianSettings::default()).unwrap();
        assert!(ev.is_analytic());
        assert_eq!(ev.eval_lower(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(ev.eval_lower(&[0.0, 0.0], &[1.0, 0.0]), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(ev.eval_lower(&[0.1, 0.0], &[0.0, 1.0]), 0.07976, epsilon = 1e-15);
        assert_abs_diff_eq!(ev.eval_upper(&[0.0, 0.0], &[1.0, 0.0]), 0.02, epsilon = 1e-15);
        assert_eq!(ev.eval_upper(&[0.3, -0.2], &[0.0, 0.0]), 0.0);

        let verts = (m.control_box().vertices(), m.disturbance_box().vertices());
        let brute = enumerate_lower(&m, &[0.0, 0.0], &[1.0, 0.0], &verts.0, &verts.1);
        assert_abs_diff_eq!(brute, 0.02, epsilon = 1e-15);
        let brute = enumerate_lower(&m, &[0.1, 0.0], &[0.0, 1.0], &verts.0, &verts.1);
        assert_abs_diff_eq!(brute, 0.07976, epsilon = 1e-15);
    }

    #[test]
    fn analytic_requires_affine() {
        let m = GameModel::new(
            "blackbox",
            1,
            ActionBox::singleton(vec![0.0]),
            ActionBox::singleton(vec![0.0]),
            Dynamics::General(Arc::new(|x, _, _, out| out[0] = -x[0])),
            crate::dynamics::Constraint::Custom(Arc::new(|x| x[0])),
            1.0,
        )
        .unwrap();
        let settings = HamiltonianSettings {
            mode: HamiltonianMode::Analytic,
            ..Default::default()
        };
        assert!(HamiltonianEvaluator::new(&m, &settings).is_err());
        let ev = HamiltonianEvaluator::new(&m, &HamiltonianSettings::default()).unwrap();
        assert!(!ev.is_analytic());
        assert_eq!(ev.eval_lower(&[0.5], &[2.0]), -1.0);
    }

    #[test]
    fn dissipation_examples() {
        let s = builtin_model("singleton_1d", &BTreeMap::new()).unwrap();
        let grid = Grid::new(vec![-1.0], vec![1.0], vec![41]).unwrap();
        let ev = HamiltonianEvaluator::new(&s, &HamiltonianSettings::default()).unwrap();
        assert_abs_diff_eq!(ev.dissipation_bounds(&grid).unwrap()[0], 1.1, epsilon = 1e-15);

        let constant = GameModel::new(
            "constant",
            2,
            ActionBox::singleton(vec![]),
            ActionBox::singleton(vec![]),
            Dynamics::General(Arc::new(|_, _, _, out| {
                out[0] = -0.7;
                out[1] = 0.0;
            })),
            crate::dynamics::Constraint::Custom(Arc::new(|x| x[0])),
            2.0,
        )
        .unwrap();
        let grid2 = Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![5, 5]).unwrap();
        let ev = HamiltonianEvaluator::new(&constant, &HamiltonianSettings::default()).unwrap();
        let alpha = ev.dissipation_bounds(&grid2).unwrap();
        assert_abs_diff_eq!(alpha[0], 0.77, epsilon = 1e-15);
        assert_eq!(alpha[1], f64::EPSILON);

        // Jet engine: the extreme of |f_1| on [-1,1]² sits at (1, 1) with d = -0.02.
        let m = jet();
        let grid = Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![201, 201]).unwrap();
        let ev = HamiltonianEvaluator::new(&m, &HamiltonianSettings::default()).unwrap();
        let alpha = ev.dissipation_bounds(&grid).unwrap();
        assert_abs_diff_eq!(alpha[0], 1.1 * 3.02, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha[1], 1.1 * (0.8176 + 0.9424), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn positively_homogeneous(x in -1.0f64..1.0, y in -1.0f64..1.0,
                                  p0 in -5.0f64..5.0, p1 in -5.0f64..5.0, lambda in 0.0f64..10.0) {
            let m = jet();
            for settings in [HamiltonianSettings::default(), sampled(Some(5))] {
                let ev = HamiltonianEvaluator::new(&m, &settings).unwrap();
                for kind in [ValueKind::Lower, ValueKind::Upper] {
                    let a = ev.eval(kind, &[x, y], &[lambda * p0, lambda * p1]);
                    let b = lambda * ev.eval(kind, &[x, y], &[p0, p1]);
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }

        #[test]
        fn sampled_minimax_and_analytic_agreement(x in -1.0f64..1.0, y in -1.0f64..1.0,
                                                   p0 in -5.0f64..5.0, p1 in -5.0f64..5.0) {
            let m = jet();
            let analytic = HamiltonianEvaluator::new(&m, &HamiltonianSettings::default()).unwrap();
            let vertices = HamiltonianEvaluator::new(&m, &sampled(Some(2))).unwrap();
            let nine = HamiltonianEvaluator::new(&m, &sampled(Some(9))).unwrap();
            let xs = [x, y];
            let ps = [p0, p1];
            let h = analytic.eval_lower(&xs, &ps);
            prop_assert_eq!(h, analytic.eval_upper(&xs, &ps));
            prop_assert!(vertices.eval_lower(&xs, &ps) <= vertices.eval_upper(&xs, &ps));
            prop_assert!(nine.eval_lower(&xs, &ps) <= nine.eval_upper(&xs, &ps));
            prop_assert!((vertices.eval_lower(&xs, &ps) - h).abs() <= 1e-12);
            prop_assert!((vertices.eval_upper(&xs, &ps) - h).abs() <= 1e-12);
            // Nine samples include the vertices, so the affine optimum is hit.
            prop_assert!((nine.eval_lower(&xs, &ps) - h).abs() <= 1e-12);
        }

        #[test]
        fn lipschitz_in_p(x in -1.0f64..1.0, y in -1.0f64..1.0,
                          p in proptest::collection::vec(-5.0f64..5.0, 2),
                          q in proptest::collection::vec(-5.0f64..5.0, 2)) {
            let m = jet();
            let grid = Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![41, 41]).unwrap();
            let ev = HamiltonianEvaluator::new(&m, &HamiltonianSettings::default()).unwrap();
            let alpha = ev.dissipation_bounds(&grid).unwrap();
            let bound: f64 = (0..2).map(|i| alpha[i] * (p[i] - q[i]).abs()).sum();
            for kind in [ValueKind::Lower, ValueKind::Upper] {
                let diff = (ev.eval(kind, &[x, y], &p) - ev.eval(kind, &[x, y], &q)).abs();
                prop_assert!(diff <= bound + 1e-12);
            }
        }
    }
}
