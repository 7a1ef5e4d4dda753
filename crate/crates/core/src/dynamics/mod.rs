//! Game dynamics ẋ = f(x, u, d), the state constraint h and the action boxes.

mod builtin;
mod polynomial;

pub use builtin::{builtin_model, BUILTIN_MODELS};
pub use polynomial::{PolynomialMap, Term};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, BOUNDARY_BAND};

/// Axis-aligned box of admissible actions. Degenerate axes (lower == upper)
/// are allowed, so singletons are boxes too.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ActionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Config(format!(
                    "box axis {i}: need finite lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box [-r, r] per axis.
    pub fn symmetric(radius: &[f64]) -> Result<Self> {
        Self::new(radius.iter().map(|r| -r).collect(), radius.to_vec())
    }

    pub fn singleton(point: Vec<f64>) -> Self {
        Self {
            lower: point.clone(),
            upper: point,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self, axis: usize) -> f64 {
        0.5 * (self.lower[axis] + self.upper[axis])
    }

    pub fn radius(&self, axis: usize) -> f64 {
        0.5 * (self.upper[axis] - self.lower[axis])
    }

    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    /// Uniform samples with `per_axis` points on every nondegenerate axis,
    /// in lexicographic order (first axis slowest). `per_axis = 2` gives the
    /// vertices. A zero-dimensional box yields one empty sample.
    pub fn samples(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|a| {
                let (lo, hi) = (self.lower[a], self.upper[a]);
                if lo == hi {
                    vec![lo]
                } else {
                    (0..per_axis)
                        .map(|k| {
                            if k + 1 == per_axis {
                                hi
                            } else {
                                lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let mut out = vec![Vec::with_capacity(self.dim())];
        for axis in axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&x| {
                        let mut p = prefix.clone();
                        p.push(x);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        self.samples(2)
    }
}

/// Control-affine dynamics f(x,u,d) = f1(x) + f2(x) u + f3(x) d. The matrix
/// maps store entry (i, j) as output `i * cols + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDynamics {
    pub drift: PolynomialMap,
    pub control: PolynomialMap,
    pub disturbance: PolynomialMap,
}

pub type VectorFieldFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub enum Dynamics {
    Affine(AffineDynamics),
    /// Black-box evaluator writing f(x, u, d) into the output slice.
    General(Arc<VectorFieldFn>),
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Affine(a) => f.debug_tuple("Affine").field(a).finish(),
            Dynamics::General(_) => f.write_str("General(<fn>)"),
        }
    }
}

pub type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// The state constraint h; the constraint set is {h <= 0}.
#[derive(Clone)]
pub enum Constraint {
    /// Scalar polynomial, optionally passed through [`normalize_value`].
    Polynomial { poly: PolynomialMap, normalize: bool },
    Custom(Arc<ScalarFn>),
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Polynomial { poly, normalize } => f
                .debug_struct("Polynomial")
                .field("poly", poly)
                .field("normalize", normalize)
                .finish(),
            Constraint::Custom(_) => f.write_str("Custom(<fn>)"),
        }
    }
}

impl Constraint {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Polynomial { poly, normalize } => {
                let mut out = [0.0];
                poly.eval_into(x, &mut out);
                if *normalize {
                    normalize_value(out[0])
                } else {
                    out[0]
                }
            }
            Constraint::Custom(f) => f(x),
        }
    }
}

/// g = v / (1 + v²): bounded by 1/2 in magnitude, same sign and zeros as v.
#[inline]
pub fn normalize_value(v: f64) -> f64 {
    if v.is_infinite() {
        return 0.0_f64.copysign(v);
    }
    v / (1.0 + v * v)
}

/// Wrap a possibly unbounded constraint function into a bounded one with the
/// same zero set and sign pattern.
pub fn normalize_constraint<F>(raw: F) -> impl Fn(&[f64]) -> f64 + Send + Sync
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    move |x| normalize_value(raw(x))
}

#[derive(Debug, Clone)]
pub struct GameModel {
    name: String,
    state_dim: usize,
    control_box: ActionBox,
    disturbance_box: ActionBox,
    dynamics: Dynamics,
    constraint: Constraint,
    bound: f64,
}

impl GameModel {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        control_box: ActionBox,
        disturbance_box: ActionBox,
        dynamics: Dynamics,
        constraint: Constraint,
        bound: f64,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::Config(format!(
                "declared constraint bound must be positive, got {bound}"
            )));
        }
        let (m, l) = (control_box.dim(), disturbance_box.dim());
        if let Dynamics::Affine(a) = &dynamics {
            let shapes = [
                ("drift", &a.drift, state_dim),
                ("control", &a.control, state_dim * m),
                ("disturbance", &a.disturbance, state_dim * l),
            ];
            for (label, map, outputs) in shapes {
                if map.input_dim() != state_dim || map.output_dim() != outputs {
                    return Err(Error::Shape(format!(
                        "{label} map is {}→{}, expected {state_dim}→{outputs}",
                        map.input_dim(),
                        map.output_dim()
                    )));
                }
            }
        }
        if let Constraint::Polynomial { poly, .. } = &constraint {
            if poly.input_dim() != state_dim || poly.output_dim() != 1 {
                return Err(Error::Shape(format!(
                    "constraint polynomial must be {state_dim}→1, got {}→{}",
                    poly.input_dim(),
                    poly.output_dim()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            control_box,
            disturbance_box,
            dynamics,
            constraint,
            bound,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_box.dim()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbance_box.dim()
    }

    pub fn control_box(&self) -> &ActionBox {
        &self.control_box
    }

    pub fn disturbance_box(&self) -> &ActionBox {
        &self.disturbance_box
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    /// Declared M with |h| <= M.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn affine(&self) -> Option<&AffineDynamics> {
        match &self.dynamics {
            Dynamics::Affine(a) => Some(a),
            Dynamics::General(_) => None,
        }
    }

    /// f(x, u, d) with box membership checked.
    pub fn eval_dynamics(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::Shape(format!(
                "state has {} components, model has {}",
                x.len(),
                self.state_dim
            )));
        }
        if !self.control_box.contains(u) {
            return Err(Error::Domain(format!("control {u:?} outside the control box")));
        }
        if !self.disturbance_box.contains(d) {
            return Err(Error::Domain(format!(
                "disturbance {d:?} outside the disturbance box"
            )));
        }
        let mut out = vec![0.0; self.state_dim];
        self.dynamics_into(x, u, d, &mut out);
        Ok(out)
    }

    /// Unchecked f(x, u, d) for inner loops.
    #[inline]
    pub fn dynamics_into(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) {
        match &self.dynamics {
            Dynamics::Affine(a) => {
                let (m, l) = (u.len(), d.len());
                a.drift.eval_into(x, out);
                for (i, o) in out.iter_mut().enumerate() {
                    for (j, &uj) in u.iter().enumerate() {
                        *o += a.control.eval_output(i * m + j, x) * uj;
                    }
                    for (k, &dk) in d.iter().enumerate() {
                        *o += a.disturbance.eval_output(i * l + k, x) * dk;
                    }
                }
            }
            Dynamics::General(f) => f(x, u, d, out),
        }
    }

    pub fn eval_constraint(&self, x: &[f64]) -> f64 {
        self.constraint.eval(x)
    }

    /// Check |h| <= M on a uniform lattice with `per_axis` points per axis
    /// over the box [lower, upper] (no tolerance).
    pub fn check_constraint_bound(&self, lower: &[f64], upper: &[f64], per_axis: usize) -> Result<()> {
        let lattice = Grid::new(lower.to_vec(), upper.to_vec(), vec![per_axis.max(3); lower.len()])?;
        let mut p = vec![0.0; lattice.dim()];
        for i in 0..lattice.len() {
            lattice.point_into(i, &mut p);
            let h = self.eval_constraint(&p);
            if !h.is_finite() || h.abs() > self.bound {
                return Err(Error::Config(format!(
                    "constraint value {h} at {p:?} exceeds the declared bound {}",
                    self.bound
                )));
            }
        }
        Ok(())
    }

    /// Check that {h <= epsilon_set} stays clear of the boundary band of
    /// `grid`, sampling the band on a lattice twice as fine as the grid.
    pub fn check_domain_margin(&self, grid: &Grid, epsilon_set: f64) -> Result<()> {
        if grid.dim() != self.state_dim {
            return Err(Error::Shape(format!(
                "grid dimension {} does not match model state dimension {}",
                grid.dim(),
                self.state_dim
            )));
        }
        let fine_counts: Vec<usize> = grid.counts().iter().map(|c| 2 * (c - 1) + 1).collect();
        let fine = Grid::new(grid.lower().to_vec(), grid.upper().to_vec(), fine_counts)?;
        let band = 2 * BOUNDARY_BAND;
        let mut p = vec![0.0; fine.dim()];
        for i in 0..fine.len() {
            if !fine.in_boundary_band(i, band + 1) {
                continue;
            }
            fine.point_into(i, &mut p);
            let h = self.eval_constraint(&p);
            if h <= epsilon_set {
                return Err(Error::Config(format!(
                    "grid box does not contain {{h <= {epsilon_set}}} with a {BOUNDARY_BAND}-cell margin: \
                     h = {h:.6} at {p:?} lies within {BOUNDARY_BAND} cells of a box face"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_value(0.0), 0.0);
        assert_eq!(normalize_value(1.0), 0.5);
        assert_abs_diff_eq!(normalize_value(-3.0), -0.3, epsilon = 1e-16);
        let g = normalize_constraint(|x: &[f64]| x[0] * 1e6);
        assert!(g(&[1.0]).abs() <= 0.5);
    }

    #[test]
    fn box_samples_are_lexicographic() {
        let b = ActionBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(
            b.vertices(),
            vec![vec![-1.0, 0.0], vec![-1.0, 2.0], vec![1.0, 0.0], vec![1.0, 2.0]]
        );
        let s = ActionBox::new(vec![0.0], vec![1.0]).unwrap().samples(5);
        assert_eq!(s, vec![vec![0.0], vec![0.25], vec![0.5], vec![0.75], vec![1.0]]);
        assert_eq!(ActionBox::singleton(vec![0.0]).samples(9), vec![vec![0.0]]);
        assert_eq!(ActionBox::singleton(vec![]).samples(9), vec![Vec::<f64>::new()]);
        assert!(ActionBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn eval_dynamics_checks_boxes() {
        let m = builtin_model("jet_engine", &BTreeMap::new()).unwrap();
        assert!(matches!(
            m.eval_dynamics(&[0.0, 0.0], &[0.02], &[0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            m.eval_dynamics(&[0.0, 0.0], &[0.0], &[-0.03]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn domain_margin_check() {
        let m = builtin_model("jet_engine", &BTreeMap::new()).unwrap();
        let ok = Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![41, 41]).unwrap();
        m.check_domain_margin(&ok, 0.01).unwrap();
        let tight = Grid::new(vec![-0.52, -1.0], vec![1.0, 1.0], vec![41, 41]).unwrap();
        let err = m.check_domain_margin(&tight, 0.01).unwrap_err();
        assert!(err.to_string().contains("margin"), "{err}");
    }

    proptest! {
        #[test]
        fn normalized_values_are_bounded(v in -1e12f64..1e12) {
            let g = normalize_value(v);
            prop_assert!(g.abs() <= 0.5);
            prop_assert_eq!(g == 0.0, v == 0.0);
            prop_assert!(g.signum() == v.signum() || v == 0.0);
        }
    }
}
