use std::collections::BTreeMap;

use super::{ActionBox, AffineDynamics, Constraint, Dynamics, GameModel, PolynomialMap, Term};
use crate::error::{Error, Result};

pub const BUILTIN_MODELS: [&str; 3] = ["jet_engine", "singleton_1d", "affine_test_2d"];

fn t(coeff: f64, exponents: &[u32]) -> Term {
    Term::new(coeff, exponents.to_vec())
}

/// Reads overridable parameters, rejecting keys the model does not know.
struct Params<'a> {
    model: &'a str,
    given: &'a BTreeMap<String, f64>,
    known: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &'static str, default: f64) -> f64 {
        self.known.push(key);
        self.given.get(key).copied().unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        for key in self.given.keys() {
            if !self.known.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "model `{}` has no parameter `{key}` (known: {})",
                    self.model,
                    self.known.join(", ")
                )));
            }
        }
        for (key, v) in self.given {
            if !v.is_finite() {
                return Err(Error::Config(format!("parameter `{key}` is not finite")));
            }
        }
        Ok(())
    }
}

/// Circle-style constraint h = s/(1+s²) with s = Σ x_i² − r².
fn disk_constraint(dim: usize, radius: f64) -> Result<Constraint> {
    let mut terms = Vec::with_capacity(dim + 1);
    for axis in 0..dim {
        let mut e = vec![0; dim];
        e[axis] = 2;
        terms.push(Term::new(1.0, e));
    }
    terms.push(Term::new(-radius * radius, vec![0; dim]));
    Ok(Constraint::Polynomial {
        poly: PolynomialMap::new(dim, vec![terms])?,
        normalize: true,
    })
}

/// Look up a built-in model by name, applying parameter overrides.
///
/// * `jet_engine`: Moore-Greitzer surge model, ẋ = −y − 1.5x² − 0.5x³ + d,
///   ẏ = (0.8076 + u)x − 0.9424y with u ∈ [−0.01, 0.01], d ∈ [−0.02, 0.02].
///   Parameters `u_max`, `d_max`, `radius`.
/// * `singleton_1d`: ẋ = −rate·x with singleton action sets. Parameter `rate`.
/// * `affine_test_2d`: ẋ = A x + b u + c d with scalar u, d. Parameters
///   `a11 a12 a21 a22 b1 b2 c1 c2 u_max d_max radius`.
///
/// All three use the normalized disk constraint with declared bound 0.5.
pub fn builtin_model(name: &str, params: &BTreeMap<String, f64>) -> Result<GameModel> {
    let mut p = Params {
        model: name,
        given: params,
        known: Vec::new(),
    };
    let model = match name {
        "jet_engine" => {
            let u_max = p.get("u_max", 0.01);
            let d_max = p.get("d_max", 0.02);
            let radius = p.get("radius", 0.5);
            let drift = PolynomialMap::new(
                2,
                vec![
                    vec![t(-1.0, &[0, 1]), t(-1.5, &[2, 0]), t(-0.5, &[3, 0])],
                    vec![t(0.8076, &[1, 0]), t(-0.9424, &[0, 1])],
                ],
            )?;
            let control = PolynomialMap::new(2, vec![vec![], vec![t(1.0, &[1, 0])]])?;
            let disturbance = PolynomialMap::new(2, vec![vec![t(1.0, &[0, 0])], vec![]])?;
            GameModel::new(
                name,
                2,
                ActionBox::symmetric(&[u_max])?,
                ActionBox::symmetric(&[d_max])?,
                Dynamics::Affine(AffineDynamics {
                    drift,
                    control,
                    disturbance,
                }),
                disk_constraint(2, radius)?,
                0.5,
            )?
        }
        "singleton_1d" => {
            let rate = p.get("rate", 1.0);
            GameModel::new(
                name,
                1,
                ActionBox::singleton(vec![0.0]),
                ActionBox::singleton(vec![0.0]),
                Dynamics::Affine(AffineDynamics {
                    drift: PolynomialMap::new(1, vec![vec![t(-rate, &[1])]])?,
                    control: PolynomialMap::zeros(1, 1),
                    disturbance: PolynomialMap::zeros(1, 1),
                }),
                disk_constraint(1, 0.5)?,
                0.5,
            )?
        }
        "affine_test_2d" => {
            let a = [
                p.get("a11", -1.0),
                p.get("a12", 1.0),
                p.get("a21", -1.0),
                p.get("a22", -1.0),
            ];
            let b = [p.get("b1", 0.0), p.get("b2", 1.0)];
            let c = [p.get("c1", 1.0), p.get("c2", 0.0)];
            let u_max = p.get("u_max", 0.1);
            let d_max = p.get("d_max", 0.05);
            let radius = p.get("radius", 0.5);
            let drift = PolynomialMap::new(
                2,
                vec![
                    vec![t(a[0], &[1, 0]), t(a[1], &[0, 1])],
                    vec![t(a[2], &[1, 0]), t(a[3], &[0, 1])],
                ],
            )?;
            let column = |v: [f64; 2]| {
                PolynomialMap::new(2, v.iter().map(|&k| vec![t(k, &[0, 0])]).collect())
            };
            GameModel::new(
                name,
                2,
                ActionBox::symmetric(&[u_max])?,
                ActionBox::symmetric(&[d_max])?,
                Dynamics::Affine(AffineDynamics {
                    drift,
                    control: column(b)?,
                    disturbance: column(c)?,
                }),
                disk_constraint(2, radius)?,
                0.5,
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown built-in model `{other}` (available: {})",
                BUILTIN_MODELS.join(", ")
            )))
        }
    };
    p.finish()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn jet() -> GameModel {
        builtin_model("jet_engine", &BTreeMap::new()).unwrap()
    }

    /// Direct transcription of the jet engine vector field.
    fn jet_reference(x: &[f64], u: f64, d: f64) -> [f64; 2] {
        let (a, b) = (x[0], x[1]);
        [
            -b - 1.5 * a * a - 0.5 * a * a * a + d,
            (0.8076 + u) * a - 0.9424 * b,
        ]
    }

    #[test]
    fn jet_engine_dynamics_examples() {
        let m = jet();
        assert_eq!(m.eval_dynamics(&[0.0, 0.0], &[0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.eval_dynamics(&[0.0, 0.0], &[0.0], &[0.02]).unwrap(), vec![0.02, 0.0]);
        let f = m.eval_dynamics(&[0.1, 0.0], &[0.01], &[0.0]).unwrap();
        assert_abs_diff_eq!(f[0], -0.0155, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.08176, epsilon = 1e-15);
    }

    #[test]
    fn jet_engine_constraint_examples() {
        let m = jet();
        assert_eq!(m.eval_constraint(&[0.5, 0.0]), 0.0);
        assert_abs_diff_eq!(m.eval_constraint(&[0.0, 0.0]), -0.25 / 1.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(m.eval_constraint(&[0.0, 0.0]), -0.2352941, epsilon = 1e-7);
        assert_eq!(m.bound(), 0.5);
    }

    /// max of s/(1+s²) over s >= -0.25 by scan: 0.5 at s = 1.
    #[test]
    fn jet_engine_bound_by_scan() {
        let best = (0..=400_000)
            .map(|k| -0.25 + k as f64 * 1e-5)
            .map(|s| s / (1.0 + s * s))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(best, 0.5, epsilon = 1e-9);
        jet().check_constraint_bound(&[-3.0, -3.0], &[3.0, 3.0], 301).unwrap();
    }

    #[test]
    fn builtin_boxes() {
        let m = jet();
        assert_eq!(m.control_box().lower(), &[-0.01]);
        assert_eq!(m.control_box().upper(), &[0.01]);
        assert_eq!(m.disturbance_box().lower(), &[-0.02]);
        assert_eq!(m.disturbance_box().upper(), &[0.02]);
        let s = builtin_model("singleton_1d", &BTreeMap::new()).unwrap();
        assert!(s.control_box().is_singleton() && s.disturbance_box().is_singleton());
        assert_eq!(s.control_box().lower(), &[0.0]);
    }

    #[test]
    fn unknown_names_and_params() {
        assert!(matches!(
            builtin_model("nope", &BTreeMap::new()),
            Err(Error::Config(_))
        ));
        let mut p = BTreeMap::new();
        p.insert("gain".to_string(), 1.0);
        assert!(matches!(builtin_model("jet_engine", &p), Err(Error::Config(_))));
        p.clear();
        p.insert("d_max".to_string(), 0.05);
        let m = builtin_model("jet_engine", &p).unwrap();
        assert_eq!(m.disturbance_box().upper(), &[0.05]);
    }

    proptest! {
        #[test]
        fn affine_assembly_matches_reference(
            x in -1.0f64..1.0, y in -1.0f64..1.0,
            u in -0.01f64..=0.01, d in -0.02f64..=0.02,
        ) {
            let m = jet();
            let f = m.eval_dynamics(&[x, y], &[u], &[d]).unwrap();
            let r = jet_reference(&[x, y], u, d);
            prop_assert!((f[0] - r[0]).abs() <= 1e-15);
            prop_assert!((f[1] - r[1]).abs() <= 1e-15);
        }
    }
}
