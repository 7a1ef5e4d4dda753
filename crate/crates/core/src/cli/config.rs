//! JSON run configuration. Unknown keys anywhere are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    builtin_model, ActionBox, AffineDynamics, Constraint, Dynamics, GameModel, PolynomialMap, Term,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueKind};
use crate::hamiltonian::HamiltonianSettings;
use crate::solver::{Backend, FootStep, SolveConfig};
use crate::synthesis::VerifySettings;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub paths: PathsSection,
}

/// Either a built-in model name (with parameter overrides) or an explicit
/// polynomial model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub explicit: Option<ExplicitModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    /// Terms of the raw scalar constraint polynomial.
    pub polynomial: Vec<Term>,
    /// Pass the raw polynomial through s ↦ s/(1+s²).
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

/// f(x,u,d) = drift(x) + control(x) u + disturbance(x) d. Matrix maps list
/// their entries row-major: entry (i, j) is output i * cols + j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitModel {
    pub state_dim: usize,
    pub drift: Vec<Vec<Term>>,
    #[serde(default)]
    pub control: Vec<Vec<Term>>,
    #[serde(default)]
    pub disturbance: Vec<Vec<Term>>,
    pub control_box: BoxSection,
    pub disturbance_box: BoxSection,
    pub constraint: ConstraintSection,
    /// Declared bound M on |h|.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ValueSelection {
    Lower,
    Upper,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub gamma: f64,
    pub backend: Backend,
    pub dt: Option<f64>,
    pub cfl: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub value: ValueSelection,
    pub hamiltonian: HamiltonianSettings,
    pub foot_step: FootStep,
    pub progress_interval: usize,
}

impl Default for SolveSection {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            gamma: d.gamma,
            backend: d.backend,
            dt: d.dt,
            cfl: d.cfl,
            tol: d.tol,
            max_iters: d.max_iters,
            value: ValueSelection::Both,
            hamiltonian: d.hamiltonian,
            foot_step: d.foot_step,
            progress_interval: d.progress_interval,
        }
    }
}

impl SolveSection {
    pub fn solve_config(&self, kind: ValueKind) -> SolveConfig {
        SolveConfig {
            gamma: self.gamma,
            backend: self.backend,
            dt: self.dt,
            cfl: self.cfl,
            tol: self.tol,
            max_iters: self.max_iters,
            kind,
            hamiltonian: self.hamiltonian.clone(),
            foot_step: self.foot_step,
            progress_interval: self.progress_interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub epsilon_set: f64,
    pub levels: Vec<f64>,
}

impl Default for ExtractSection {
    fn default() -> Self {
        Self {
            epsilon_set: 0.01,
            levels: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub x0: Option<Vec<f64>>,
    pub t_final: f64,
    pub dt_sim: f64,
    /// `feedback` or `constant:<u1,u2,...>`.
    pub control: String,
    /// `worst`, `random` or `constant:<d1,d2,...>`.
    pub disturbance: String,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            x0: None,
            t_final: 10.0,
            dt_sim: 0.01,
            control: "feedback".into(),
            disturbance: "worst".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub trials: usize,
    pub epsilon: f64,
    pub t_final: f64,
    pub dt_sim: f64,
    pub interior_margin: usize,
    pub min_pass_fraction: f64,
    /// Points per axis of the coarse oracle instance.
    pub oracle_counts: usize,
    pub oracle_tol: f64,
    pub oracle_agreement: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        let s = VerifySettings::default();
        Self {
            trials: s.trials,
            epsilon: s.epsilon,
            t_final: s.t_final,
            dt_sim: s.dt_sim,
            interior_margin: s.interior_margin,
            min_pass_fraction: 0.99,
            oracle_counts: 21,
            oracle_tol: 1e-14,
            oracle_agreement: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::parse(origin, format!("line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_model(&self) -> Result<GameModel> {
        let section = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("missing `model` section".into()))?;
        match (&section.builtin, &section.explicit) {
            (Some(name), None) => builtin_model(name, &section.params),
            (None, Some(explicit)) => {
                if !section.params.is_empty() {
                    return Err(Error::Config("`model.params` only applies to built-in models".into()));
                }
                explicit.build()
            }
            _ => Err(Error::Config(
                "`model` needs exactly one of `builtin` or `explicit`".into(),
            )),
        }
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config("missing `grid` section".into()))?;
        Grid::new(g.lower.clone(), g.upper.clone(), g.counts.clone())
    }

    /// Model and grid, with the declared bound and the domain margin checked.
    pub fn model_and_grid(&self) -> Result<(GameModel, Grid)> {
        let model = self.build_model()?;
        let grid = self.build_grid()?;
        model.check_domain_margin(&grid, self.extract.epsilon_set)?;
        Ok((model, grid))
    }

    pub fn verify_settings(&self, seed: u64) -> VerifySettings {
        VerifySettings {
            trials: self.verify.trials,
            epsilon: self.verify.epsilon,
            t_final: self.verify.t_final,
            dt_sim: self.verify.dt_sim,
            seed,
            interior_margin: self.verify.interior_margin,
        }
    }
}

impl ExplicitModel {
    pub fn build(&self) -> Result<GameModel> {
        let n = self.state_dim;
        let control_box = ActionBox::new(self.control_box.lower.clone(), self.control_box.upper.clone())?;
        let disturbance_box =
            ActionBox::new(self.disturbance_box.lower.clone(), self.disturbance_box.upper.clone())?;
        let matrix = |terms: &Vec<Vec<Term>>, cols: usize| -> Result<PolynomialMap> {
            if terms.is_empty() {
                Ok(PolynomialMap::zeros(n, n * cols))
            } else {
                PolynomialMap::new(n, terms.clone())
            }
        };
        let dynamics = Dynamics::Affine(AffineDynamics {
            drift: PolynomialMap::new(n, self.drift.clone())?,
            control: matrix(&self.control, control_box.dim())?,
            disturbance: matrix(&self.disturbance, disturbance_box.dim())?,
        });
        let constraint = Constraint::Polynomial {
            poly: PolynomialMap::new(n, vec![self.constraint.polynomial.clone()])?,
            normalize: self.constraint.normalize,
        };
        GameModel::new(
            "explicit",
            n,
            control_box,
            disturbance_box,
            dynamics,
            constraint,
            self.bound,
        )
    }
}
