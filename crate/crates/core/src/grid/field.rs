use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};

/// Which value function a field approximates: the lower value pairs with the
/// sup-over-disturbance / inf-over-control Hamiltonian, the upper value with
/// inf-over-control / sup-over-disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Lower,
    Upper,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Lower => "lower",
            ValueKind::Upper => "upper",
        }
    }

    /// Minimax ordering in words, recorded in reports.
    pub fn ordering(self) -> &'static str {
        match self {
            ValueKind::Lower => "sup_d inf_u",
            ValueKind::Upper => "inf_u sup_d",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(ValueKind::Lower),
            "upper" => Ok(ValueKind::Upper),
            other => Err(Error::Config(format!(
                "unknown value kind `{other}` (expected lower or upper)"
            ))),
        }
    }
}

/// A scalar field on a grid together with the solve metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    grid: Grid,
    values: Vec<f64>,
    gamma: f64,
    kind: ValueKind,
    residual_history: Vec<f64>,
}

impl ValueField {
    pub fn new(grid: Grid, values: Vec<f64>, gamma: f64, kind: ValueKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value {} at node {i}",
                values[i]
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("discount must be positive, got {gamma}")));
        }
        Ok(Self {
            grid,
            values,
            gamma,
            kind,
            residual_history: Vec::new(),
        })
    }

    /// Evaluate `f` at every node.
    pub fn from_fn(
        grid: Grid,
        gamma: f64,
        kind: ValueKind,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let mut p = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut p);
                f(&p)
            })
            .collect();
        Self::new(grid, values, gamma, kind)
    }

    pub fn with_residual_history(mut self, history: Vec<f64>) -> Self {
        self.residual_history = history;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    pub fn interpolate(&self, point: &[f64]) -> Result<f64> {
        self.grid.interpolate(&self.values, point)
    }

    pub fn one_sided_gradients(&self, multi_index: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.grid.one_sided_gradients(&self.values, multi_index)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
