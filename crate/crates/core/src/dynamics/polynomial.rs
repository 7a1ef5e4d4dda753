use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One monomial `coeff * Π x_i^exponents_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl Term {
    pub fn new(coeff: f64, exponents: Vec<u32>) -> Self {
        Self { coeff, exponents }
    }

    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.coeff;
        for (&xi, &e) in x.iter().zip(&self.exponents) {
            if e != 0 {
                v *= xi.powi(e as i32);
            }
        }
        v
    }
}

/// A vector-valued polynomial ℝⁿ → ℝʳ as per-output term lists. Terms are
/// summed in stored order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap {
    input_dim: usize,
    outputs: Vec<Vec<Term>>,
}

impl PolynomialMap {
    pub fn new(input_dim: usize, outputs: Vec<Vec<Term>>) -> Result<Self> {
        for (k, terms) in outputs.iter().enumerate() {
            for t in terms {
                if t.exponents.len() != input_dim {
                    return Err(Error::Shape(format!(
                        "output {k}: exponent vector {:?} does not have length {input_dim}",
                        t.exponents
                    )));
                }
                if !t.coeff.is_finite() {
                    return Err(Error::Config(format!("output {k}: non-finite coefficient")));
                }
            }
        }
        Ok(Self {
            input_dim,
            outputs,
        })
    }

    /// All-zero map with `outputs` components.
    pub fn zeros(input_dim: usize, outputs: usize) -> Self {
        Self {
            input_dim,
            outputs: vec![Vec::new(); outputs],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[Vec<Term>] {
        &self.outputs
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dim);
        for (o, terms) in out.iter_mut().zip(&self.outputs) {
            *o = terms.iter().fold(0.0, |acc, t| acc + t.eval(x));
        }
    }

    /// Value of output `k` alone.
    #[inline]
    pub fn eval_output(&self, k: usize, x: &[f64]) -> f64 {
        self.outputs[k].iter().fold(0.0, |acc, t| acc + t.eval(x))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(x, &mut out);
        out
    }
}
