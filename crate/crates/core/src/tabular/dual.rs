use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lagrange multipliers `[1, lambda_1, ..., lambda_N]` with the offsets
/// `[0, xi_1 - 1, ..., xi_N - 1]` and the projected-descent step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVars {
    lambda: Vec<f64>,
    xi_offsets: Vec<f64>,
    pub step: f64,
}

impl DualVars {
    /// `multipliers` and `xi` hold one entry per constraint.
    pub fn new(multipliers: &[f64], xi: &[f64], step: f64) -> Result<Self> {
        if multipliers.len() != xi.len() {
            return Err(Error::Shape(format!("{} multipliers for {} constraints", multipliers.len(), xi.len())));
        }
        if multipliers.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidParam { name: "lambda", reason: "multipliers must be finite and >= 0".into() });
        }
        let mut lambda = vec![1.0];
        lambda.extend_from_slice(multipliers);
        let mut xi_offsets = vec![0.0];
        xi_offsets.extend(xi.iter().map(|x| x - 1.0));
        Ok(Self { lambda, xi_offsets, step })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn xi_offsets(&self) -> &[f64] {
        &self.xi_offsets
    }

    pub fn n_constraints(&self) -> usize {
        self.lambda.len() - 1
    }

    /// `lambda_i <- max(0, lambda_i - step (V_i + xi_i))` for every constraint;
    /// the objective weight stays at 1.
    pub fn update(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.lambda.len(), "one value estimate per objective");
        for i in 1..self.lambda.len() {
            let grad = values[i] + self.xi_offsets[i];
            self.lambda[i] = (self.lambda[i] - self.step * grad).max(0.0);
        }
    }
}
