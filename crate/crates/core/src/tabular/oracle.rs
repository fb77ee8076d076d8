//! Scalar value iteration on the weighted reward `lambda^T R`.
//!
//! This route never forms per-objective tables; it serves as the reference
//! that decomposed value iteration is checked against.

use ndarray::Array2;

use crate::error::{Error, Result};

use super::mdp::FiniteMdp;

pub fn scalar_value_iteration(mdp: &FiniteMdp, weights: &[f64], tol: f64, max_sweeps: usize) -> Result<Array2<f64>> {
    if weights.len() != mdp.n_objectives() {
        return Err(Error::Shape(format!("{} weights for {} objectives", weights.len(), mdp.n_objectives())));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let reward = Array2::from_shape_fn((ns, na), |(s, a)| {
        mdp.reward(s, a).iter().zip(weights).map(|(r, w)| r * w).sum::<f64>()
    });
    let mut q = Array2::<f64>::zeros((ns, na));
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        let v: Vec<f64> = q.rows().into_iter().map(|row| row.fold(f64::NEG_INFINITY, |m, &x| m.max(x))).collect();
        let next = Array2::from_shape_fn((ns, na), |(s, a)| {
            let boot: f64 = mdp.next_distribution(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
            reward[[s, a]] + mdp.gamma() * boot
        });
        residual = (&next - &q).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        q = next;
        if residual < tol {
            return Ok(q);
        }
    }
    Err(Error::IterationCap { iterations: max_sweeps, residual })
}
