use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::tabular::argmax;

use super::MultiHeadNet;

/// One squared-error term: output `col` of batch row `row` should equal `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTarget {
    pub row: usize,
    pub col: usize,
    pub target: f64,
    pub weight: f64,
}

/// `(1/B) sum w (target - out[row, col])^2` over the given terms, and its
/// gradient, where `B` is the number of rows in `x`.
pub fn weighted_regression(
    net: &MultiHeadNet,
    x: ArrayView2<f64>,
    terms: &[RegressionTarget],
) -> Result<(f64, Vec<f64>)> {
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let (out, cache) = net.forward_cached(x)?;
    let b = x.nrows() as f64;
    let mut d_out = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    for t in terms {
        let err = t.target - out[[t.row, t.col]];
        loss += t.weight * err * err / b;
        d_out[[t.row, t.col]] -= 2.0 * t.weight * err / b;
    }
    Ok((loss, net.backward(&cache, &d_out)))
}

/// A minibatch of transitions with per-row importance weights.
#[derive(Debug, Clone, Copy)]
pub struct TdBatch<'a> {
    pub states: ArrayView2<'a, f64>,
    pub actions: &'a [usize],
    /// `(B, heads)`.
    pub rewards: ArrayView2<'a, f64>,
    pub next_states: ArrayView2<'a, f64>,
    pub terminal: &'a [bool],
    pub weights: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct TdResult {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// `y_i - Q_i(s, a)` per row and head.
    pub td_errors: Array2<f64>,
    /// Batch mean of `Q_i(s, argmax_a lambda^T Q(s, a))` per head.
    pub state_values: Vec<f64>,
}

/// Double-DQN loss summed over value heads.
///
/// The bootstrap action maximizes `lambda^T Q(s', .)` on the online net; the
/// values at that action come from the target net, which receives no gradient.
pub fn td_loss_and_grad(
    net: &MultiHeadNet,
    target: &MultiHeadNet,
    batch: &TdBatch<'_>,
    lambda: &[f64],
    gamma: f64,
) -> Result<TdResult> {
    let b = batch.states.nrows();
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    let heads = net.shape().value_heads;
    if lambda.len() != heads || batch.rewards.ncols() != heads {
        return Err(Error::Shape(format!(
            "{heads} heads with {} weights and {} reward columns",
            lambda.len(),
            batch.rewards.ncols()
        )));
    }
    if [batch.actions.len(), batch.rewards.nrows(), batch.next_states.nrows(), batch.terminal.len(), batch.weights.len()]
        .iter()
        .any(|&n| n != b)
    {
        return Err(Error::Shape("batch columns differ in length".into()));
    }
    if batch.weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidParam { name: "weights", reason: "must be non-negative".into() });
    }
    let online_next = net.forward(batch.next_states)?;
    let target_next = target.forward(batch.next_states)?;
    let current = net.forward(batch.states)?;
    let mut terms = Vec::with_capacity(b * heads);
    let mut td_errors = Array2::zeros((b, heads));
    let mut state_values = vec![0.0; heads];
    for row in 0..b {
        let greedy = argmax(net.scalarized(&current, row, lambda));
        for (i, v) in state_values.iter_mut().enumerate() {
            *v += current[[row, net.value_col(i, greedy)]] / b as f64;
        }
        let a_star = argmax(net.scalarized(&online_next, row, lambda));
        for i in 0..heads {
            let boot = if batch.terminal[row] { 0.0 } else { gamma * target_next[[row, target.value_col(i, a_star)]] };
            let y = batch.rewards[[row, i]] + boot;
            let col = net.value_col(i, batch.actions[row]);
            td_errors[[row, i]] = y - current[[row, col]];
            terms.push(RegressionTarget { row, col, target: y, weight: batch.weights[row] });
        }
    }
    let (loss, grad) = weighted_regression(net, batch.states, &terms)?;
    Ok(TdResult { loss, grad, td_errors, state_values })
}
