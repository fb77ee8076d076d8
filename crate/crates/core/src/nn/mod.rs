//! Multi-head MLP with a shared rectifier trunk.
//!
//! All parameters live in one flat vector so optimizers, target blending,
//! checkpoints and finite-difference checks can treat the net as `R^n`. Each
//! affine layer stores its weights row-major as `(outputs, inputs)` followed by
//! its biases. The output layer is the concatenation of `value_heads` blocks
//! of `n_actions` values, optionally followed by `n_actions` policy logits.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod td;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use td::{td_loss_and_grad, weighted_regression, RegressionTarget, TdBatch, TdResult};

/// Architecture of a [`MultiHeadNet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub n_actions: usize,
    pub value_heads: usize,
    pub policy_head: bool,
}

impl NetShape {
    pub fn outputs(&self) -> usize {
        self.n_actions * (self.value_heads + self.policy_head as usize)
    }

    /// `(inputs, outputs)` of every affine layer, trunk first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.outputs()));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Two equal hidden layers, as wide as fits in `target` parameters.
    pub fn two_layer_for_budget(input: usize, n_actions: usize, value_heads: usize, target: usize) -> Self {
        let mut shape = NetShape { input, hidden: vec![1, 1], n_actions, value_heads, policy_head: false };
        let mut width = 1;
        loop {
            shape.hidden = vec![width + 1, width + 1];
            if shape.param_count() > target {
                break;
            }
            width += 1;
        }
        shape.hidden = vec![width, width];
        shape
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Layer {
    fn weights<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.outputs, self.inputs), &params[self.offset..self.offset + self.inputs * self.outputs])
            .expect("layer slice matches its shape")
    }

    fn bias<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        let start = self.offset + self.inputs * self.outputs;
        ArrayView1::from(&params[start..start + self.outputs])
    }

    fn len(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Post-activation values of every layer input, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadNet {
    shape: NetShape,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

impl MultiHeadNet {
    /// He-uniform trunk with slightly positive biases; the output layer starts
/// at a tenth of that scale with zero biases.
    pub fn new<R: Rng>(shape: NetShape, rng: &mut R) -> Self {
        let mut net = Self::zeros(shape);
        let last = net.layers.len() - 1;
        for (li, layer) in net.layers.clone().iter().enumerate() {
            let mut bound = (6.0 / layer.inputs as f64).sqrt();
            if li == last {
                bound *= 0.1;
            }
            for w in &mut net.params[layer.offset..layer.offset + layer.inputs * layer.outputs] {
                *w = rng.random_range(-bound..bound);
            }
            if li < last {
                net.params[layer.offset + layer.inputs * layer.outputs..layer.offset + layer.len()].fill(0.01);
            }
        }
        net
    }

    pub fn zeros(shape: NetShape) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for (inputs, outputs) in shape.layer_dims() {
            let layer = Layer { inputs, outputs, offset };
            offset += layer.len();
            layers.push(layer);
        }
        Self { shape, layers, params: vec![0.0; offset] }
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(shape);
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!("{} parameters for a net of {}", params.len(), net.params.len())));
        }
        net.params = params;
        Ok(net)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter index ranges `(start, end)` of each affine layer.
    pub fn layer_ranges(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.offset, l.offset + l.len())).collect()
    }

    /// Zeroes the output layer, so every head starts at exactly 0.
    pub fn zero_output_layer(&mut self) {
        let last = *self.layers.last().expect("at least one layer");
        self.params[last.offset..last.offset + last.len()].fill(0.0);
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.shape.input {
            return Err(Error::Shape(format!("input has {} features, net expects {}", x.ncols(), self.shape.input)));
        }
        Ok(())
    }

    /// Raw outputs for a batch of rows.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_row(&self, x: &[f64]) -> Result<Array1<f64>> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.forward(x)?.row(0).to_owned())
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights(&self.params).t());
            z += &layer.bias(&self.params);
            if li < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(a);
            a = z;
        }
        Ok((a, ForwardCache { inputs }))
    }

    /// Gradient of a scalar loss given its derivative w.r.t. the raw outputs.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[li];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            let w_len = layer.inputs * layer.outputs;
            grad[layer.offset..layer.offset + w_len]
                .copy_from_slice(gw.as_slice().expect("standard layout"));
            grad[layer.offset + w_len..layer.offset + layer.len()]
                .copy_from_slice(gb.as_slice().expect("standard layout"));
            if li > 0 {
                let mut prev = delta.dot(&layer.weights(&self.params));
                // input of this layer is the rectified output of the previous one
                prev.zip_mut_with(input, |d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
        }
        grad
    }

    /// Column of head `head`, action `a` in the raw output.
    pub fn value_col(&self, head: usize, a: usize) -> usize {
        head * self.shape.n_actions + a
    }

    /// First column of the policy logits.
    pub fn logits_col(&self) -> usize {
        self.shape.value_heads * self.shape.n_actions
    }

    /// `sum_i lambda_i Q_i(row, .)` for every action.
    pub fn scalarized(&self, out: &Array2<f64>, row: usize, lambda: &[f64]) -> Vec<f64> {
        let n = self.shape.n_actions;
        (0..n)
            .map(|a| lambda.iter().enumerate().map(|(i, l)| l * out[[row, self.value_col(i, a)]]).sum())
            .collect()
    }

    pub fn logits<'a>(&self, out: &'a Array2<f64>, row: usize) -> ArrayView1<'a, f64> {
        let c = self.logits_col();
        out.slice(s![row, c..c + self.shape.n_actions])
    }
}

/// `target <- (1 - kappa) target + kappa online`.
pub fn soft_update(target: &mut MultiHeadNet, online: &MultiHeadNet, kappa: f64) {
    assert!(kappa > 0.0 && kappa <= 1.0, "kappa must lie in (0, 1]");
    assert_eq!(target.params.len(), online.params.len(), "nets differ in shape");
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = (1.0 - kappa) * *t + kappa * o;
    }
}
