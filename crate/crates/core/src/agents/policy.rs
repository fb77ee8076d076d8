//! Autoregressive per-cell policy `pi(a_1..a_K | s) = prod_k pi(a_k | s, a_<k)`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::env::N_DELTAS;
use crate::error::{Error, Result};
use crate::nn::{ForwardCache, MultiHeadNet, NetShape};
use crate::tabular::argmax;

/// One factor to evaluate: the state and the actions already chosen for
/// the cells before it. The factor's position is `prefix.len()`.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub state: &'a [f64],
    pub prefix: &'a [usize],
}

/// Maps `(state, a_<k)` to logits over cell `k`'s actions.
pub trait SequenceConditioner {
    type Cache;

    fn positions(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn logits(&self, queries: &[Query<'_>]) -> Result<(Array2<f64>, Self::Cache)>;
    /// Parameter gradient given the loss derivative w.r.t. the logits.
    fn backward(&self, cache: &Self::Cache, d_logits: &Array2<f64>) -> Vec<f64>;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
}

/// Writes `[state, one-hot(a_j) for each position j (zero when masked out), one-hot(position)]`.
pub fn encode_context(
    state: &[f64],
    actions: &[usize],
    positions: usize,
    position: usize,
    include: impl Fn(usize) -> bool,
    out: &mut [f64],
) {
    let d = state.len();
    out.fill(0.0);
    out[..d].copy_from_slice(state);
    for (j, &a) in actions.iter().enumerate() {
        if include(j) {
            out[d + j * N_DELTAS + a] = 1.0;
        }
    }
    out[d + positions * N_DELTAS + position] = 1.0;
}

/// Width of [`encode_context`] rows.
pub fn context_width(state_dim: usize, positions: usize) -> usize {
    state_dim + positions * N_DELTAS + positions
}

/// Rectifier MLP on the state plus one-hot embeddings of the prefix and the
/// position. Its first layer sums a learned embedding per (position, action)
/// of the prefix, so it is additive in the earlier choices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveConditioner {
    net: MultiHeadNet,
    state_dim: usize,
    positions: usize,
}

impl AdditiveConditioner {
    pub fn new<R: Rng>(state_dim: usize, positions: usize, hidden: Vec<usize>, rng: &mut R) -> Self {
        let shape = NetShape {
            input: context_width(state_dim, positions),
            hidden,
            n_actions: N_DELTAS,
            value_heads: 0,
            policy_head: true,
        };
        Self { net: MultiHeadNet::new(shape, rng), state_dim, positions }
    }

    pub fn from_net(net: MultiHeadNet, state_dim: usize, positions: usize) -> Result<Self> {
        let s = net.shape();
        if s.input != context_width(state_dim, positions) || s.n_actions != N_DELTAS || s.value_heads != 0 || !s.policy_head {
            return Err(Error::Shape(format!("net {s:?} is not a conditioner for {positions} cells")));
        }
        Ok(Self { net, state_dim, positions })
    }

    pub fn net(&self) -> &MultiHeadNet {
        &self.net
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn encode(&self, queries: &[Query<'_>]) -> Result<Array2<f64>> {
        let width = context_width(self.state_dim, self.positions);
        let mut x = Array2::zeros((queries.len(), width));
        for (q, mut row) in queries.iter().zip(x.rows_mut()) {
            if q.state.len() != self.state_dim || q.prefix.len() >= self.positions {
                return Err(Error::Shape(format!(
                    "query with {} features and prefix {} for {} features and {} positions",
                    q.state.len(),
                    q.prefix.len(),
                    self.state_dim,
                    self.positions
                )));
            }
            let out = row.as_slice_mut().expect("standard layout");
            encode_context(q.state, q.prefix, self.positions, q.prefix.len(), |_| true, out);
        }
        Ok(x)
    }
}

impl SequenceConditioner for AdditiveConditioner {
    type Cache = ForwardCache;

    fn positions(&self) -> usize {
        self.positions
    }

    fn n_actions(&self) -> usize {
        N_DELTAS
    }

    fn logits(&self, queries: &[Query<'_>]) -> Result<(Array2<f64>, ForwardCache)> {
        let x = self.encode(queries)?;
        self.net.forward_cached(x.view())
    }

    fn backward(&self, cache: &ForwardCache, d_logits: &Array2<f64>) -> Vec<f64> {
        self.net.backward(cache, d_logits)
    }

    fn params(&self) -> &[f64] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }
}

/// Numerically stable `softmax(z)` and `log softmax(z)`.
pub fn softmax_with_log(z: ArrayView1<f64>) -> (Vec<f64>, Vec<f64>) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let log_p: Vec<f64> = z.iter().map(|v| v - log_z).collect();
    (log_p.iter().map(|l| l.exp()).collect(), log_p)
}

fn draw<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, &pi) in p.iter().enumerate() {
        if u < pi {
            return i;
        }
        u -= pi;
    }
    argmax(p.iter().copied())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlStep {
    /// Mean over queries of `KL(pi_k || softmax(score / alpha))`.
    pub kl: f64,
    /// Mean factor entropy.
    pub entropy: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoregressivePolicy<C: SequenceConditioner = AdditiveConditioner> {
    pub conditioner: C,
}

impl<C: SequenceConditioner> AutoregressivePolicy<C> {
    pub fn new(conditioner: C) -> Self {
        Self { conditioner }
    }

    pub fn positions(&self) -> usize {
        self.conditioner.positions()
    }

    /// `pi(. | s, prefix)`.
    pub fn factor(&self, state: &[f64], prefix: &[usize]) -> Result<Vec<f64>> {
        let (logits, _) = self.conditioner.logits(&[Query { state, prefix }])?;
        Ok(softmax_with_log(logits.row(0)).0)
    }

    pub fn joint_probability(&self, state: &[f64], actions: &[usize]) -> Result<f64> {
        let mut p = 1.0;
        for k in 0..actions.len() {
            p *= self.factor(state, &actions[..k])?[actions[k]];
        }
        Ok(p)
    }

    /// Draws `a_1, ..., a_K` in order, each conditioned on the earlier draws.
    pub fn sample<R: Rng>(&self, state: &[f64], rng: &mut R) -> Result<Vec<usize>> {
        let mut actions = Vec::with_capacity(self.positions());
        for _ in 0..self.positions() {
            let p = self.factor(state, &actions)?;
            actions.push(draw(&p, rng));
        }
        Ok(actions)
    }

    /// Greedy decoding: the most likely action of each factor along the greedy prefix.
    pub fn mode(&self, state: &[f64]) -> Result<Vec<usize>> {
        let mut actions = Vec::with_capacity(self.positions());
        for _ in 0..self.positions() {
            let p = self.factor(state, &actions)?;
            actions.push(argmax(p.iter().copied()));
        }
        Ok(actions)
    }

    /// Samples a prefix of length `upto` for every row, batched per position.
    /// Returns the prefixes and `pi(. | s, prefix)` of the next factor when
    /// `upto < K`.
    pub fn sample_prefixes<R: Rng>(
        &self,
        states: ArrayView2<f64>,
        upto: usize,
        rng: &mut R,
    ) -> Result<(Vec<Vec<usize>>, Option<Vec<Vec<f64>>>)> {
        let rows: Vec<&[f64]> = states.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
        let mut prefixes: Vec<Vec<usize>> = vec![Vec::with_capacity(upto); rows.len()];
        for k in 0..=upto.min(self.positions() - 1) {
            let queries: Vec<Query<'_>> =
                rows.iter().zip(&prefixes).map(|(s, p)| Query { state: s, prefix: p }).collect();
            let (logits, _) = self.conditioner.logits(&queries)?;
            let probs: Vec<Vec<f64>> = logits.rows().into_iter().map(|z| softmax_with_log(z).0).collect();
            if k == upto {
                return Ok((prefixes, Some(probs)));
            }
            for (prefix, p) in prefixes.iter_mut().zip(&probs) {
                prefix.push(draw(p, rng));
            }
        }
        Ok((prefixes, None))
    }

    /// Gradient of the mean `KL(pi(.|q) || softmax(scores_q / alpha))` over queries.
    ///
    /// With `pi = softmax(z)` the derivative w.r.t. the logits is
    /// `pi (log pi - log p - KL)`.
    pub fn kl_gradient(&self, queries: &[Query<'_>], scores: ArrayView2<f64>, alpha: f64) -> Result<KlStep> {
        if queries.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if scores.nrows() != queries.len() || scores.ncols() != self.conditioner.n_actions() {
            return Err(Error::Shape(format!("scores are {:?} for {} queries", scores.dim(), queries.len())));
        }
        let (logits, cache) = self.conditioner.logits(queries)?;
        let n = queries.len() as f64;
        let mut d_logits = Array2::zeros(logits.raw_dim());
        let (mut kl_sum, mut h_sum) = (0.0, 0.0);
        for (row, mut d) in d_logits.rows_mut().into_iter().enumerate() {
            let (pi, log_pi) = softmax_with_log(logits.row(row));
            let scaled = scores.row(row).mapv(|v| v / alpha);
            let (_, log_p) = softmax_with_log(scaled.view());
            let kl: f64 = pi.iter().zip(&log_pi).zip(&log_p).map(|((p, lp), lq)| p * (lp - lq)).sum();
            let h: f64 = -pi.iter().zip(&log_pi).map(|(p, lp)| p * lp).sum::<f64>();
            kl_sum += kl;
            h_sum += h;
            for a in 0..pi.len() {
                d[a] = pi[a] * (log_pi[a] - log_p[a] - kl) / n;
            }
        }
        Ok(KlStep { kl: kl_sum / n, entropy: h_sum / n, grad: self.conditioner.backward(&cache, &d_logits) })
    }
}
