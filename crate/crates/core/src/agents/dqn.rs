//! Multi-head Double DQN over the 27 homogeneous delta triples.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{features, Controller, Delta, EnvAction, EnvConfig, EnvState, N_DELTAS, N_OBJECTIVES};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{soft_update, td_loss_and_grad, Adam, AdamConfig, MultiHeadNet, NetShape, TdBatch};
use crate::tabular::{argmax, DualVars};

use super::config::{DualConfig, DualEstimate, ReplayConfig};
use super::replay::{PrioritizedBuffer, SampleView};
use super::{format_floats, parse_floats};

/// Parameter budget of the default trunk.
pub const DEFAULT_PARAM_BUDGET: usize = 180_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    /// Hidden widths; when absent, two equal layers sized to `param_budget`.
    pub hidden: Option<Vec<usize>>,
    pub param_budget: usize,
    pub q_lr: f64,
    pub kappa: f64,
    pub temperature_start: f64,
    pub temperature_end: f64,
    /// Environment steps between gradient steps.
    pub train_every: usize,
    pub max_grad_norm: Option<f64>,
    pub replay: ReplayConfig,
    pub dual: DualConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            param_budget: DEFAULT_PARAM_BUDGET,
            q_lr: 1e-3,
            kappa: 5e-3,
            temperature_start: 1.0,
            temperature_end: 0.05,
            train_every: 1,
            max_grad_norm: Some(10.0),
            replay: ReplayConfig { batch_size: 256, ..Default::default() },
            // The greedy DQN policy rides the switch buffer at lower multipliers.
            dual: DualConfig { lambda_init: vec![100.0, 100.0], ..Default::default() },
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        self.replay.validate()?;
        self.dual.build()?;
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidParam { name: "kappa", reason: format!("{} not in (0, 1]", self.kappa) });
        }
        if !(self.temperature_start > 0.0 && self.temperature_end > 0.0) {
            return Err(Error::InvalidParam { name: "temperature", reason: "must be positive".into() });
        }
        if self.train_every == 0 || !(self.q_lr > 0.0) {
            return Err(Error::InvalidParam { name: "train_every/q_lr", reason: "must be positive".into() });
        }
        Ok(())
    }

    pub fn shape(&self, env: &EnvConfig) -> NetShape {
        let input = env.feature_dim();
        match &self.hidden {
            Some(hidden) => NetShape {
                input,
                hidden: hidden.clone(),
                n_actions: N_DELTAS,
                value_heads: N_OBJECTIVES,
                policy_head: false,
            },
            None => NetShape::two_layer_for_budget(input, N_DELTAS, N_OBJECTIVES, self.param_budget),
        }
    }
}

/// Samples from `softmax(values / temperature)`.
pub fn boltzmann<R: Rng>(values: &[f64], temperature: f64, rng: &mut R) -> usize {
    assert!(temperature > 0.0, "temperature must be positive");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    argmax(values.iter().copied())
}

/// Boltzmann action over `lambda^T Q(s, .)`, shared by every cell.
pub fn dqn_act<R: Rng>(net: &MultiHeadNet, lambda: &[f64], state: &[f64], temperature: f64, rng: &mut R) -> Result<EnvAction> {
    let out = net.forward_row(state)?.insert_axis(ndarray::Axis(0));
    let a = boltzmann(&net.scalarized(&out, 0, lambda), temperature, rng);
    Ok(EnvAction::Homogeneous(Delta::from_index(a)))
}

/// `argmax_a lambda^T Q(s, a)` with ties to the lowest index.
pub fn greedy_index(net: &MultiHeadNet, lambda: &[f64], state: &[f64]) -> Result<usize> {
    let out = net.forward_row(state)?.insert_axis(ndarray::Axis(0));
    Ok(argmax(net.scalarized(&out, 0, lambda)))
}

#[derive(Debug, Clone)]
pub struct DqnStep {
    pub loss: f64,
    pub indices: Vec<usize>,
    /// New priorities written for `indices`.
    pub priorities: Vec<f64>,
    /// Per-head value estimates that drove the multiplier update.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: MultiHeadNet,
    pub target: MultiHeadNet,
    opt: Adam,
    pub dual: DualVars,
    value_dual: bool,
    kappa: f64,
    gamma: f64,
}

impl DqnAgent {
    pub fn new<R: Rng>(cfg: &DqnConfig, env: &EnvConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let online = MultiHeadNet::new(cfg.shape(env), rng);
        let target = online.clone();
        let opt = Adam::new(
            AdamConfig { lr: cfg.q_lr, max_grad_norm: cfg.max_grad_norm, ..Default::default() },
            online.param_count(),
        );
        Ok(Self { online, target, opt, dual: cfg.dual.build()?, value_dual: cfg.dual.estimate == DualEstimate::Value, kappa: cfg.kappa, gamma: env.gamma })
    }

    pub fn lambda(&self) -> &[f64] {
        self.dual.lambda()
    }

    pub fn act<R: Rng>(&self, state: &[f64], temperature: f64, rng: &mut R) -> Result<EnvAction> {
        dqn_act(&self.online, self.dual.lambda(), state, temperature, rng)
    }

    /// One prioritized Double-DQN step, priority refresh, soft target update
    /// and multiplier update.
    pub fn train_step<R: Rng>(
        &mut self,
        buffer: &mut PrioritizedBuffer,
        batch_size: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<DqnStep> {
        let sample = buffer.sample(SampleView::Prioritized, batch_size, beta, rng)?;
        let batch = OwnedBatch::gather(buffer, &sample.indices, sample.weights);
        let td = td_loss_and_grad(&self.online, &self.target, &batch.view(), self.dual.lambda(), self.gamma)?;
        self.opt.step(self.online.params_mut(), &td.grad);
        let priorities: Vec<f64> = td
            .td_errors
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|e| e.abs()).sum::<f64>() + buffer.p_min())
            .collect();
        buffer.update_priorities(&sample.indices, &priorities);
        soft_update(&mut self.target, &self.online, self.kappa);
        if self.value_dual {
            self.dual.update(&td.state_values);
        }
        Ok(DqnStep { loss: td.loss, indices: sample.indices, priorities, values: td.state_values })
    }

    /// Greedy controller over a snapshot of the online net.
    pub fn policy(&self) -> DqnPolicy {
        DqnPolicy { net: self.online.clone(), lambda: self.dual.lambda().to_vec() }
    }

    pub fn checkpoint(&self, cells: usize) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("agent".into(), "dqn".into());
        ck.meta.insert("cells".into(), cells.to_string());
        ck.meta.insert("lambda".into(), format_floats(self.dual.lambda()));
        ck.nets.push(("online".into(), self.online.clone()));
        ck.nets.push(("target".into(), self.target.clone()));
        ck
    }
}

/// Transition columns gathered from the buffer in batch layout.
pub(crate) struct OwnedBatch {
    pub states: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Array2<f64>,
    pub next_states: Array2<f64>,
    pub terminal: Vec<bool>,
    pub weights: Vec<f64>,
}

impl OwnedBatch {
    /// Uses the first action entry; callers with per-cell actions read the buffer directly.
    pub fn gather(buffer: &PrioritizedBuffer, indices: &[usize], weights: Vec<f64>) -> Self {
        let first = buffer.get(indices[0]);
        let (d, h) = (first.state.len(), first.reward.len());
        let b = indices.len();
        let mut states = Array2::zeros((b, d));
        let mut next_states = Array2::zeros((b, d));
        let mut rewards = Array2::zeros((b, h));
        let mut actions = Vec::with_capacity(b);
        let mut terminal = Vec::with_capacity(b);
        for (row, &i) in indices.iter().enumerate() {
            let t = buffer.get(i);
            states.row_mut(row).assign(&ndarray::ArrayView1::from(&t.state));
            next_states.row_mut(row).assign(&ndarray::ArrayView1::from(&t.next_state));
            rewards.row_mut(row).assign(&ndarray::ArrayView1::from(&t.reward));
            actions.push(t.action[0]);
            terminal.push(t.terminal);
        }
        Self { states, actions, rewards, next_states, terminal, weights }
    }

    pub fn view(&self) -> TdBatch<'_> {
        TdBatch {
            states: self.states.view(),
            actions: &self.actions,
            rewards: self.rewards.view(),
            next_states: self.next_states.view(),
            terminal: &self.terminal,
            weights: &self.weights,
        }
    }
}

/// Greedy homogeneous controller.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub net: MultiHeadNet,
    pub lambda: Vec<f64>,
}

impl DqnPolicy {
    pub fn from_checkpoint(ck: &Checkpoint, env: &EnvConfig) -> Result<Self> {
        if ck.meta("agent")? != "dqn" {
            return Err(Error::Checkpoint(format!("expected a dqn checkpoint, found `{}`", ck.meta("agent")?)));
        }
        let net = ck.require_net("online")?.clone();
        let lambda = parse_floats(ck.meta("lambda")?)?;
        let s = net.shape();
        if s.input != env.feature_dim() || s.n_actions != N_DELTAS || s.value_heads != lambda.len() {
            return Err(Error::Checkpoint(format!(
                "net expects {} features and {} heads, environment has {} features",
                s.input,
                s.value_heads,
                env.feature_dim()
            )));
        }
        Ok(Self { net, lambda })
    }
}

impl Controller for DqnPolicy {
    fn act(&mut self, state: &EnvState, cfg: &EnvConfig) -> EnvAction {
        let x = features(state, &cfg.params);
        let a = greedy_index(&self.net, &self.lambda, &x).expect("feature width checked at load");
        EnvAction::Homogeneous(Delta::from_index(a))
    }
}
