//! Multi-head discrete SAC with an autoregressive per-cell actor.
//!
//! The critic scores one cell at a time: its input is the state, the actions
//! of every other cell and the cell's position, and its output holds one value
//! per objective and own action. The actor is pulled toward
//! `softmax(lambda^T Q / alpha)` factor by factor, and `alpha` tracks an
//! entropy target.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{features, Controller, Delta, EnvAction, EnvConfig, EnvState, N_DELTAS, N_OBJECTIVES};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{soft_update, weighted_regression, Adam, AdamConfig, MultiHeadNet, NetShape, RegressionTarget};
use crate::tabular::DualVars;

use super::config::{DualConfig, DualEstimate, ReplayConfig};
use super::dqn::DEFAULT_PARAM_BUDGET;
use super::policy::{context_width, encode_context, AdditiveConditioner, AutoregressivePolicy, Query, SequenceConditioner};
use super::replay::{PrioritizedBuffer, Sample, SampleView};
use super::{format_floats, parse_floats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    /// Critic hidden widths; when absent, two equal layers sized to `param_budget`.
    pub critic_hidden: Option<Vec<usize>>,
    /// Actor hidden widths; when absent, two equal layers sized to `param_budget`.
    pub policy_hidden: Option<Vec<usize>>,
    pub param_budget: usize,
    pub q_lr: f64,
    pub policy_lr: f64,
    pub kappa: f64,
    /// Entropy target per factor as a fraction of `ln 27`.
    pub entropy_fraction: f64,
    pub alpha_init: f64,
    /// Step size on `ln alpha`.
    pub alpha_lr: f64,
    pub train_every: usize,
    /// Apply the multiplier update that sits between the inverse and uniform phases.
    pub first_dual_update: bool,
    pub max_grad_norm: Option<f64>,
    pub replay: ReplayConfig,
    pub dual: DualConfig,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            critic_hidden: None,
            policy_hidden: None,
            param_budget: DEFAULT_PARAM_BUDGET,
            q_lr: 1e-3,
            policy_lr: 1e-4,
            kappa: 5e-3,
            entropy_fraction: 0.2,
            alpha_init: 1.0,
            alpha_lr: 1e-3,
            train_every: 1,
            first_dual_update: true,
            max_grad_norm: Some(10.0),
            replay: ReplayConfig::default(),
            dual: DualConfig::default(),
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        self.replay.validate()?;
        self.dual.build()?;
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidParam { name: "kappa", reason: format!("{} not in [0, 1]", self.kappa) });
        }
        if !(self.alpha_init > 0.0 && self.q_lr > 0.0 && self.policy_lr > 0.0 && self.alpha_lr >= 0.0) {
            return Err(Error::InvalidParam { name: "sac rates", reason: "must be positive".into() });
        }
        if !(0.0..=1.0).contains(&self.entropy_fraction) || self.train_every == 0 {
            return Err(Error::InvalidParam { name: "entropy_fraction/train_every", reason: "out of range".into() });
        }
        Ok(())
    }

    pub fn entropy_target(&self) -> f64 {
        self.entropy_fraction * (N_DELTAS as f64).ln()
    }

    pub fn critic_shape(&self, env: &EnvConfig) -> NetShape {
        let input = context_width(env.feature_dim(), env.params.k_cells);
        match &self.critic_hidden {
            Some(h) => {
                NetShape { input, hidden: h.clone(), n_actions: N_DELTAS, value_heads: N_OBJECTIVES, policy_head: false }
            }
            None => NetShape::two_layer_for_budget(input, N_DELTAS, N_OBJECTIVES, self.param_budget),
        }
    }

    pub fn policy_hidden(&self, env: &EnvConfig) -> Vec<usize> {
        match &self.policy_hidden {
            Some(h) => h.clone(),
            None => {
                let input = context_width(env.feature_dim(), env.params.k_cells);
                NetShape::two_layer_for_budget(input, N_DELTAS, 0, self.param_budget).hidden
            }
        }
    }
}

/// Critic rows `[s, a_j for j != k, k]` for every transition and cell.
fn critic_rows(states: &[&[f64]], actions: &[Vec<usize>], cells: usize) -> Array2<f64> {
    let d = states[0].len();
    let mut x = Array2::zeros((states.len() * cells, context_width(d, cells)));
    for (b, (s, a)) in states.iter().zip(actions).enumerate() {
        for k in 0..cells {
            let mut row = x.row_mut(b * cells + k);
            encode_context(s, a, cells, k, |j| j != k, row.as_slice_mut().expect("standard layout"));
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct CriticStep {
    pub loss: f64,
    pub priorities: Vec<f64>,
    /// Batch mean of `E_{a ~ pi} Q_i(s', a)` per head, from the target critic.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ActorStep {
    pub kl: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SacIteration {
    pub critic_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub critic: MultiHeadNet,
    pub critic_target: MultiHeadNet,
    pub policy: AutoregressivePolicy,
    critic_opt: Adam,
    policy_opt: Adam,
    pub dual: DualVars,
    pub log_alpha: f64,
    cfg: SacConfig,
    gamma: f64,
    cells: usize,
}

impl SacAgent {
    pub fn new<R: Rng>(cfg: &SacConfig, env: &EnvConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let cells = env.params.k_cells;
        let critic = MultiHeadNet::new(cfg.critic_shape(env), rng);
        let policy = AutoregressivePolicy::new(AdditiveConditioner::new(env.feature_dim(), cells, cfg.policy_hidden(env), rng));
        let adam = |lr, n| Adam::new(AdamConfig { lr, max_grad_norm: cfg.max_grad_norm, ..Default::default() }, n);
        Ok(Self {
            critic_target: critic.clone(),
            critic_opt: adam(cfg.q_lr, critic.param_count()),
            policy_opt: adam(cfg.policy_lr, policy.conditioner.net().param_count()),
            critic,
            policy,
            dual: cfg.dual.build()?,
            log_alpha: cfg.alpha_init.ln(),
            cfg: cfg.clone(),
            gamma: env.gamma,
            cells,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn lambda(&self) -> &[f64] {
        self.dual.lambda()
    }

    pub fn act<R: Rng>(&self, state: &[f64], rng: &mut R) -> Result<EnvAction> {
        let a = self.policy.sample(state, rng)?;
        Ok(EnvAction::PerCell(a.into_iter().map(Delta::from_index).collect()))
    }

    /// Critic regression toward `r + gamma E_{a' ~ pi(s')} Q_target(s', a')`.
    ///
    /// The first `K - 1` next actions are sampled from the actor; the last
    /// factor is averaged exactly under its conditional distribution.
    pub fn critic_step<R: Rng>(&mut self, buffer: &PrioritizedBuffer, sample: &Sample, rng: &mut R) -> Result<CriticStep> {
        let k = self.cells;
        let items: Vec<_> = sample.indices.iter().map(|&i| buffer.get(i)).collect();
        let b = items.len();
        let next = Array2::from_shape_fn((b, items[0].next_state.len()), |(r, c)| items[r].next_state[c]);
        let (prefixes, last) = self.policy.sample_prefixes(next.view(), k - 1, rng)?;
        let last = last.expect("prefix shorter than the cell count");

        let next_rows: Vec<&[f64]> = items.iter().map(|t| t.next_state.as_slice()).collect();
        let width = context_width(next.ncols(), k);
        let mut tx = Array2::zeros((b, width));
        for (r, mut row) in tx.rows_mut().into_iter().enumerate() {
            let mut full = prefixes[r].clone();
            full.push(0);
            encode_context(next_rows[r], &full, k, k - 1, |j| j != k - 1, row.as_slice_mut().expect("standard layout"));
        }
        let tq = self.critic_target.forward(tx.view())?;
        let mut y = Array2::zeros((b, N_OBJECTIVES));
        let mut values = vec![0.0; N_OBJECTIVES];
        for r in 0..b {
            for i in 0..N_OBJECTIVES {
                let v: f64 = (0..N_DELTAS).map(|a| last[r][a] * tq[[r, self.critic_target.value_col(i, a)]]).sum();
                values[i] += v / b as f64;
                let boot = if items[r].terminal { 0.0 } else { self.gamma * v };
                y[[r, i]] = items[r].reward[i] + boot;
            }
        }

        let states: Vec<&[f64]> = items.iter().map(|t| t.state.as_slice()).collect();
        let actions: Vec<Vec<usize>> = items.iter().map(|t| t.action.clone()).collect();
        let x = critic_rows(&states, &actions, k);
        let current = self.critic.forward(x.view())?;
        let mut terms = Vec::with_capacity(b * k * N_OBJECTIVES);
        let mut priorities = vec![buffer.p_min(); b];
        for r in 0..b {
            for cell in 0..k {
                let row = r * k + cell;
                for i in 0..N_OBJECTIVES {
                    let col = self.critic.value_col(i, actions[r][cell]);
                    priorities[r] += (y[[r, i]] - current[[row, col]]).abs() / k as f64;
                    terms.push(RegressionTarget { row, col, target: y[[r, i]], weight: sample.weights[r] });
                }
            }
        }
        let (loss, grad) = weighted_regression(&self.critic, x.view(), &terms)?;
        self.critic_opt.step(self.critic.params_mut(), &grad);
        Ok(CriticStep { loss, priorities, values })
    }

    /// One KL step of every factor along prefixes sampled from the actor,
    /// then one step on `ln alpha` toward the entropy target.
    pub fn actor_step<R: Rng>(&mut self, buffer: &PrioritizedBuffer, indices: &[usize], rng: &mut R) -> Result<ActorStep> {
        let k = self.cells;
        let states: Vec<&[f64]> = indices.iter().map(|&i| buffer.get(i).state.as_slice()).collect();
        let s = Array2::from_shape_fn((states.len(), states[0].len()), |(r, c)| states[r][c]);
        let (joint, _) = self.policy.sample_prefixes(s.view(), k, rng)?;
        let x = critic_rows(&states, &joint, k);
        let q = self.critic.forward(x.view())?;
        let lambda = self.dual.lambda();
        let scores = Array2::from_shape_fn((x.nrows(), N_DELTAS), |(row, a)| {
            (0..N_OBJECTIVES).map(|i| lambda[i] * q[[row, self.critic.value_col(i, a)]]).sum()
        });
        let queries: Vec<Query<'_>> = states
            .iter()
            .zip(&joint)
            .flat_map(|(st, a)| (0..k).map(move |cell| Query { state: st, prefix: &a[..cell] }))
            .collect();
        let step = self.policy.kl_gradient(&queries, scores.view(), self.alpha())?;
        self.policy_opt.step(self.policy.conditioner.params_mut(), &step.grad);
        self.log_alpha -= self.cfg.alpha_lr * (step.entropy - self.cfg.entropy_target());
        Ok(ActorStep { kl: step.kl, entropy: step.entropy })
    }

    /// The training loop body: prioritized critic step; inverse-prioritized
    /// critic and actor steps and an optional multiplier update; uniform
    /// critic and actor steps; soft target update; multiplier update.
    pub fn iteration<R: Rng>(
        &mut self,
        buffer: &mut PrioritizedBuffer,
        batch_size: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SacIteration> {
        let s = buffer.sample(SampleView::Prioritized, batch_size, beta, rng)?;
        let c = self.critic_step(buffer, &s, rng)?;
        buffer.update_priorities(&s.indices, &c.priorities);

        let s = buffer.sample(SampleView::Inverse, batch_size, beta, rng)?;
        let c = self.critic_step(buffer, &s, rng)?;
        let a1 = self.actor_step(buffer, &s.indices, rng)?;
        let value_dual = self.cfg.dual.estimate == DualEstimate::Value;
        if value_dual && self.cfg.first_dual_update {
            self.dual.update(&c.values);
        }
        buffer.update_priorities(&s.indices, &c.priorities);

        let s = buffer.sample(SampleView::Uniform, batch_size, beta, rng)?;
        let c = self.critic_step(buffer, &s, rng)?;
        let a2 = self.actor_step(buffer, &s.indices, rng)?;
        buffer.update_priorities(&s.indices, &c.priorities);

        if self.cfg.kappa > 0.0 {
            soft_update(&mut self.critic_target, &self.critic, self.cfg.kappa);
        }
        if value_dual {
            self.dual.update(&c.values);
        }
        Ok(SacIteration {
            critic_loss: c.loss,
            kl: 0.5 * (a1.kl + a2.kl),
            entropy: 0.5 * (a1.entropy + a2.entropy),
            values: c.values,
        })
    }

    pub fn policy_controller(&self) -> SacPolicy {
        SacPolicy { policy: self.policy.clone() }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("agent".into(), "sac".into());
        ck.meta.insert("cells".into(), self.cells.to_string());
        ck.meta.insert("lambda".into(), format_floats(self.dual.lambda()));
        ck.meta.insert("alpha".into(), format_floats(&[self.alpha()]));
        ck.nets.push(("policy".into(), self.policy.conditioner.net().clone()));
        ck.nets.push(("critic".into(), self.critic.clone()));
        ck.nets.push(("critic_target".into(), self.critic_target.clone()));
        ck
    }
}

/// Mode of the autoregressive actor, one delta per cell.
#[derive(Debug, Clone)]
pub struct SacPolicy {
    pub policy: AutoregressivePolicy,
}

impl SacPolicy {
    pub fn from_checkpoint(ck: &Checkpoint, env: &EnvConfig) -> Result<Self> {
        if ck.meta("agent")? != "sac" {
            return Err(Error::Checkpoint(format!("expected a sac checkpoint, found `{}`", ck.meta("agent")?)));
        }
        let net = ck.require_net("policy")?.clone();
        let conditioner = AdditiveConditioner::from_net(net, env.feature_dim(), env.params.k_cells)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        parse_floats(ck.meta("lambda")?)?;
        Ok(Self { policy: AutoregressivePolicy::new(conditioner) })
    }
}

impl Controller for SacPolicy {
    fn act(&mut self, state: &EnvState, cfg: &EnvConfig) -> EnvAction {
        let x = features(state, &cfg.params);
        let a = self.policy.mode(&x).expect("feature width checked at load");
        EnvAction::PerCell(a.into_iter().map(Delta::from_index).collect())
    }
}

/// `lambda^T Q` of one cell's actions given everything else, for inspection.
pub fn cell_scores(critic: &MultiHeadNet, lambda: &[f64], state: &[f64], joint: &[usize], cell: usize) -> Result<Vec<f64>> {
    let k = joint.len();
    let mut x = vec![0.0; context_width(state.len(), k)];
    encode_context(state, joint, k, cell, |j| j != cell, &mut x);
    let out = critic.forward_row(&x)?.insert_axis(ndarray::Axis(0));
    Ok(critic.scalarized(&out, 0, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::replay::Transition;
    use crate::env::FEATURES_PER_CELL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SacConfig {
        SacConfig { critic_hidden: Some(vec![16, 16]), policy_hidden: Some(vec![16, 16]), ..Default::default() }
    }

    fn buffer(rng: &mut ChaCha8Rng, n: usize, cells: usize, constraint_reward: f64) -> PrioritizedBuffer {
        let mut buf = PrioritizedBuffer::new(1024, 0.6, 1e-6).unwrap();
        for _ in 0..n {
            buf.push(Transition {
                state: (0..FEATURES_PER_CELL * cells).map(|_| rng.random()).collect(),
                action: (0..cells).map(|_| rng.random_range(0..27)).collect(),
                reward: vec![rng.random(), constraint_reward, constraint_reward],
                next_state: (0..FEATURES_PER_CELL * cells).map(|_| rng.random()).collect(),
                terminal: false,
            });
        }
        buf
    }

    #[test]
    fn frozen_targets_with_zero_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = EnvConfig::default();
        let mut agent = SacAgent::new(&SacConfig { kappa: 0.0, ..small() }, &env, &mut rng).unwrap();
        let mut buf = buffer(&mut rng, 200, 3, 0.05);
        let before = agent.critic_target.clone();
        for _ in 0..5 {
            agent.iteration(&mut buf, 16, 0.4, &mut rng).unwrap();
        }
        assert_eq!(agent.critic_target, before);
        assert_ne!(agent.critic, before);
    }

    #[test]
    fn iteration_touches_only_learned_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let env = EnvConfig::default();
        let mut agent = SacAgent::new(&small(), &env, &mut rng).unwrap();
        let mut buf = buffer(&mut rng, 200, 3, 0.0);
        let before = agent.clone();
        let items: Vec<Transition> = (0..buf.len()).map(|i| buf.get(i).clone()).collect();
        let prio: Vec<f64> = (0..buf.len()).map(|i| buf.priority(i)).collect();
        agent.iteration(&mut buf, 16, 0.4, &mut rng).unwrap();
        assert_ne!(agent.critic, before.critic);
        assert_ne!(agent.critic_target, before.critic_target);
        assert_ne!(agent.policy, before.policy);
        assert_ne!(agent.dual, before.dual);
        assert_eq!(agent.cells, before.cells);
        assert_eq!(agent.gamma, before.gamma);
        assert_eq!(agent.cfg, before.cfg);
        let after: Vec<f64> = (0..buf.len()).map(|i| buf.priority(i)).collect();
        assert_ne!(after, prio);
        for (i, t) in items.iter().enumerate() {
            assert_eq!(buf.get(i), t);
        }
    }

    #[test]
    fn unsatisfiable_constraint_drives_multiplier_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = EnvConfig::default();
        let cfg = SacConfig { dual: DualConfig { lambda_lr: 1e-2, estimate: DualEstimate::Value, lambda_init: vec![0.0, 0.0], ..Default::default() }, ..small() };
        let mut agent = SacAgent::new(&cfg, &env, &mut rng).unwrap();
        let mut buf = buffer(&mut rng, 300, 3, 0.0);
        let mut last = agent.lambda().to_vec();
        for _ in 0..100 {
            agent.iteration(&mut buf, 16, 0.4, &mut rng).unwrap();
            let now = agent.lambda().to_vec();
            assert!(now[1] >= last[1] && now[2] >= last[2], "{last:?} -> {now:?}");
            last = now;
        }
        assert!(last[1] > 1.0 && last[2] > 1.0, "{last:?}");
    }

    #[test]
    fn checkpoint_round_trip_keeps_the_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let env = EnvConfig::default();
        let agent = SacAgent::new(&small(), &env, &mut rng).unwrap();
        let mut bytes = Vec::new();
        agent.checkpoint().write_to(&mut bytes).unwrap();
        let ck = Checkpoint::read_from(bytes.as_slice()).unwrap();
        let restored = SacPolicy::from_checkpoint(&ck, &env).unwrap();
        let x: Vec<f64> = (0..21).map(|i| i as f64 * 0.05).collect();
        assert_eq!(restored.policy.mode(&x).unwrap(), agent.policy.mode(&x).unwrap());
    }
}
