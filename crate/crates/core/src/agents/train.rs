use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{features, Controller, Env, EnvAction, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::tabular::DualVars;

use super::config::{geometric_schedule, DualEstimate};
use super::dqn::{DqnAgent, DqnConfig, DqnPolicy};
use super::replay::{PrioritizedBuffer, Transition};
use super::sac::{SacAgent, SacConfig, SacPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentConfig {
    Dqn(DqnConfig),
    Sac(SacConfig),
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            AgentConfig::Dqn(c) => c.validate(),
            AgentConfig::Sac(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub env_steps: usize,
    /// Environment steps per metrics row.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { env_steps: 500_000, log_every: 1_000 }
    }
}

pub const METRICS_HEADER: [&str; 10] =
    ["iter", "V0", "V1", "V2", "lambda1", "lambda2", "mean_rho", "p_latency_violation", "p_loss", "temperature"];

/// One logging window. Values are averaged over the updates in the window,
/// rates over its environment steps; multipliers are read at its end.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub values: [f64; 3],
    pub lambda: [f64; 2],
    /// Aggregate link utilization `sum_k rho_k`.
    pub mean_rho: f64,
    pub p_latency_violation: f64,
    pub p_loss: f64,
    /// Boltzmann temperature (DQN) or entropy temperature (SAC).
    pub temperature: f64,
}

impl MetricsRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![self.iter.to_string()];
        r.extend(self.values.iter().map(|v| v.to_string()));
        r.extend(self.lambda.iter().map(|v| v.to_string()));
        for v in [self.mean_rho, self.p_latency_violation, self.p_loss, self.temperature] {
            r.push(v.to_string());
        }
        r
    }
}

#[derive(Debug, Clone)]
pub enum TrainedAgent {
    Dqn(DqnAgent),
    Sac(SacAgent),
}

impl TrainedAgent {
    pub fn lambda(&self) -> &[f64] {
        match self {
            TrainedAgent::Dqn(a) => a.lambda(),
            TrainedAgent::Sac(a) => a.lambda(),
        }
    }

    fn dual_mut(&mut self) -> &mut DualVars {
        match self {
            TrainedAgent::Dqn(a) => &mut a.dual,
            TrainedAgent::Sac(a) => &mut a.dual,
        }
    }

    pub fn checkpoint(&self, cells: usize) -> Checkpoint {
        match self {
            TrainedAgent::Dqn(a) => a.checkpoint(cells),
            TrainedAgent::Sac(a) => a.checkpoint(),
        }
    }

    /// Greedy (DQN) or mode (SAC) controller over a snapshot of the agent.
    pub fn controller(&self) -> Box<dyn Controller + Send> {
        match self {
            TrainedAgent::Dqn(a) => Box::new(a.policy()),
            TrainedAgent::Sac(a) => Box::new(a.policy_controller()),
        }
    }
}

/// Rebuilds the evaluation controller stored in a checkpoint.
pub fn load_controller(ck: &Checkpoint, env: &EnvConfig) -> Result<Box<dyn Controller + Send>> {
    match ck.meta("agent")? {
        "dqn" => Ok(Box::new(DqnPolicy::from_checkpoint(ck, env)?)),
        "sac" => Ok(Box::new(SacPolicy::from_checkpoint(ck, env)?)),
        other => Err(Error::Checkpoint(format!("unknown agent `{other}`"))),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: TrainedAgent,
    pub metrics: Vec<MetricsRow>,
    pub warnings: Vec<String>,
}

/// Seed of the `episode`-th environment reset of a run seeded with `seed`.
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    seed ^ (episode + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Configuration warnings that do not stop a run.
pub fn lint(agent: &AgentConfig) -> Vec<String> {
    let (beta, eta) = match agent {
        AgentConfig::Dqn(c) => (c.dual.lambda_lr, c.q_lr),
        AgentConfig::Sac(c) => (c.dual.lambda_lr, c.q_lr),
    };
    let mut out = Vec::new();
    if beta > eta / 10.0 {
        out.push(format!(
            "multiplier step {beta} is not an order of magnitude below the value step {eta}; the dual ascent may chase a moving inner solution"
        ));
    }
    out
}

#[derive(Default)]
struct Window {
    steps: usize,
    rho: f64,
    latency_bad: usize,
    lossy: usize,
    updates: usize,
    values: [f64; 3],
}

/// Runs `train.env_steps` environment steps, interleaving agent updates, and
/// writes one metrics row per `log_every` steps to `metrics` if given.
pub fn train(
    env_cfg: &EnvConfig,
    agent_cfg: &AgentConfig,
    train: &TrainConfig,
    seed: u64,
    metrics: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    env_cfg.validate()?;
    agent_cfg.validate()?;
    if train.log_every == 0 {
        return Err(Error::InvalidParam { name: "log_every", reason: "must be positive".into() });
    }
    let warnings = lint(agent_cfg);
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut writer = metrics.map(csv::Writer::from_writer);
    if let Some(w) = writer.as_mut() {
        w.write_record(METRICS_HEADER)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed_dual = match agent_cfg {
        AgentConfig::Dqn(c) => c.dual.estimate,
        AgentConfig::Sac(c) => c.dual.estimate,
    } == DualEstimate::Observed;
    let (mut agent, replay, train_every) = match agent_cfg {
        AgentConfig::Dqn(c) => (TrainedAgent::Dqn(DqnAgent::new(c, env_cfg, &mut rng)?), &c.replay, c.train_every),
        AgentConfig::Sac(c) => (TrainedAgent::Sac(SacAgent::new(c, env_cfg, &mut rng)?), &c.replay, c.train_every),
    };
    let mut buffer = PrioritizedBuffer::new(replay.capacity, replay.alpha, replay.p_min)?;
    let start_updates = replay.warmup.max(replay.batch_size);

    let mut episode = 0u64;
    let mut env = Env::new(env_cfg.clone(), episode_seed(seed, episode))?;
    let mut x = env.features();
    let mut rows = Vec::new();
    let mut win = Window::default();
    let total = train.env_steps.max(1) as f64;

    for step in 0..train.env_steps {
        let progress = step as f64 / total;
        let temperature = match (&agent, agent_cfg) {
            (TrainedAgent::Dqn(_), AgentConfig::Dqn(c)) => {
                geometric_schedule(c.temperature_start, c.temperature_end, progress, 0.5)
            }
            (TrainedAgent::Sac(a), _) => a.alpha(),
            _ => unreachable!("agent built from its config"),
        };
        let (action, stored) = match &agent {
            TrainedAgent::Dqn(a) => {
                let act = a.act(&x, temperature, &mut rng)?;
                let idx = match &act {
                    EnvAction::Homogeneous(d) => vec![d.index()],
                    EnvAction::PerCell(_) => unreachable!("dqn acts homogeneously"),
                };
                (act, idx)
            }
            TrainedAgent::Sac(a) => {
                let act = a.act(&x, &mut rng)?;
                let idx = match &act {
                    EnvAction::PerCell(ds) => ds.iter().map(|d| d.index()).collect(),
                    EnvAction::Homogeneous(_) => unreachable!("sac acts per cell"),
                };
                (act, idx)
            }
        };
        let out = env.step(&action);
        let next = features(&out.next_state, &env_cfg.params);
        buffer.push(Transition {
            state: std::mem::take(&mut x),
            action: stored,
            reward: out.reward.to_vec(),
            next_state: next.clone(),
            terminal: false,
        });
        win.steps += 1;
        win.rho += out.next_state.total_rho();
        win.latency_bad += usize::from(!out.latency_ok);
        win.lossy += usize::from(out.total_lost > 0);

        if observed_dual && buffer.len() >= start_updates {
            let safe = [0.0, f64::from(u8::from(out.latency_ok)), f64::from(u8::from(out.total_lost == 0))];
            agent.dual_mut().update(&safe);
        }
        if buffer.len() >= start_updates && step % train_every == 0 {
            let beta = replay.beta(progress);
            let values = match &mut agent {
                TrainedAgent::Dqn(a) => a.train_step(&mut buffer, replay.batch_size, beta, &mut rng)?.values,
                TrainedAgent::Sac(a) => a.iteration(&mut buffer, replay.batch_size, beta, &mut rng)?.values,
            };
            win.updates += 1;
            for (acc, v) in win.values.iter_mut().zip(&values) {
                *acc += v;
            }
        }

        if (step + 1) % env_cfg.episode_len == 0 {
            episode += 1;
            env.reset(episode_seed(seed, episode))?;
            x = env.features();
        } else {
            x = next;
        }

        if (step + 1) % train.log_every == 0 || step + 1 == train.env_steps {
            let lambda = agent.lambda();
            let n = win.steps as f64;
            let u = win.updates.max(1) as f64;
            let row = MetricsRow {
                iter: step + 1,
                values: win.values.map(|v| v / u),
                lambda: [lambda[1], lambda[2]],
                mean_rho: win.rho / n,
                p_latency_violation: win.latency_bad as f64 / n,
                p_loss: win.lossy as f64 / n,
                temperature,
            };
            if let Some(w) = writer.as_mut() {
                w.write_record(row.record())?;
            }
            log::debug!("{row:?}");
            rows.push(row);
            win = Window::default();
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    Ok(TrainOutcome { agent, metrics: rows, warnings })
}
