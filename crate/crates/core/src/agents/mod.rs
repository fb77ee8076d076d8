//! Constrained deep agents: multi-head Double DQN with a homogeneous action,
//! and multi-head discrete SAC with an autoregressive per-cell actor. Both
//! learn one value head per objective and adapt the multipliers online.

mod config;
pub mod dqn;
pub mod policy;
pub mod replay;
pub mod sac;
mod train;

pub use config::{geometric_schedule, DualConfig, DualEstimate, ReplayConfig};
pub use dqn::{boltzmann, dqn_act, greedy_index, DqnAgent, DqnConfig, DqnPolicy, DqnStep};
pub use policy::{AdditiveConditioner, AutoregressivePolicy, Query, SequenceConditioner};
pub use replay::{PrioritizedBuffer, Sample, SampleView, SumTree, Transition};
pub use sac::{SacAgent, SacConfig, SacPolicy};
pub use train::{
    episode_seed, lint, load_controller, train, AgentConfig, MetricsRow, TrainConfig, TrainOutcome, TrainedAgent,
    METRICS_HEADER,
};

use crate::error::{Error, Result};

pub(crate) fn format_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

pub(crate) fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Checkpoint(format!("`{t}`: {e}"))))
        .collect()
}
