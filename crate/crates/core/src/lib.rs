//! Fronthaul compression control with constrained, multi-head reinforcement
//! learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`fh_model`]: bit accounting of user data and precoding weights.
//! - [`traffic`]: the per-cell scheduled-PRB process.
//! - [`env`]: the constrained environment with its shared switch queue.
//! - [`tabular`]: exact vector Bellman operator, decomposed value iteration,
//!   multi-objective Q-learning and the dual variables.
//! - [`nn`]: a multi-head MLP with hand-written backpropagation.
//! - [`agents`]: multi-head DQN and discrete SAC with prioritized replay.
//! - [`harness`]: configuration, baselines and evaluation.

pub mod agents;
pub mod env;
pub mod error;
pub mod fh_model;
pub mod harness;
pub mod nn;
pub mod tabular;
pub mod traffic;

pub use env::{Delta, Env, EnvAction, EnvConfig, EnvState, StepOutcome};
pub use error::{Error, Result};
pub use fh_model::{CellLoad, CompressionConfig, KnobSets, SystemParams};
pub use nn::MultiHeadNet;
pub use tabular::{DualVars, FiniteMdp, VectorQ};
pub use traffic::{TrafficBounds, TrafficState};
