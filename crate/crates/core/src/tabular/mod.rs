//! Exact small-scale constrained-MDP machinery.
//!
//! A vector-valued Bellman operator bootstraps every objective on the action
//! that is greedy for the scalarization `lambda^T Q`. Its fixed point
//! scalarizes to the optimal value of the weighted reward, so per-objective
//! values can be learned separately without changing the greedy policy.

mod bellman;
mod dual;
mod mdp;
pub mod oracle;
mod qlearning;

pub use bellman::{argmax, bellman_lambda, decomposed_value_iteration, DecomposedSolution, VectorQ};
pub use dual::DualVars;
pub use mdp::FiniteMdp;
pub use qlearning::{multiobjective_q_learning, QLearningConfig, TransitionSampler};
