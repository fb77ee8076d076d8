//! Experiment configuration, the static reference scheme, load-binned
//! evaluation and the tabular property suite.

mod config;
mod eval;
mod suite;

pub use config::{AgentSelection, ExperimentConfig};
pub use eval::{
    evaluate, evaluate_checkpoint, reference_controller, rollout_samples, run_reference, BinStats, EvalConfig,
    EvaluationReport, FixedController, SlotSample, ViolationEstimate, REPORT_HEADER,
};
pub use suite::{
    contraction_rate, decomposition_matches_scalar, oracle_suite, q_learning_error_curve, q_learning_monotone,
    q_learning_worked_example, worked_example, worked_example_fixed_point, PropertyOutcome,
};

/// Environment variable that supplies the run seed when no flag does.
pub const SEED_ENV: &str = "FHCOMP_SEED";
