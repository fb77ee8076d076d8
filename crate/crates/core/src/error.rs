use thiserror::Error;

/// Errors produced by the simulator, the learners and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modulation order {0} is not one of the NR orders 2, 4, 6, 8")]
    InvalidModulation(u32),

    #[error("{what} must be at least 1, got {value}")]
    ZeroKnob { what: &'static str, value: u32 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value iteration did not converge within {iterations} sweeps (last residual {residual:e})")]
    IterationCap { iterations: usize, residual: f64 },

    #[error("replay buffer holds {len} transitions, need at least {needed}")]
    Underfilled { len: usize, needed: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("no compression config sustains {cells} cells at {prb} PRBs within the fronthaul capacity")]
    NoFeasibleReference { cells: usize, prb: u32 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
