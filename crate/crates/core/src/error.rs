use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid alphabet size {0}: must be a power of two of at least 2")]
    InvalidAlphabetSize(usize),

    #[error("SQAM requires an alphabet size divisible by 4, got {0}")]
    SqamSize(usize),

    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),

    #[error("transmit filter has zero energy")]
    ZeroEnergy,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("block length {n} is not divisible by {stages} SIC stages")]
    NotDivisible { n: usize, stages: usize },

    #[error("invalid SIC stage {stage} of {stages}")]
    InvalidStage { stage: usize, stages: usize },

    #[error("state space of {states} states exceeds the configured cap of {cap}")]
    Infeasible { states: f64, cap: usize },

    #[error("enumeration over {0} candidate sequences is too large")]
    TooLarge(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at iteration {0}: loss is not finite")]
    Diverged(usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
