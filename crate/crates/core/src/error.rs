use thiserror::Error;

/// Errors surfaced by the optimization lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite logits at context {context}")]
    NonFiniteLogits { context: String },

    #[error("prompt {prompt_id:#x} is not registered with the tabular policy")]
    UnknownPrompt { prompt_id: u64 },

    #[error("group size must be at least 2, got {got}")]
    GroupTooSmall { got: usize },

    #[error("ground-truth answer set is empty")]
    EmptyGroundTruth,

    #[error("prediction/truth length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("old-policy probability underflow at completion {completion}, position {position}")]
    OldProbUnderflow { completion: usize, position: usize },

    #[error("zero-probability denominator at position {position}")]
    ZeroDenominator { position: usize },

    #[error("rollout is missing {what}; compute it before objective evaluation")]
    RolloutIncomplete { what: &'static str },

    #[error("cannot invert record {id}: {reason}")]
    InvalidInversion { id: String, reason: String },

    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("corpus generation failed: {0}")]
    Generation(String),

    #[error("non-finite gradient at step {step} (prompt ids {prompt_ids:?})")]
    NonFiniteGradient { step: u64, prompt_ids: Vec<u64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
