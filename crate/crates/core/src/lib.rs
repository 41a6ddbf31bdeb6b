//! Desk-scale policy-optimization laboratory: group-relative policy
//! optimization with token-importance weighting and multi-answer soft
//! rewards, on a synthetic multi-choice QA task with a tabular-softmax
//! autoregressive policy. Everything is seeded and exactly reproducible.

pub mod advantage;
pub mod env;
pub mod error;
pub mod metrics;
pub mod objectives;
pub mod policy;
pub mod qai;
pub mod rewards;
pub mod rng;
pub mod rollout;
pub mod run;
pub mod sweep;
pub mod trainer;
pub mod vocab;
pub mod weighting;

pub use error::{Error, Result};
