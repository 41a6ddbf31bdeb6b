//! Group-relative advantage standardization.

use crate::error::{Error, Result};

/// Threshold below which a group is treated as degenerate (no learning
/// signal) instead of dividing by a vanishing standard deviation.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Population (divide-by-G) standard deviation.
pub fn group_reward_std(rewards: &[f64]) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Standardize group rewards: (R_i - mean) / std with the population std.
/// A degenerate group (std below `DEGENERATE_STD`) yields all zeros.
pub fn standardize(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::GroupTooSmall {
            got: rewards.len(),
        });
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = group_reward_std(rewards);
    if std < DEGENERATE_STD {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}
