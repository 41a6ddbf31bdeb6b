//! Intra-group token divergence D_t and the importance weights w_t.

use serde::{Deserialize, Serialize};

use crate::policy::TokenDistribution;
use crate::rollout::GroupRollout;

pub const DEFAULT_ALPHA: f64 = 0.7;

/// Degenerate spread threshold: below it all weights are 1.
const FLAT_D: f64 = 1e-12;

/// How the min-max-normalized divergence n_t maps to a weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// w_t = (1 + alpha) * n_t, the formula as published. Yields zero
    /// weight at D_min and nonuniform weights at alpha = 0.
    Scale,
    /// w_t = 1 + alpha * n_t. Keeps every weight nonzero and reduces to
    /// the unweighted objective at alpha = 0.
    #[default]
    Offset,
}

/// Which positions keep their computed weight; everything else gets 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionMask {
    /// No weighting anywhere (plain unweighted objective).
    None,
    /// Weight only positions at or beyond the shortest completion.
    PaddingOnly,
    /// Weight only positions present in every completion.
    ContentOnly,
    #[default]
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub alpha: f64,
    pub mode: WeightMode,
    pub position_mask: PositionMask,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            mode: WeightMode::default(),
            position_mask: PositionMask::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub d_values: Vec<f64>,
}

/// KL(p || q) with the 0 * log(0/q) = 0 convention, natural log.
pub fn kl_divergence(p: &TokenDistribution, q: &TokenDistribution) -> f64 {
    p.probs()
        .iter()
        .zip(q.probs())
        .map(|(pi, qi)| if *pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum()
}

/// Elementwise mean of the group's (uniform-filled) distributions at one
/// position.
pub fn expected_distribution(rows: &[&TokenDistribution]) -> TokenDistribution {
    assert!(!rows.is_empty());
    let v = rows[0].len();
    let mut mean = vec![0.0; v];
    for row in rows {
        for (m, p) in mean.iter_mut().zip(row.probs()) {
            *m += p;
        }
    }
    let g = rows.len() as f64;
    for m in mean.iter_mut() {
        *m /= g;
    }
    TokenDistribution::new(mean).expect("mean of distributions is a distribution")
}

/// D_t: sum over the group of KL(row || group mean) at one position.
pub fn divergence(rows: &[&TokenDistribution]) -> f64 {
    let mean = expected_distribution(rows);
    rows.iter().map(|r| kl_divergence(r, &mean)).sum()
}

/// D_t for every position of a rollout's padded grid.
pub fn d_values(rollout: &GroupRollout) -> Vec<f64> {
    (0..rollout.o_max)
        .map(|t| {
            let rows: Vec<&TokenDistribution> = rollout
                .padded_dists
                .iter()
                .map(|row| &row[t])
                .collect();
            divergence(&rows)
        })
        .collect()
}

/// Min-max-normalize D_t and map to weights per the config, then apply the
/// position mask. `content_boundary` is the shortest completion length.
pub fn weights(d: &[f64], config: &WeightConfig, content_boundary: usize) -> WeightVector {
    assert!(!d.is_empty());
    let d_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let d_max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = d_max - d_min;
    let mut w: Vec<f64> = d
        .iter()
        .map(|dt| {
            if spread < FLAT_D {
                return 1.0;
            }
            let n = (dt - d_min) / spread;
            match config.mode {
                WeightMode::Scale => (1.0 + config.alpha) * n,
                WeightMode::Offset => 1.0 + config.alpha * n,
            }
        })
        .collect();
    for (t, wt) in w.iter_mut().enumerate() {
        let masked_out = match config.position_mask {
            PositionMask::None => true,
            PositionMask::PaddingOnly => t < content_boundary,
            PositionMask::ContentOnly => t >= content_boundary,
            PositionMask::All => false,
        };
        if masked_out {
            *wt = 1.0;
        }
    }
    WeightVector {
        weights: w,
        d_values: d.to_vec(),
    }
}
