//! Group rollouts: G completions per prompt from the frozen old policy,
//! plus the uniform-filled per-position distribution grid.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::{Completion, PolicyParams, PromptEncoding, TokenDistribution};
use crate::rng;
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRollout {
    pub prompt: PromptEncoding,
    pub completions: Vec<Completion>,
    /// Sampling temperature; live-policy probabilities and KL terms are
    /// evaluated at the same temperature so that live = old gives ratio 1.
    pub temperature: f64,
    pub vocab_size: usize,
    pub o_max: usize,
    /// G x o_max grid; positions at or beyond a completion's length hold
    /// the uniform distribution.
    pub padded_dists: Vec<Vec<TokenDistribution>>,
    pub rewards: Option<Vec<f64>>,
    pub advantages: Option<Vec<f64>>,
    pub token_weights: Option<Vec<f64>>,
}

impl GroupRollout {
    pub fn group_size(&self) -> usize {
        self.completions.len()
    }

    /// Shortest completion length: the boundary between content positions
    /// (present in every completion) and positions involving padding.
    pub fn content_boundary(&self) -> usize {
        self.completions.iter().map(|c| c.len()).min().unwrap_or(0)
    }

    pub fn set_rewards(&mut self, rewards: Vec<f64>) {
        assert_eq!(rewards.len(), self.group_size());
        self.rewards = Some(rewards);
    }

    pub fn set_advantages(&mut self, advantages: Vec<f64>) {
        assert_eq!(advantages.len(), self.group_size());
        self.advantages = Some(advantages);
    }

    pub fn set_token_weights(&mut self, weights: Vec<f64>) {
        assert_eq!(weights.len(), self.o_max);
        self.token_weights = Some(weights);
    }

    /// Prefix of completion `i` before position `t`.
    pub fn prefix(&self, i: usize, t: usize) -> &[TokenId] {
        &self.completions[i].token_ids[..t]
    }

    /// Per-position empirical chosen-token probability under the old policy
    /// and under `live`, averaged over the group with uniform-fill (1/V)
    /// contributions at padded positions.
    pub fn empirical_distributions(&self, live: &PolicyParams) -> Result<Vec<(f64, f64)>> {
        let g = self.group_size() as f64;
        let fill = 1.0 / self.vocab_size as f64;
        let mut out = Vec::with_capacity(self.o_max);
        for t in 0..self.o_max {
            let mut old_sum = 0.0;
            let mut live_sum = 0.0;
            for (i, c) in self.completions.iter().enumerate() {
                if t < c.len() {
                    old_sum += c.per_position_dists[t].prob(c.token_ids[t]);
                    let dist = live.distribution_with_temperature(
                        &self.prompt,
                        self.prefix(i, t),
                        self.temperature,
                    )?;
                    live_sum += dist.prob(c.token_ids[t]);
                } else {
                    old_sum += fill;
                    live_sum += fill;
                }
            }
            out.push((old_sum / g, live_sum / g));
        }
        Ok(out)
    }

    /// Per-position diagnostic for the empirical-denominator approximation:
    /// max over completions of |r_exact - pi_live / pi_emp_old|.
    pub fn approximation_gap(&self, live: &PolicyParams) -> Result<Vec<f64>> {
        let emp = self.empirical_distributions(live)?;
        let mut out = Vec::with_capacity(self.o_max);
        for t in 0..self.o_max {
            let (emp_old, _) = emp[t];
            let mut gap = 0.0f64;
            for (i, c) in self.completions.iter().enumerate() {
                if t >= c.len() {
                    continue;
                }
                let old_p = c.per_position_dists[t].prob(c.token_ids[t]);
                if old_p < 1e-300 || emp_old < 1e-300 {
                    return Err(Error::ZeroDenominator { position: t });
                }
                let live_p = live
                    .distribution_with_temperature(
                        &self.prompt,
                        self.prefix(i, t),
                        self.temperature,
                    )?
                    .prob(c.token_ids[t]);
                let exact = live_p / old_p;
                let approx = live_p / emp_old;
                gap = gap.max((exact - approx).abs());
            }
            out.push(gap);
        }
        Ok(out)
    }
}

/// Sample G completions from the old-policy snapshot. Each completion uses
/// its own substream derived from (seed, completion index), so parallel and
/// serial generation agree bit-exactly.
pub fn rollout_group(
    old_params: &PolicyParams,
    prompt: &PromptEncoding,
    group_size: usize,
    temperature: f64,
    max_len: usize,
    eos: TokenId,
    seed: u64,
) -> Result<GroupRollout> {
    if group_size < 2 {
        return Err(Error::GroupTooSmall { got: group_size });
    }
    let mut completions = Vec::with_capacity(group_size);
    for i in 0..group_size {
        let mut rng = rng::stream(&[seed, 0x726f6c, i as u64]);
        completions.push(old_params.sample_completion(
            prompt,
            temperature,
            max_len,
            eos,
            &mut rng,
        )?);
    }
    let o_max = completions.iter().map(|c| c.len()).max().unwrap();
    let v = old_params.vocab_size();
    let padded_dists = completions
        .iter()
        .map(|c| {
            (0..o_max)
                .map(|t| {
                    if t < c.len() {
                        c.per_position_dists[t].clone()
                    } else {
                        TokenDistribution::uniform(v)
                    }
                })
                .collect()
        })
        .collect();
    Ok(GroupRollout {
        prompt: prompt.clone(),
        completions,
        temperature,
        vocab_size: v,
        o_max,
        padded_dists,
        rewards: None,
        advantages: None,
        token_weights: None,
    })
}

#[derive(Serialize)]
struct DumpRecord<'a> {
    completion: usize,
    token_ids: &'a [TokenId],
    length: usize,
    old_logprobs: &'a [f64],
    reward: Option<f64>,
}

/// Debug dump: one line-delimited record per completion.
pub fn dump_rollout(rollout: &GroupRollout, path: &Path) -> Result<()> {
    let mut f = std::fs::File::options().create(true).append(true).open(path)?;
    for (i, c) in rollout.completions.iter().enumerate() {
        let rec = DumpRecord {
            completion: i,
            token_ids: &c.token_ids,
            length: c.len(),
            old_logprobs: &c.old_logprobs,
            reward: rollout.rewards.as_ref().map(|r| r[i]),
        };
        writeln!(f, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}
