//! The three surrogate objectives and their exact parameter gradients:
//! clipped GRPO with a KL penalty, the token-normalized KL-free variant
//! (GRPO'), and the token-weighted variant (TW-GRPO).
//!
//! All objectives are maximized. Gradients are exact up to the usual
//! subgradient convention at clip boundaries: the branch selected by the
//! min contributes its derivative, a saturated clip contributes zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{ParamGrad, PolicyParams};
use crate::rollout::GroupRollout;
use crate::weighting::WeightConfig;

pub const DEFAULT_CLIP_EPS: f64 = 0.2;
pub const DEFAULT_KL_BETA: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Grpo,
    GrpoPrime,
    #[default]
    TwGrpo,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grpo" => Ok(Variant::Grpo),
            "grpo_prime" | "grpo-prime" => Ok(Variant::GrpoPrime),
            "tw_grpo" | "tw-grpo" => Ok(Variant::TwGrpo),
            other => Err(Error::Config(format!(
                "unknown objective {other:?}; expected one of grpo, grpo_prime, tw_grpo"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub variant: Variant,
    pub clip_eps: f64,
    /// KL penalty coefficient; only the plain GRPO objective uses it.
    pub kl_beta: f64,
    pub weight_config: WeightConfig,
    /// Sensitivity variant: apply w_t to the clipped branch too. The
    /// published objective weights only the unclipped branch.
    pub weight_both_branches: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            variant: Variant::default(),
            clip_eps: DEFAULT_CLIP_EPS,
            kl_beta: DEFAULT_KL_BETA,
            weight_config: WeightConfig::default(),
            weight_both_branches: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_eps <= 0.0 {
            return Err(Error::Config("clip_eps must be positive".into()));
        }
        if self.kl_beta < 0.0 {
            return Err(Error::Config("kl_beta must be nonnegative".into()));
        }
        if self.weight_config.alpha < 0.0 {
            return Err(Error::Config("alpha must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateResult {
    pub value: f64,
    pub gradient: ParamGrad,
    /// G x o_max diagnostic grid; padded positions are exactly zero.
    pub per_token_terms: Vec<Vec<f64>>,
}

/// Exact importance ratio pi_live / pi_old for one sampled token, using
/// the stored old-policy log-prob in the denominator.
pub fn importance_ratio(
    live: &PolicyParams,
    rollout: &GroupRollout,
    i: usize,
    t: usize,
) -> Result<f64> {
    let c = &rollout.completions[i];
    assert!(t < c.len(), "position {t} beyond completion length");
    let old_p = c.old_logprobs[t].exp();
    if old_p < 1e-300 {
        return Err(Error::OldProbUnderflow {
            completion: i,
            position: t,
        });
    }
    let live_p = live
        .distribution_with_temperature(&rollout.prompt, rollout.prefix(i, t), rollout.temperature)?
        .prob(c.token_ids[t]);
    Ok(live_p / old_p)
}

enum Norm {
    /// 1 / (G * |o_i|): average per completion, then over the group.
    PerCompletion,
    /// 1 / sum_i |o_i| token-level normalization.
    TotalTokens,
}

fn eval_core(
    live: &PolicyParams,
    reference: Option<&PolicyParams>,
    rollout: &GroupRollout,
    cfg: &ObjectiveConfig,
    weights: Option<&[f64]>,
    norm: Norm,
) -> Result<SurrogateResult> {
    cfg.validate()?;
    let advantages = rollout
        .advantages
        .as_ref()
        .ok_or(Error::RolloutIncomplete {
            what: "advantages",
        })?;
    let g = rollout.group_size();
    let total_tokens: usize = rollout.completions.iter().map(|c| c.len()).sum();
    let tau = rollout.temperature;
    let beta = cfg.kl_beta;

    let mut value = 0.0;
    let mut gradient = ParamGrad::new();
    let mut per_token_terms = vec![vec![0.0; rollout.o_max]; g];

    for (i, c) in rollout.completions.iter().enumerate() {
        let adv = advantages[i];
        let coeff = match norm {
            Norm::PerCompletion => 1.0 / (g as f64 * c.len() as f64),
            Norm::TotalTokens => 1.0 / total_tokens as f64,
        };
        for t in 0..c.len() {
            let tok = c.token_ids[t];
            let prefix = rollout.prefix(i, t);
            let live_dist = live.distribution_with_temperature(&rollout.prompt, prefix, tau)?;
            let old_p = c.old_logprobs[t].exp();
            if old_p < 1e-300 {
                return Err(Error::OldProbUnderflow {
                    completion: i,
                    position: t,
                });
            }
            let ratio = live_dist.prob(tok) / old_p;
            let w = weights.map(|w| w[t]).unwrap_or(1.0);
            let clipped_ratio = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            let w_clip = if cfg.weight_both_branches { w } else { 1.0 };
            let unclipped = w * ratio * adv;
            let clipped = w_clip * clipped_ratio * adv;
            let (term, dterm_dratio) = if unclipped <= clipped {
                (unclipped, w * adv)
            } else if (1.0 - cfg.clip_eps..=1.0 + cfg.clip_eps).contains(&ratio) {
                (clipped, w_clip * adv)
            } else {
                (clipped, 0.0)
            };
            let mut summand = term;
            if dterm_dratio != 0.0 {
                let glp =
                    live.grad_logprob_with_temperature(&rollout.prompt, prefix, tok, tau)?;
                // d ratio / d theta = ratio * grad log pi
                gradient.add_scaled(&glp, coeff * dterm_dratio * ratio);
            }
            if let Some(reference) = reference {
                if beta > 0.0 {
                    let ref_dist = reference.distribution_with_temperature(
                        &rollout.prompt,
                        prefix,
                        tau,
                    )?;
                    let p = live_dist.probs();
                    let q = ref_dist.probs();
                    let kl: f64 = p
                        .iter()
                        .zip(q)
                        .map(|(pi, qi)| if *pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
                        .sum();
                    summand -= beta * kl;
                    // dKL/dz_j = p_j ((ln p_j - ln q_j) - KL) / tau
                    let key = PolicyParams::context_key(&rollout.prompt, prefix);
                    let row: Vec<f64> = p
                        .iter()
                        .zip(q)
                        .map(|(pi, qi)| pi * ((pi / qi).ln() - kl) / tau)
                        .collect();
                    gradient.add_row_scaled(key, &row, -coeff * beta);
                }
            }
            value += coeff * summand;
            per_token_terms[i][t] = summand;
        }
    }
    Ok(SurrogateResult {
        value,
        gradient,
        per_token_terms,
    })
}

/// Plain GRPO: clipped surrogate with per-completion averaging
/// and an exact per-position KL penalty against the reference policy.
pub fn eval_grpo(
    live: &PolicyParams,
    reference: &PolicyParams,
    rollout: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<SurrogateResult> {
    eval_core(live, Some(reference), rollout, cfg, None, Norm::PerCompletion)
}

/// Token-normalized, KL-free clipped surrogate (GRPO').
pub fn eval_grpo_prime(
    live: &PolicyParams,
    rollout: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<SurrogateResult> {
    eval_core(live, None, rollout, cfg, None, Norm::TotalTokens)
}

/// Token-weighted surrogate: w_t multiplies only the unclipped branch
/// (unless `weight_both_branches` is set). Requires token weights on the
/// rollout.
pub fn eval_tw_grpo(
    live: &PolicyParams,
    rollout: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<SurrogateResult> {
    let weights = rollout
        .token_weights
        .as_ref()
        .ok_or(Error::RolloutIncomplete {
            what: "token_weights",
        })?;
    eval_core(live, None, rollout, cfg, Some(weights), Norm::TotalTokens)
}

/// Dispatch on the configured variant. `reference` is required for the
/// plain GRPO objective only.
pub fn eval_objective(
    live: &PolicyParams,
    reference: Option<&PolicyParams>,
    rollout: &GroupRollout,
    cfg: &ObjectiveConfig,
) -> Result<SurrogateResult> {
    match cfg.variant {
        Variant::Grpo => {
            let reference = reference.ok_or_else(|| {
                Error::Config("grpo objective requires a reference policy".into())
            })?;
            eval_grpo(live, reference, rollout, cfg)
        }
        Variant::GrpoPrime => eval_grpo_prime(live, rollout, cfg),
        Variant::TwGrpo => eval_tw_grpo(live, rollout, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advantage::standardize;
    use crate::policy::PromptEncoding;
    use crate::rollout::rollout_group;
    use crate::weighting::{self, PositionMask, WeightConfig, WeightMode};
    use rand::Rng;

    fn prompt() -> PromptEncoding {
        PromptEncoding {
            prompt_id: 11,
            feature_tokens: vec![0],
        }
    }

    fn random_params(v: usize, seed: u64, scale: f64) -> PolicyParams {
        // register the prompt and perturb the rows the rollouts will visit
        let mut p = PolicyParams::new(v);
        p.register_prompt(11);
        let mut rng = crate::rng::stream(&[seed, 0xabc]);
        // enumerate a generous set of context keys: positions 0..4, windows
        for pos in 0..5u32 {
            for w0 in -1..(v as i64) {
                for w1 in -1..(v as i64) {
                    let key = crate::policy::ContextKey {
                        prompt_id: 11,
                        position: pos,
                        window: [w0, w1],
                    };
                    *p.row_mut(key) = (0..v).map(|_| rng.gen_range(-scale..scale)).collect();
                }
            }
        }
        p
    }

    fn make_rollout(
        old: &PolicyParams,
        g: usize,
        temperature: f64,
        max_len: usize,
        seed: u64,
        rewards: Vec<f64>,
    ) -> GroupRollout {
        let mut r = rollout_group(old, &prompt(), g, temperature, max_len, 0, seed).unwrap();
        let adv = standardize(&rewards).unwrap();
        r.set_rewards(rewards);
        r.set_advantages(adv);
        r
    }

    #[test]
    fn ratio_is_one_when_live_equals_old() {
        let old = random_params(4, 1, 1.0);
        let r = make_rollout(&old, 4, 1.0, 5, 2, vec![1.0, 0.0, 0.5, 0.0]);
        for i in 0..4 {
            for t in 0..r.completions[i].len() {
                let ratio = importance_ratio(&old, &r, i, t).unwrap();
                assert!((ratio - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ratio_direct_value() {
        // live prob 0.6, old prob 0.3 -> 2.0; build via a one-position rollout
        let old = random_params(3, 3, 0.5);
        let mut r = make_rollout(&old, 2, 1.0, 1, 4, vec![1.0, 0.0]);
        // overwrite stored old logprob to 0.3 for completion 0
        r.completions[0].old_logprobs[0] = 0.3f64.ln();
        let tok = r.completions[0].token_ids[0];
        // build live params whose prob of tok is 0.6 at that context
        let mut live = PolicyParams::new(3);
        live.register_prompt(11);
        let key = PolicyParams::context_key(&prompt(), &[]);
        let mut logits = vec![0.0; 3];
        // softmax: want p_tok = 0.6, others 0.2 -> logit ln 3 over others
        logits[tok] = 3.0f64.ln();
        *live.row_mut(key) = logits;
        let ratio = importance_ratio(&live, &r, 0, 0).unwrap();
        assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn value_zero_at_live_equals_old() {
        let old = random_params(4, 5, 1.0);
        let r = make_rollout(&old, 6, 1.0, 6, 6, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.0]);
        let cfg = ObjectiveConfig {
            kl_beta: 0.0,
            ..ObjectiveConfig::default()
        };
        // per-completion averaging makes each completion contribute A_i / G
        // regardless of its length, and the advantages sum to zero
        let grpo = eval_grpo(&old, &old, &r, &cfg).unwrap();
        assert!(grpo.value.abs() < 1e-9, "{}", grpo.value);
        // token-level normalization only cancels when lengths are equal
        let mut no_eos = random_params(4, 5, 1.0);
        let keys: Vec<_> = no_eos.rows().map(|(k, _)| *k).collect();
        for k in keys {
            no_eos.row_mut(k)[0] = -60.0;
        }
        let r = make_rollout(&no_eos, 6, 1.0, 4, 6, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.0]);
        assert!(r.completions.iter().all(|c| c.len() == 4));
        let prime = eval_grpo_prime(&no_eos, &r, &cfg).unwrap();
        assert!(prime.value.abs() < 1e-9);
    }

    #[test]
    fn grpo_equals_prime_for_equal_lengths_and_no_kl() {
        // force equal lengths: sample with no EOS in vocab reach by using
        // high max_len truncation at 3 and a policy that never emits eos
        let mut old = random_params(4, 7, 1.0);
        // suppress token 0 (eos) everywhere so all completions hit max_len
        let keys: Vec<_> = old.rows().map(|(k, _)| *k).collect();
        for k in keys {
            old.row_mut(k)[0] = -60.0;
        }
        let r = make_rollout(&old, 3, 1.0, 3, 8, vec![1.0, 0.0, 0.2]);
        assert!(r.completions.iter().all(|c| c.len() == 3));
        let live = random_params(4, 9, 0.3);
        let cfg = ObjectiveConfig {
            kl_beta: 0.0,
            ..ObjectiveConfig::default()
        };
        let a = eval_grpo(&live, &old, &r, &cfg).unwrap();
        let b = eval_grpo_prime(&live, &r, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 1e-9, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn tw_with_unit_weights_equals_prime() {
        let old = random_params(4, 11, 1.0);
        let mut r = make_rollout(&old, 4, 1.0, 5, 12, vec![1.0, 0.5, 0.0, 0.0]);
        r.set_token_weights(vec![1.0; r.o_max]);
        let live = random_params(4, 13, 0.4);
        let cfg = ObjectiveConfig::default();
        let a = eval_tw_grpo(&live, &r, &cfg).unwrap();
        let b = eval_grpo_prime(&live, &r, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn tw_offset_alpha_zero_equals_prime() {
        let old = random_params(4, 15, 1.0);
        let mut r = make_rollout(&old, 4, 1.0, 5, 16, vec![1.0, 0.5, 0.0, 0.0]);
        let cfg = ObjectiveConfig {
            weight_config: WeightConfig {
                alpha: 0.0,
                mode: WeightMode::Offset,
                position_mask: PositionMask::All,
            },
            ..ObjectiveConfig::default()
        };
        let wv = weighting::weights(
            &weighting::d_values(&r),
            &cfg.weight_config,
            r.content_boundary(),
        );
        r.set_token_weights(wv.weights);
        let live = random_params(4, 17, 0.4);
        let a = eval_tw_grpo(&live, &r, &cfg).unwrap();
        let b = eval_grpo_prime(&live, &r, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn missing_weights_or_advantages_error() {
        let old = random_params(3, 19, 1.0);
        let mut r = rollout_group(&old, &prompt(), 2, 1.0, 3, 0, 20).unwrap();
        let cfg = ObjectiveConfig::default();
        assert!(matches!(
            eval_grpo_prime(&old, &r, &cfg),
            Err(Error::RolloutIncomplete { what: "advantages" })
        ));
        r.set_rewards(vec![1.0, 0.0]);
        r.set_advantages(vec![1.0, -1.0]);
        assert!(matches!(
            eval_tw_grpo(&old, &r, &cfg),
            Err(Error::RolloutIncomplete { what: "token_weights" })
        ));
    }

    #[test]
    fn padded_terms_are_zero() {
        let old = random_params(5, 21, 1.5);
        let mut r = make_rollout(&old, 5, 1.0, 6, 22, vec![1.0, 0.0, 0.0, 0.5, 0.0]);
        let wv = weighting::weights(
            &weighting::d_values(&r),
            &WeightConfig::default(),
            r.content_boundary(),
        );
        r.set_token_weights(wv.weights);
        let live = random_params(5, 23, 0.5);
        let res = eval_tw_grpo(&live, &r, &ObjectiveConfig::default()).unwrap();
        for (i, c) in r.completions.iter().enumerate() {
            for t in c.len()..r.o_max {
                assert_eq!(res.per_token_terms[i][t], 0.0);
            }
        }
    }

    #[test]
    fn clipping_inactive_means_clip_free_agreement() {
        // live close to old keeps every ratio inside [1-eps, 1+eps]; a huge
        // eps then changes nothing
        let old = random_params(4, 25, 1.0);
        let r = make_rollout(&old, 4, 1.0, 5, 26, vec![1.0, 0.0, 0.5, 0.0]);
        let live = {
            let mut p = old.clone();
            let keys: Vec<_> = p.rows().map(|(k, _)| *k).collect();
            let mut rng = crate::rng::stream(&[27]);
            for k in keys {
                for v in p.row_mut(k).iter_mut() {
                    *v += rng.gen_range(-0.01..0.01);
                }
            }
            p
        };
        let tight = ObjectiveConfig {
            kl_beta: 0.0,
            ..ObjectiveConfig::default()
        };
        let loose = ObjectiveConfig {
            clip_eps: 1e6,
            kl_beta: 0.0,
            ..ObjectiveConfig::default()
        };
        // verify ratios are inside the tight clip band first
        for i in 0..4 {
            for t in 0..r.completions[i].len() {
                let ratio = importance_ratio(&live, &r, i, t).unwrap();
                assert!((ratio - 1.0).abs() < 0.2);
            }
        }
        let a = eval_grpo_prime(&live, &r, &tight).unwrap();
        let b = eval_grpo_prime(&live, &r, &loose).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for case in 0..20u64 {
            let v = 3 + (case as usize % 3);
            let old = random_params(v, 100 + case, 1.0);
            let mut r = make_rollout(&old, 4, 1.0, 4, 200 + case, vec![1.0, 0.0, 0.5, 0.0]);
            let wv = weighting::weights(
                &weighting::d_values(&r),
                &WeightConfig::default(),
                r.content_boundary(),
            );
            r.set_token_weights(wv.weights);
            // live nearby but distinct so some clip branches engage
            let mut live = random_params(v, 300 + case, 0.8);
            let cfg = ObjectiveConfig::default();
            let res = eval_tw_grpo(&live, &r, &cfg).unwrap();
            let h = 1e-6;
            // probe every context the rollout visits
            let mut keys = Vec::new();
            for (i, c) in r.completions.iter().enumerate() {
                for t in 0..c.len() {
                    keys.push(PolicyParams::context_key(&r.prompt, r.prefix(i, t)));
                }
            }
            for key in keys {
                for k in 0..v {
                    let base = live.logits(&key)[k];
                    live.row_mut(key)[k] = base + h;
                    let up = eval_tw_grpo(&live, &r, &cfg).unwrap().value;
                    live.row_mut(key)[k] = base - h;
                    let dn = eval_tw_grpo(&live, &r, &cfg).unwrap().value;
                    live.row_mut(key)[k] = base;
                    let fd = (up - dn) / (2.0 * h);
                    let g = res.gradient.row(&key).map(|row| row[k]).unwrap_or(0.0);
                    assert!(
                        (g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()).max(1.0),
                        "case {case} key {} entry {k}: analytic {g} vs fd {fd}",
                        key.describe()
                    );
                }
            }
        }
    }

    #[test]
    fn grpo_kl_gradient_matches_finite_differences() {
        for case in 0..10u64 {
            let v = 4;
            let old = random_params(v, 400 + case, 1.0);
            let reference = random_params(v, 500 + case, 0.7);
            let r = make_rollout(&old, 3, 1.3, 4, 600 + case, vec![1.0, 0.0, 0.5]);
            let mut live = random_params(v, 700 + case, 0.8);
            let cfg = ObjectiveConfig {
                kl_beta: 0.3,
                ..ObjectiveConfig::default()
            };
            let res = eval_grpo(&live, &reference, &r, &cfg).unwrap();
            let h = 1e-6;
            let mut keys = Vec::new();
            for (i, c) in r.completions.iter().enumerate() {
                for t in 0..c.len() {
                    keys.push(PolicyParams::context_key(&r.prompt, r.prefix(i, t)));
                }
            }
            for key in keys {
                for k in 0..v {
                    let base = live.logits(&key)[k];
                    live.row_mut(key)[k] = base + h;
                    let up = eval_grpo(&live, &reference, &r, &cfg).unwrap().value;
                    live.row_mut(key)[k] = base - h;
                    let dn = eval_grpo(&live, &reference, &r, &cfg).unwrap().value;
                    live.row_mut(key)[k] = base;
                    let fd = (up - dn) / (2.0 * h);
                    let g = res.gradient.row(&key).map(|row| row[k]).unwrap_or(0.0);
                    assert!(
                        (g - fd).abs() <= 1e-5 * g.abs().max(fd.abs()).max(1.0),
                        "case {case} key {} entry {k}: analytic {g} vs fd {fd}",
                        key.describe()
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_at_old_matches_reinforce_estimator() {
        // at live = old all ratios are 1; the surrogate gradient reduces to
        // the REINFORCE estimator sum_t A_i grad log pi (unit weights)
        let old = random_params(4, 29, 1.0);
        let r = make_rollout(&old, 4, 1.0, 5, 30, vec![1.0, 0.0, 0.5, 0.0]);
        let cfg = ObjectiveConfig {
            kl_beta: 0.0,
            ..ObjectiveConfig::default()
        };
        let res = eval_grpo_prime(&old, &r, &cfg).unwrap();
        // independently coded REINFORCE-style gradient
        let total: usize = r.completions.iter().map(|c| c.len()).sum();
        let adv = r.advantages.clone().unwrap();
        let mut expect = ParamGrad::new();
        for (i, c) in r.completions.iter().enumerate() {
            for t in 0..c.len() {
                let g = old
                    .grad_logprob_with_temperature(
                        &r.prompt,
                        r.prefix(i, t),
                        c.token_ids[t],
                        r.temperature,
                    )
                    .unwrap();
                expect.add_scaled(&g, adv[i] / total as f64);
            }
        }
        for (key, row) in expect.rows() {
            let got = res.gradient.row(key).unwrap();
            for (a, b) in row.iter().zip(got) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
