//! Tabular-softmax autoregressive policy with exact analytic gradients.
//!
//! Each context is keyed by (prompt id, position, last-2 token window).
//! A context row holds one logit per vocabulary token; absent rows are
//! implicitly all-zero (uniform). The table stays small because prompts
//! are short and `max_len` is bounded, and every gradient is exact, so
//! finite-difference and brute-force oracles can check objectives to
//! machine precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// Number of prefix tokens that participate in the context key.
pub const CONTEXT_WINDOW: usize = 2;

/// Default generation cap: room for a think span plus a 5-option answer list.
pub const DEFAULT_MAX_LEN: usize = 24;

/// Sentinel for window slots before the start of the sequence.
const NO_TOKEN: i64 = -1;

/// Encoded prompt: a stable id plus a short feature-token prefix that
/// seeds the context window before generation starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEncoding {
    pub prompt_id: u64,
    pub feature_tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    pub prompt_id: u64,
    pub position: u32,
    pub window: [i64; CONTEXT_WINDOW],
}

impl ContextKey {
    pub fn describe(&self) -> String {
        format!(
            "{:#x}:{}:{},{}",
            self.prompt_id, self.position, self.window[0], self.window[1]
        )
    }
}

/// Probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "invalid probability vector (sum {sum})"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(v: usize) -> Self {
        Self {
            probs: vec![1.0 / v as f64; v],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs[id]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> TokenId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// One sampled response: token ids, the post-temperature distribution at
/// every emitted position, and the old-policy log-probs of the chosen tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub token_ids: Vec<TokenId>,
    pub per_position_dists: Vec<TokenDistribution>,
    pub old_logprobs: Vec<f64>,
}

impl Completion {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Parameter-shaped sparse gradient: rows mirror the policy table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrad {
    rows: BTreeMap<ContextKey, Vec<f64>>,
}

impl ParamGrad {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn row(&self, key: &ContextKey) -> Option<&[f64]> {
        self.rows.get(key).map(|r| r.as_slice())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&ContextKey, &Vec<f64>)> {
        self.rows.iter()
    }

    pub fn add_row_scaled(&mut self, key: ContextKey, values: &[f64], scale: f64) {
        let row = self
            .rows
            .entry(key)
            .or_insert_with(|| vec![0.0; values.len()]);
        for (r, v) in row.iter_mut().zip(values) {
            *r += scale * v;
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrad, scale: f64) {
        for (k, v) in &other.rows {
            self.add_row_scaled(*k, v, scale);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for row in self.rows.values_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Softmax with max-shift; `temperature` divides the logits first.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Tabular policy parameters. Cloning yields a frozen snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    vocab_size: usize,
    prompts: BTreeSet<u64>,
    table: BTreeMap<ContextKey, Vec<f64>>,
}

impl PolicyParams {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            prompts: BTreeSet::new(),
            table: BTreeMap::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn register_prompt(&mut self, prompt_id: u64) {
        self.prompts.insert(prompt_id);
    }

    pub fn is_registered(&self, prompt_id: u64) -> bool {
        self.prompts.contains(&prompt_id)
    }

    pub fn num_rows(&self) -> usize {
        self.table.len()
    }

    /// Deep frozen copy; later updates to the live params do not affect it.
    pub fn snapshot(&self) -> PolicyParams {
        self.clone()
    }

    /// Context key after `emitted` tokens of the given prompt.
    pub fn context_key(prompt: &PromptEncoding, emitted: &[TokenId]) -> ContextKey {
        let mut window = [NO_TOKEN; CONTEXT_WINDOW];
        let chain_len = prompt.feature_tokens.len() + emitted.len();
        for (slot, w) in window.iter_mut().enumerate() {
            // slot 0 is the older of the two window tokens
            let back = CONTEXT_WINDOW - slot;
            if chain_len >= back {
                let idx = chain_len - back;
                let tok = if idx < prompt.feature_tokens.len() {
                    prompt.feature_tokens[idx]
                } else {
                    emitted[idx - prompt.feature_tokens.len()]
                };
                *w = tok as i64;
            }
        }
        ContextKey {
            prompt_id: prompt.prompt_id,
            position: emitted.len() as u32,
            window,
        }
    }

    pub fn logits(&self, key: &ContextKey) -> Vec<f64> {
        self.table
            .get(key)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.vocab_size])
    }

    pub fn row_mut(&mut self, key: ContextKey) -> &mut Vec<f64> {
        let v = self.vocab_size;
        self.table.entry(key).or_insert_with(|| vec![0.0; v])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&ContextKey, &Vec<f64>)> {
        self.table.iter()
    }

    /// Next-token distribution after `prefix`, with the logits divided by
    /// `temperature` before the softmax.
    pub fn distribution_with_temperature(
        &self,
        prompt: &PromptEncoding,
        prefix: &[TokenId],
        temperature: f64,
    ) -> Result<TokenDistribution> {
        if !self.is_registered(prompt.prompt_id) {
            return Err(Error::UnknownPrompt {
                prompt_id: prompt.prompt_id,
            });
        }
        let key = Self::context_key(prompt, prefix);
        let logits = self.logits(&key);
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFiniteLogits {
                context: key.describe(),
            });
        }
        Ok(TokenDistribution {
            probs: softmax(&logits, temperature),
        })
    }

    /// Next-token distribution at temperature 1.
    pub fn token_distribution(
        &self,
        prompt: &PromptEncoding,
        prefix: &[TokenId],
    ) -> Result<TokenDistribution> {
        self.distribution_with_temperature(prompt, prefix, 1.0)
    }

    /// Exact gradient of `log pi(token | prompt, prefix)` with respect to the
    /// parameters. Only the active context row is nonzero; within that row
    /// entry k is `(1{k=token} - p_k) / temperature`.
    pub fn grad_logprob_with_temperature(
        &self,
        prompt: &PromptEncoding,
        prefix: &[TokenId],
        token: TokenId,
        temperature: f64,
    ) -> Result<ParamGrad> {
        let dist = self.distribution_with_temperature(prompt, prefix, temperature)?;
        let key = Self::context_key(prompt, prefix);
        let mut row = vec![0.0; self.vocab_size];
        for (k, r) in row.iter_mut().enumerate() {
            let indicator = if k == token { 1.0 } else { 0.0 };
            *r = (indicator - dist.prob(k)) / temperature;
        }
        let mut grad = ParamGrad::new();
        grad.add_row_scaled(key, &row, 1.0);
        Ok(grad)
    }

    /// Temperature-1 log-prob gradient.
    pub fn grad_logprob(
        &self,
        prompt: &PromptEncoding,
        prefix: &[TokenId],
        token: TokenId,
    ) -> Result<ParamGrad> {
        self.grad_logprob_with_temperature(prompt, prefix, token, 1.0)
    }

    /// Autoregressively sample one completion from the frozen policy.
    /// Stops at EOS (inclusive) or `max_len`; records the post-temperature
    /// distribution and chosen-token log-prob at every emitted position.
    pub fn sample_completion(
        &self,
        prompt: &PromptEncoding,
        temperature: f64,
        max_len: usize,
        eos: TokenId,
        rng: &mut ChaCha8Rng,
    ) -> Result<Completion> {
        assert!(temperature > 0.0, "temperature must be positive");
        assert!(max_len >= 1, "max_len must be at least 1");
        let mut token_ids = Vec::new();
        let mut dists = Vec::new();
        let mut logprobs = Vec::new();
        for _ in 0..max_len {
            let dist = self.distribution_with_temperature(prompt, &token_ids, temperature)?;
            let tok = dist.sample(rng);
            logprobs.push(dist.prob(tok).ln());
            dists.push(dist);
            token_ids.push(tok);
            if tok == eos {
                break;
            }
        }
        Ok(Completion {
            token_ids,
            per_position_dists: dists,
            old_logprobs: logprobs,
        })
    }

    /// Greedy (argmax) decode used for evaluation.
    pub fn decode_greedy(
        &self,
        prompt: &PromptEncoding,
        max_len: usize,
        eos: TokenId,
    ) -> Result<Vec<TokenId>> {
        let mut token_ids = Vec::new();
        for _ in 0..max_len {
            let dist = self.distribution_with_temperature(prompt, &token_ids, 1.0)?;
            let tok = dist.argmax();
            token_ids.push(tok);
            if tok == eos {
                break;
            }
        }
        Ok(token_ids)
    }

    /// Write the parameter table as versioned line-delimited text:
    /// one `(context key, position, token, value)` quadruple per line,
    /// values as IEEE-754 bit patterns for exact round-trips.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "twgrpo-params v1")?;
        writeln!(w, "vocab {}", self.vocab_size)?;
        for p in &self.prompts {
            writeln!(w, "prompt {p:016x}")?;
        }
        for (key, row) in &self.table {
            for (tok, val) in row.iter().enumerate() {
                if *val == 0.0 && val.is_sign_positive() {
                    continue; // implicit zero
                }
                let mut line = String::new();
                write!(
                    line,
                    "row {:016x} {} {} {} {} {:016x}",
                    key.prompt_id, key.position, key.window[0], key.window[1], tok,
                    val.to_bits()
                )
                .expect("format");
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn save_to_path(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.save(&mut f)
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("empty parameter file".into()))??;
        if header.trim() != "twgrpo-params v1" {
            return Err(Error::Checkpoint(format!("unknown header {header:?}")));
        }
        let mut params: Option<PolicyParams> = None;
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("vocab") => {
                    let v: usize = parse_field(parts.next(), "vocab size")?;
                    params = Some(PolicyParams::new(v));
                }
                Some("prompt") => {
                    let p = params
                        .as_mut()
                        .ok_or_else(|| Error::Checkpoint("prompt before vocab".into()))?;
                    let id = u64::from_str_radix(
                        parts
                            .next()
                            .ok_or_else(|| Error::Checkpoint("missing prompt id".into()))?,
                        16,
                    )
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                    p.register_prompt(id);
                }
                Some("row") => {
                    let p = params
                        .as_mut()
                        .ok_or_else(|| Error::Checkpoint("row before vocab".into()))?;
                    let prompt_id = u64::from_str_radix(
                        parts
                            .next()
                            .ok_or_else(|| Error::Checkpoint("missing row prompt".into()))?,
                        16,
                    )
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                    let position: u32 = parse_field(parts.next(), "position")?;
                    let w0: i64 = parse_field(parts.next(), "window 0")?;
                    let w1: i64 = parse_field(parts.next(), "window 1")?;
                    let tok: usize = parse_field(parts.next(), "token")?;
                    let bits = u64::from_str_radix(
                        parts
                            .next()
                            .ok_or_else(|| Error::Checkpoint("missing value".into()))?,
                        16,
                    )
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                    if tok >= p.vocab_size {
                        return Err(Error::Checkpoint(format!("token {tok} out of range")));
                    }
                    let key = ContextKey {
                        prompt_id,
                        position,
                        window: [w0, w1],
                    };
                    p.row_mut(key)[tok] = f64::from_bits(bits);
                }
                other => {
                    return Err(Error::Checkpoint(format!("unknown record {other:?}")));
                }
            }
        }
        params.ok_or_else(|| Error::Checkpoint("missing vocab record".into()))
    }

    pub fn load_from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(BufReader::new(f))
    }

    /// Every parameter finite?
    pub fn is_finite(&self) -> bool {
        self.table.values().all(|r| r.iter().all(|v| v.is_finite()))
    }
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.ok_or_else(|| Error::Checkpoint(format!("missing {what}")))?
        .parse()
        .map_err(|e| Error::Checkpoint(format!("bad {what}: {e}")))
}
