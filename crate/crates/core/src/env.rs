//! Synthetic QA environment: seeded corpus generation with deterministic
//! ground truth, and prompt encoding for the tabular policy.
//!
//! Each question embeds a small feature code in its text; the correct
//! option set is whatever subset of options a seeded linear-threshold rule
//! accepts on that code. Ground truth is therefore a pure function of
//! (template, options, rule_seed) and can be re-derived from the record
//! text alone.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PromptEncoding;
use crate::qai::{Polarity, Provenance, QARecord, QaOption};
use crate::rewards::AnswerSet;
use crate::rng;
use crate::vocab::Vocab;

const FEATURE_RANGE: u8 = 10;
const MAX_FEATURE_RETRIES: usize = 100;
const MAX_RULE_RETRIES: u64 = 20;

/// Fraction of multi-correct records a multi-answer corpus must reach.
const MIN_MULTI_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub n_options: usize,
    pub feature_dim: usize,
    pub rule_seed: u64,
    pub train: usize,
    pub eval: usize,
    /// Force |correct| = 1 on every record.
    pub single_choice: bool,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            n_options: 4,
            feature_dim: 3,
            rule_seed: 1,
            train: 32,
            eval: 16,
            single_choice: false,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.n_options) {
            return Err(Error::Config(format!(
                "n_options must be in 2..=5, got {}",
                self.n_options
            )));
        }
        if self.feature_dim == 0 || self.feature_dim > 8 {
            return Err(Error::Config("feature_dim must be in 1..=8".into()));
        }
        if self.train == 0 || self.eval == 0 {
            return Err(Error::Config("split sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Rule weight in {-2..2} for (rule_seed, option, dim).
fn rule_weight(rule_seed: u64, option: usize, dim: usize) -> i64 {
    (rng::derive_seed(&[rule_seed, 0x77, option as u64, dim as u64]) % 5) as i64 - 2
}

fn rule_threshold(rule_seed: u64, option: usize) -> i64 {
    (rng::derive_seed(&[rule_seed, 0x7468, option as u64]) % 7) as i64 - 3
}

/// Options accepted by the seeded linear-threshold rule on `features`.
pub fn rule_correct(features: &[u8], n_options: usize, rule_seed: u64) -> BTreeSet<char> {
    let centered: Vec<i64> = features
        .iter()
        .map(|f| *f as i64 - (FEATURE_RANGE as i64 / 2))
        .collect();
    let mut out = BTreeSet::new();
    for opt in 0..n_options {
        let score: i64 = centered
            .iter()
            .enumerate()
            .map(|(d, x)| rule_weight(rule_seed, opt, d) * x)
            .sum();
        if score > rule_threshold(rule_seed, opt) {
            out.insert((b'A' + opt as u8) as char);
        }
    }
    out
}

fn template_for(features: &[u8], salt: &str) -> String {
    let code = features
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join("-");
    format!("Given code {code}, why {{did}} the monitor accept sample {salt}?")
}

/// Recover the feature code embedded in a template.
pub fn features_from_template(template: &str) -> Option<Vec<u8>> {
    let rest = template.split("Given code ").nth(1)?;
    let code = rest.split(',').next()?;
    code.split('-').map(|p| p.parse().ok()).collect()
}

fn make_record(
    spec: &TaskSpec,
    id: String,
    index: u64,
    seed: u64,
) -> Result<QARecord> {
    let mut rng = rng::stream(&[seed, 0x656e76, index]);
    for _ in 0..MAX_FEATURE_RETRIES {
        let features: Vec<u8> = (0..spec.feature_dim)
            .map(|_| rng.gen_range(0..FEATURE_RANGE))
            .collect();
        let mut correct = rule_correct(&features, spec.n_options, spec.rule_seed);
        if correct.is_empty() {
            continue;
        }
        if spec.single_choice && correct.len() > 1 {
            // keep only the highest-scoring option for single-choice corpora
            let centered: Vec<i64> = features
                .iter()
                .map(|f| *f as i64 - (FEATURE_RANGE as i64 / 2))
                .collect();
            let best = correct
                .iter()
                .copied()
                .max_by_key(|l| {
                    let opt = (*l as u8 - b'A') as usize;
                    let score: i64 = centered
                        .iter()
                        .enumerate()
                        .map(|(d, x)| rule_weight(spec.rule_seed, opt, d) * x)
                        .sum();
                    (score, std::cmp::Reverse(*l))
                })
                .unwrap();
            correct = BTreeSet::from([best]);
        }
        let options = (0..spec.n_options)
            .map(|k| QaOption {
                letter: (b'A' + k as u8) as char,
                text: format!("pattern-{k}"),
            })
            .collect();
        let record = QARecord {
            id,
            template: template_for(&features, &index.to_string()),
            polarity: Polarity::Positive,
            options,
            correct: AnswerSet::from_letters(correct),
            provenance: Provenance::Original,
        };
        record.validate()?;
        return Ok(record);
    }
    Err(Error::Generation(format!(
        "rule produced an empty correct set for {MAX_FEATURE_RETRIES} feature draws (record {index})"
    )))
}

/// Generate a train+eval corpus. Ids carry the split (`train-*` / `eval-*`)
/// so the loaders can partition without extra metadata. In multi-answer
/// mode the rule seed is bumped until at least 20% of records have two or
/// more correct options.
pub fn generate_corpus(spec: &TaskSpec, seed: u64) -> Result<Vec<QARecord>> {
    spec.validate()?;
    let mut spec = spec.clone();
    for _ in 0..MAX_RULE_RETRIES {
        let mut records = Vec::with_capacity(spec.train + spec.eval);
        for i in 0..spec.train {
            records.push(make_record(&spec, format!("train-{i:05}"), i as u64, seed)?);
        }
        for i in 0..spec.eval {
            records.push(make_record(
                &spec,
                format!("eval-{i:05}"),
                (spec.train + i) as u64,
                seed,
            )?);
        }
        if spec.single_choice {
            return Ok(records);
        }
        let multi = records.iter().filter(|r| r.correct.len() >= 2).count();
        if multi as f64 >= MIN_MULTI_FRACTION * records.len() as f64 {
            return Ok(records);
        }
        spec.rule_seed = spec.rule_seed.wrapping_add(1);
    }
    Err(Error::Generation(
        "could not find a rule seed with enough multi-correct records".into(),
    ))
}

pub fn train_split(records: &[QARecord]) -> Vec<&QARecord> {
    records.iter().filter(|r| r.id.starts_with("train-")).collect()
}

pub fn eval_split(records: &[QARecord]) -> Vec<&QARecord> {
    records.iter().filter(|r| r.id.starts_with("eval-")).collect()
}

/// Stable, truth-blind prompt encoding: the id hashes the question text and
/// option list (never the correct set); two filler tokens derived from the
/// hash seed the context window.
pub fn encode_prompt(record: &QARecord, vocab: &Vocab) -> PromptEncoding {
    let mut text = record.id.clone();
    text.push('\u{1f}');
    text.push_str(&record.rendered_question());
    for opt in &record.options {
        text.push('\u{1f}');
        text.push(opt.letter);
        text.push(':');
        text.push_str(&opt.text);
    }
    let h = rng::fnv64(text.as_bytes());
    let fillers = vocab.fillers();
    let feature_tokens = if fillers.is_empty() {
        Vec::new()
    } else {
        vec![
            fillers[(h % fillers.len() as u64) as usize],
            fillers[((h >> 7) % fillers.len() as u64) as usize],
        ]
    };
    PromptEncoding {
        prompt_id: h,
        feature_tokens,
    }
}
