//! Question-Answer Inversion: turn single-choice records into multi-answer
//! ones by flipping the question polarity, complementing the answer key,
//! and randomly removing some of the now-correct options.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewards::AnswerSet;
use crate::rng;

/// Marker the template must contain exactly once; rendering substitutes
/// "did" or "didn't" according to the record's polarity.
pub const POLARITY_SLOT: &str = "{did}";

pub const DEFAULT_INVERT_PROB: f64 = 0.5;
pub const DEFAULT_DROP_PROB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    fn verb(self) -> &'static str {
        match self {
            Polarity::Positive => "did",
            Polarity::Negative => "didn't",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaOption {
    pub letter: char,
    pub text: String,
}

/// One multi-choice question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub template: String,
    pub polarity: Polarity,
    pub options: Vec<QaOption>,
    pub correct: AnswerSet,
    pub provenance: Provenance,
}

impl QARecord {
    pub fn rendered_question(&self) -> String {
        self.template.replace(POLARITY_SLOT, self.polarity.verb())
    }

    pub fn option_letters(&self) -> AnswerSet {
        self.options.iter().map(|o| o.letter).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidRecord {
            id: self.id.clone(),
            reason,
        };
        if self.template.matches(POLARITY_SLOT).count() != 1 {
            return Err(fail("template must contain exactly one polarity slot".into()));
        }
        if self.options.len() < 2 || self.options.len() > 5 {
            return Err(fail(format!("{} options, need 2..=5", self.options.len())));
        }
        let expected: Vec<char> = ('A'..='E').take(self.options.len()).collect();
        let letters: Vec<char> = self.options.iter().map(|o| o.letter).collect();
        if letters != expected {
            return Err(fail(format!("option letters {letters:?} not contiguous from A")));
        }
        if self.correct.is_empty() {
            return Err(fail("empty correct set".into()));
        }
        if !self.correct.is_subset(&self.option_letters()) {
            return Err(fail("correct set not a subset of option letters".into()));
        }
        Ok(())
    }
}

/// Invert a positive-polarity single-choice record. The new correct set is
/// the complement of the old one; each now-correct option is then dropped
/// with probability `drop_prob`, keeping at least one correct option and at
/// least two options total. Letters are relabeled contiguously from A.
pub fn invert(record: &QARecord, seed: u64, drop_prob: f64) -> Result<QARecord> {
    let fail = |reason: &str| Error::InvalidInversion {
        id: record.id.clone(),
        reason: reason.into(),
    };
    record.validate()?;
    if record.polarity != Polarity::Positive {
        return Err(fail("source polarity must be positive"));
    }
    if record.correct.len() != 1 {
        return Err(fail("source must be single-choice"));
    }
    if record.options.len() < 3 {
        // complement of a 2-option record is a single option: inverting
        // would just swap the key, not create a multi-answer item
        return Err(fail("need at least 3 options to invert"));
    }

    let mut rng = rng::stream(&[seed, rng::fnv64(record.id.as_bytes())]);
    let now_correct: Vec<char> = record
        .options
        .iter()
        .map(|o| o.letter)
        .filter(|l| !record.correct.contains(*l))
        .collect();

    // independent drops, then enforce the >=1 correct survivor floor
    let mut dropped: Vec<char> = now_correct
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(drop_prob))
        .collect();
    if dropped.len() == now_correct.len() {
        dropped.pop();
    }

    let survivors: Vec<&QaOption> = record
        .options
        .iter()
        .filter(|o| !dropped.contains(&o.letter))
        .collect();
    debug_assert!(survivors.len() >= 2);

    let mut options = Vec::with_capacity(survivors.len());
    let mut correct = AnswerSet::new();
    for (idx, opt) in survivors.iter().enumerate() {
        let letter = (b'A' + idx as u8) as char;
        if now_correct.contains(&opt.letter) {
            correct.insert(letter);
        }
        options.push(QaOption {
            letter,
            text: opt.text.clone(),
        });
    }

    let inverted = QARecord {
        id: record.id.clone(),
        template: record.template.clone(),
        polarity: record.polarity.flip(),
        options,
        correct,
        provenance: Provenance::Inverted,
    };
    inverted.validate()?;
    Ok(inverted)
}

/// Whether `invert` can be applied to this record.
pub fn invertible(record: &QARecord) -> bool {
    record.polarity == Polarity::Positive
        && record.correct.len() == 1
        && record.options.len() >= 3
}

/// Replace each invertible record by its inversion with probability
/// `invert_prob`; everything else passes through untouched. Order-stable
/// and deterministic per seed.
pub fn augment_dataset(
    records: &[QARecord],
    invert_prob: f64,
    drop_prob: f64,
    seed: u64,
) -> Result<Vec<QARecord>> {
    let mut out = Vec::with_capacity(records.len());
    for (idx, rec) in records.iter().enumerate() {
        let mut rng = rng::stream(&[seed, 0x617567, idx as u64]);
        if invertible(rec) && rng.gen_bool(invert_prob) {
            out.push(invert(rec, rng::derive_seed(&[seed, idx as u64]), drop_prob)?);
        } else {
            out.push(rec.clone());
        }
    }
    Ok(out)
}

/// Write one record per line as JSON.
pub fn save_corpus(path: &Path, records: &[QARecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for rec in records {
        let line = serde_json::to_string(rec)?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

/// Load a line-delimited corpus, validating every record.
pub fn load_corpus(path: &Path) -> Result<Vec<QARecord>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QARecord = serde_json::from_str(&line)?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}
