//! Answer parsing and reward functions for multi-answer QA.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FORMAT_BONUS: f64 = 0.1;

/// Set of predicted or ground-truth option letters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct AnswerSet(BTreeSet<char>);

impl AnswerSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_letters<I: IntoIterator<Item = char>>(letters: I) -> Self {
        Self(letters.into_iter().collect())
    }

    pub fn insert(&mut self, letter: char) {
        self.0.insert(letter);
    }

    pub fn contains(&self, letter: char) -> bool {
        self.0.contains(&letter)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &AnswerSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = char> + '_ {
        self.0.iter().copied()
    }

    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl std::iter::FromIterator<char> for AnswerSet {
    fn from_iter<T: IntoIterator<Item = char>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Which accuracy reward a training run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardScheme {
    /// 1 for an exact set match, else 0.
    Fixed,
    /// |P|/|G| when the prediction is a subset of the truth, else 0.
    #[default]
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub accuracy_reward: f64,
    pub format_reward: f64,
    pub total: f64,
}

/// Extract the answer set from the span between the final answer-open tag
/// and its closing tag: split on commas, trim, uppercase, keep valid option
/// letters. `None` when the tags are absent or the span holds no letter.
pub fn parse_answer(text: &str) -> Option<AnswerSet> {
    let open = text.rfind("<answer>")?;
    let span_start = open + "<answer>".len();
    let close_rel = text[span_start..].find("</answer>")?;
    let span = &text[span_start..span_start + close_rel];
    let mut set = AnswerSet::new();
    for piece in span.split(',') {
        let p = piece.trim().to_uppercase();
        let mut chars = p.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if ('A'..='E').contains(&c) {
                set.insert(c);
            }
        }
    }
    if set.is_empty() {
        None
    } else {
        Some(set)
    }
}

/// Multi-level soft reward: |P|/|G| when P is a nonempty subset of the
/// truth, 0 otherwise. The empty prediction earns 0.
pub fn soft_reward(predicted: &AnswerSet, truth: &AnswerSet) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    if predicted.is_empty() || !predicted.is_subset(truth) {
        return Ok(0.0);
    }
    Ok(predicted.len() as f64 / truth.len() as f64)
}

/// Binary baseline: 1 for an exact match, else 0.
pub fn fixed_reward(predicted: &AnswerSet, truth: &AnswerSet) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(if predicted == truth { 1.0 } else { 0.0 })
}

/// `bonus` when the text holds exactly one think span followed by exactly
/// one answer span, else 0.
pub fn format_reward(text: &str, bonus: f64) -> f64 {
    let count = |pat: &str| text.matches(pat).count();
    if count("<think>") != 1
        || count("</think>") != 1
        || count("<answer>") != 1
        || count("</answer>") != 1
    {
        return 0.0;
    }
    let think_open = text.find("<think>").unwrap();
    let think_close = text.find("</think>").unwrap();
    let ans_open = text.find("<answer>").unwrap();
    let ans_close = text.find("</answer>").unwrap();
    if think_open < think_close && think_close < ans_open && ans_open < ans_close {
        bonus
    } else {
        0.0
    }
}

/// Accuracy reward (per scheme) plus format bonus for one rendered completion.
pub fn completion_reward(
    text: &str,
    truth: &AnswerSet,
    scheme: RewardScheme,
    format_bonus: f64,
) -> Result<RewardBreakdown> {
    let accuracy = match parse_answer(text) {
        Some(pred) => match scheme {
            RewardScheme::Fixed => fixed_reward(&pred, truth)?,
            RewardScheme::Soft => soft_reward(&pred, truth)?,
        },
        None => 0.0,
    };
    let format = format_reward(text, format_bonus);
    Ok(RewardBreakdown {
        accuracy_reward: accuracy,
        format_reward: format,
        total: accuracy + format,
    })
}

/// Mean soft reward over an evaluation set, as a percentage. Parse
/// failures enter as 0.
pub fn soft_accuracy_metric(
    predictions: &[Option<AnswerSet>],
    truths: &[AnswerSet],
) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        if let Some(p) = p {
            sum += soft_reward(p, t)?;
        } else if t.is_empty() {
            return Err(Error::EmptyGroundTruth);
        }
    }
    Ok(100.0 * sum / predictions.len() as f64)
}
