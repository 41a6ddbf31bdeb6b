//! Toy vocabulary for the symbolic QA environment.
//!
//! Tokens are dense ids in `[0, V)`. The standard vocabulary carries the
//! think/answer tag markers, the option letters A-E, the comma separator,
//! a couple of filler tokens, and a single end-of-sequence token.

use crate::error::{Error, Result};

pub type TokenId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    eos: TokenId,
    fillers: Vec<TokenId>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>, eos_token: &str) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &tokens {
            if !seen.insert(t.clone()) {
                return Err(Error::Config(format!("duplicate token {t:?} in vocab")));
            }
        }
        let eos_hits: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_str() == eos_token)
            .map(|(i, _)| i)
            .collect();
        if eos_hits.len() != 1 {
            return Err(Error::Config(format!(
                "end-of-sequence token {eos_token:?} must appear exactly once"
            )));
        }
        let fillers = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.starts_with('~'))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            tokens,
            eos: eos_hits[0],
            fillers,
        })
    }

    /// The vocabulary used throughout the lab: tags, letters, comma,
    /// two filler tokens (rendered as prose-ish placeholders), and EOS.
    pub fn standard() -> Self {
        let toks = [
            "<eos>", "<think>", "</think>", "<answer>", "</answer>", ",", "A", "B", "C", "D",
            "E", "~hm", "~so",
        ];
        Self::new(toks.iter().map(|s| s.to_string()).collect(), "<eos>")
            .expect("standard vocab is well-formed")
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    /// Filler tokens usable as prompt feature tokens.
    pub fn fillers(&self) -> &[TokenId] {
        &self.fillers
    }

    pub fn token_str(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn id_of(&self, s: &str) -> Option<TokenId> {
        self.tokens.iter().position(|t| t == s)
    }

    /// Id of an option letter A..E.
    pub fn letter_id(&self, letter: char) -> Option<TokenId> {
        self.id_of(&letter.to_string())
    }

    /// Concatenate token strings; EOS renders as nothing, filler tokens
    /// drop their marker so the text reads like (degenerate) prose.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == self.eos {
                continue;
            }
            let t = &self.tokens[id];
            match t.strip_prefix('~') {
                Some(word) => out.push_str(word),
                None => out.push_str(t),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_vocab_is_dense_and_unique() {
        let v = Vocab::standard();
        assert!(v.size() >= 10);
        for i in 0..v.size() {
            assert_eq!(v.id_of(v.token_str(i)), Some(i));
        }
        assert_eq!(v.token_str(v.eos()), "<eos>");
    }

    #[test]
    fn render_produces_parseable_answer_text() {
        let v = Vocab::standard();
        let ids = vec![
            v.id_of("<answer>").unwrap(),
            v.letter_id('B').unwrap(),
            v.id_of(",").unwrap(),
            v.letter_id('D').unwrap(),
            v.id_of("</answer>").unwrap(),
            v.eos(),
        ];
        assert_eq!(v.render(&ids), "<answer>B,D</answer>");
    }

    #[test]
    fn duplicate_token_rejected() {
        let toks = vec!["a".to_string(), "a".to_string(), "<eos>".to_string()];
        assert!(Vocab::new(toks, "<eos>").is_err());
    }

    #[test]
    fn missing_eos_rejected() {
        let toks = vec!["a".to_string(), "b".to_string()];
        assert!(Vocab::new(toks, "<eos>").is_err());
    }
}
