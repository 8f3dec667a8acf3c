//! Tokenizers shared across the pipeline.
//!
//! Two different tokenizations are in play. Length accounting (clause caps,
//! model-length caps, percentiles) counts whitespace-separated tokens. Lexical
//! matching (the sparse index and the classifier features) lowercases and
//! splits on runs of non-alphanumeric characters.

use serde::{Deserialize, Serialize};

/// Token-counting policy used for length caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenizer {
    #[default]
    Whitespace,
}

impl Tokenizer {
    pub fn name(&self) -> &'static str {
        match self {
            Tokenizer::Whitespace => "whitespace",
        }
    }

    pub fn tokens<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().collect(),
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().count(),
        }
    }
}

/// Lowercased alphanumeric word runs.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Word n-grams of length 1..=`max_n`, unigrams first, joined by single spaces.
pub fn ngrams(text: &str, max_n: usize) -> Vec<String> {
    let words = words(text);
    let mut out = Vec::with_capacity(words.len() * max_n.max(1));
    for n in 1..=max_n.max(1) {
        if n > words.len() {
            break;
        }
        for window in words.windows(n) {
            out.push(window.join(" "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_split_on_punctuation_and_lowercase() {
        assert_eq!(words("Fees, payable [SEP] Monthly."), vec!["fees", "payable", "sep", "monthly"]);
        assert!(words("  --  ").is_empty());
    }

    #[test]
    fn ngrams_emit_unigrams_then_bigrams() {
        assert_eq!(ngrams("x y z", 2), vec!["x", "y", "z", "x y", "y z"]);
        assert_eq!(ngrams("solo", 2), vec!["solo"]);
    }

    #[test]
    fn whitespace_counts_ignore_runs() {
        assert_eq!(Tokenizer::Whitespace.count("a  b\tc\n"), 3);
    }
}
