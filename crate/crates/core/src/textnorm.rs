//! Tokenization shared by the lexical metrics and the rule labeler.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    pub lowercase: bool,
    /// Emit every punctuation character as its own token.
    pub split_punctuation: bool,
    /// Characters deleted before splitting.
    pub strip_chars: BTreeSet<char>,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            lowercase: true,
            split_punctuation: true,
            strip_chars: BTreeSet::new(),
        }
    }
}

impl NormConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.strip_chars.iter().find(|c| c.is_alphanumeric()) {
            return Err(Error::Config(format!(
                "tokenizer.strip_chars must not contain alphanumeric characters (found {c:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
    source_length: usize,
}

impl TokenSequence {
    /// Builds a sequence from pre-split tokens. Empty tokens are dropped and
    /// tokens containing whitespace are split further.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        let mut source_length = 0;
        for t in tokens {
            let t = t.as_ref();
            source_length += t.chars().count();
            out.extend(t.split_whitespace().map(str::to_owned));
        }
        TokenSequence {
            tokens: out,
            source_length,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Character count of the text the sequence was built from.
    pub fn source_length(&self) -> usize {
        self.source_length
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn tokenize(text: &str, config: &NormConfig) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();

    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if !current.is_empty() {
            tokens.push(std::mem::take(current));
        }
    };

    for c in text.chars() {
        if config.strip_chars.contains(&c) {
            continue;
        }
        if c.is_whitespace() {
            flush(&mut current, &mut tokens);
        } else if config.split_punctuation && is_punct(c) {
            flush(&mut current, &mut tokens);
            tokens.push(c.to_string());
        } else if config.lowercase {
            current.extend(c.to_lowercase());
        } else {
            current.push(c);
        }
    }
    flush(&mut current, &mut tokens);

    TokenSequence {
        tokens,
        source_length: text.chars().count(),
    }
}

/// Counts every contiguous window of `n` tokens. Panics if `n == 0`.
pub fn ngrams(seq: &TokenSequence, n: usize) -> HashMap<&[String], usize> {
    assert!(n >= 1, "n-gram order must be at least 1");
    let mut counts = HashMap::new();
    for window in seq.tokens().windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}
