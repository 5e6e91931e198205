//! Question-text vocabulary and tokenization.
//!
//! Tokens are lowercase, split on whitespace with punctuation separated
//! into its own tokens. Index 0 is reserved for padding and index 1 for
//! out-of-vocabulary tokens; the remaining tokens are sorted so the
//! mapping is deterministic for a given training corpus.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Splits a question into lowercase word and punctuation tokens.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Token table built from training-split question texts (originals and
/// paraphrases alike).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextVocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TextVocab {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> TextVocab {
        let mut unique = BTreeSet::new();
        for text in texts {
            for token in split_tokens(text) {
                unique.insert(token);
            }
        }
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(unique);
        TextVocab::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> TextVocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TextVocab { tokens, index }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Token index sequence padded or truncated to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub indices: Vec<usize>,
    /// Number of real (non-padding) positions; always `>= 1`.
    pub len: usize,
}

/// Encodes a question against `vocab`, mapping unknown tokens to
/// [`UNK_INDEX`], truncating to `max_len`, and padding with [`PAD_INDEX`].
pub fn tokenize(text: &str, vocab: &TextVocab, max_len: usize) -> TokenSeq {
    let mut indices: Vec<usize> = split_tokens(text)
        .iter()
        .take(max_len)
        .map(|t| vocab.index_of(t).unwrap_or(UNK_INDEX))
        .collect();
    let len = indices.len().max(1);
    if indices.is_empty() {
        indices.push(UNK_INDEX);
    }
    indices.resize(max_len, PAD_INDEX);
    TokenSeq { indices, len }
}
