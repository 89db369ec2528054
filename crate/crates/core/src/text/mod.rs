//! Tokenization, stemming, stopwords, and the token vocabulary.
//!
//! Two normalization pipelines share the tokenizer:
//! * neural path: [`tokenize`] only, so embeddings and the lexical match
//!   matrix see the same surface tokens;
//! * lexical path: [`lexical_terms`], which drops stopwords and stems.

mod porter;
mod stopwords;

pub use porter::stem;
pub use stopwords::{is_stopword, STOPWORDS};

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::Result;

/// Id reserved for padding positions.
pub const PAD_ID: usize = 0;
/// Id assigned to tokens absent from the vocabulary.
pub const UNK_ID: usize = 1;

/// Lowercase and split on non-alphanumeric characters. Digits and letters
/// inside one run stay together ("36in" is a single token).
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Lexical-path terms: tokenized, stopwords removed, Porter-stemmed.
pub fn lexical_terms(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| stem(&t))
        .collect()
}

/// Token-to-id mapping for the neural path.
///
/// Ids 0 and 1 are reserved for PAD and UNK; real tokens start at 2,
/// ordered by descending corpus frequency with ties broken by token text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Build from an iterator of token streams, keeping tokens that occur
    /// at least `min_count` times.
    pub fn build<'a, I, S>(streams: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for stream in streams {
            for token in stream {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, n)| n >= min_count)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Assemble from an ordered token list (as produced by [`Vocab::build`]
    /// or read back from disk).
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let tokens: Vec<String> = tokens.into_iter().collect();
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 2))
            .collect();
        Vocab { tokens, ids }
    }

    /// Total id space including PAD and UNK; embedding tables use this as
    /// their row count.
    pub fn len(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id for `token`, or [`UNK_ID`] when unknown.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    /// One token per line; line `i` holds the token with id `i + 2`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for token in &self.tokens {
            writeln!(out, "{token}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut tokens = Vec::new();
        for line in reader.lines() {
            tokens.push(line?);
        }
        Ok(Self::from_tokens(tokens))
    }
}

/// Fixed-length id sequence: `ids` has exactly `max_len` entries, the first
/// `len` are real tokens and the rest are PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub len: usize,
}

impl TokenSeq {
    /// True sequence positions, excluding padding.
    pub fn real(&self) -> &[usize] {
        &self.ids[..self.len]
    }
}

/// Map tokens to ids, truncating to `max_len` and padding the tail.
pub fn encode_ids(tokens: &[String], vocab: &Vocab, max_len: usize) -> TokenSeq {
    let len = tokens.len().min(max_len);
    let mut ids = vec![PAD_ID; max_len];
    for (slot, token) in ids.iter_mut().zip(tokens.iter().take(max_len)) {
        *slot = vocab.id(token);
    }
    TokenSeq { ids, len }
}
