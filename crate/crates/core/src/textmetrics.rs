//! Tokenization and lexical overlap metrics (ROUGE-1 F1, ROUGE-L precision,
//! abstractiveness).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextMetricError {
    #[error("candidate token sequence is empty")]
    EmptyCandidate,
}

/// Lowercased word tokens derived from a text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Space-joined form; tokenizing it again yields the same sequence.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(iter.into_iter().map(Into::into).collect())
    }
}

// Curly quotes, dashes and ellipsis show up in news text; everything else
// counted as punctuation is ASCII.
const EXTRA_PUNCTUATION: &[char] = &[
    '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{2013}', '\u{2014}', '\u{2026}', '\u{00AB}',
    '\u{00BB}', '\u{00BF}', '\u{00A1}',
];

pub(crate) fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCTUATION.contains(&c)
}

/// Lowercases, splits on whitespace and strips leading/trailing punctuation
/// from each piece; pieces that end up empty are dropped.
pub fn tokenize(text: &str) -> TokenSequence {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.trim_matches(is_punctuation))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &TokenSequence) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens.iter() {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

/// Unigram F1 with clipped counts. Zero when either side is empty or nothing
/// overlaps.
pub fn rouge1_f1(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let cand = counts(candidate);
    let refc = counts(reference);
    let overlap: usize = cand
        .iter()
        .map(|(tok, &n)| n.min(refc.get(tok).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / candidate.len() as f64;
    let recall = overlap as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Length of the longest common (not necessarily contiguous) subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // single rolling row over b
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

#[allow(non_snake_case)]
pub fn rougeL_precision(candidate: &TokenSequence, reference: &TokenSequence) -> Result<f64, TextMetricError> {
    if candidate.is_empty() {
        return Err(TextMetricError::EmptyCandidate);
    }
    Ok(lcs_len(candidate.tokens(), reference.tokens()) as f64 / candidate.len() as f64)
}

/// `1 - ROUGE-L precision` of the summary against its source.
pub fn abstractiveness(summary: &str, source: &str) -> Result<f64, TextMetricError> {
    Ok(1.0 - rougeL_precision(&tokenize(summary), &tokenize(source))?)
}
