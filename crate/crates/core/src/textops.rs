//! Word-level tokenization and Levenshtein distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered sequence of whitespace-free word tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Builds a sequence from pre-split tokens, rejecting empty tokens and
    /// tokens containing whitespace.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Domain(format!("token {i} ({t:?}) is empty or contains whitespace")));
            }
        }
        Ok(TokenSeq(tokens))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

/// Splits on runs of whitespace. Punctuation stays attached to its word.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(text.split_whitespace().map(str::to_owned).collect())
}

/// Minimal number of token insertions, deletions and substitutions turning
/// `a` into `b`. Two-row dynamic program, unit costs.
pub fn edit_distance<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta.as_ref() != tb.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `edit_distance(original, revised) / len(original)`. Values above 1 are
/// legal when the revision is longer than the original.
pub fn edit_ratio<S: AsRef<str>>(original: &[S], revised: &[S]) -> Result<f64> {
    if original.is_empty() {
        return Err(Error::Domain("edit ratio of an empty original".into()));
    }
    Ok(edit_distance(original, revised) as f64 / original.len() as f64)
}
