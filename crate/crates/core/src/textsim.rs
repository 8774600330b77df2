//! Lexical similarity between candidate texts.
//!
//! Tokenization is deliberately plain: Unicode lowercase, split on Unicode
//! whitespace, punctuation left attached to its word, no stemming. The
//! lexical half of the hybrid utility is the ROUGE-L F1 score over those
//! tokens.

use std::ops::Deref;

/// Case-folded tokens of one text, in order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

impl Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.tokens
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

pub fn tokenize(text: &str) -> TokenSequence {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(min) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y {
                diag + 1
            } else {
                above.max(row[j])
            };
            diag = above;
        }
    }
    row[short.len()]
}

/// ROUGE-L F1 between two token sequences.
///
/// Returns 0 when either side is empty (including empty vs empty) or when
/// they share no subsequence.
pub fn rouge_l(a: &TokenSequence, b: &TokenSequence) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(a, b);
    if lcs == 0 {
        return 0.0;
    }
    let lcs = lcs as f64;
    let precision = lcs / b.len() as f64;
    let recall = lcs / a.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
