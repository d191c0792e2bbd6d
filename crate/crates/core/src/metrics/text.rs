//! N-gram and LCS overlap metrics over normalized tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Lower-cases, turns every non-alphanumeric character into a separator, and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Size of an overlap between a candidate and a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub overlap: usize,
    pub reference_total: usize,
    pub candidate_total: usize,
}

impl OverlapCounts {
    pub fn score(&self) -> RougeScore {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        RougeScore::from_parts(
            ratio(self.overlap, self.reference_total),
            ratio(self.overlap, self.candidate_total),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_parts(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        RougeScore { recall, precision, f1 }
    }
}

/// Clipped n-gram overlap: each n-gram counts at most as often as it occurs
/// on the other side.
pub fn ngram_overlap(candidate: &[String], reference: &[String], n: usize) -> OverlapCounts {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(gram, c)| refs.get(gram).map_or(0, |r| (*c).min(*r)))
        .sum();
    OverlapCounts {
        overlap,
        reference_total: refs.values().sum(),
        candidate_total: cand.values().sum(),
    }
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    ngram_overlap(&tokenize(candidate), &tokenize(reference), n).score()
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) memory.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn lcs_overlap(candidate: &[String], reference: &[String]) -> OverlapCounts {
    OverlapCounts {
        overlap: lcs_len(candidate, reference),
        reference_total: reference.len(),
        candidate_total: candidate.len(),
    }
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    lcs_overlap(&tokenize(candidate), &tokenize(reference)).score()
}

pub const BLEU_MAX_ORDER: usize = 4;

/// Sentence BLEU-4 against a single reference.
///
/// Each order's precision is clipped matches over candidate n-grams; an order
/// with zero matches uses `1 / (total + 1)` instead. The geometric mean is
/// scaled by the brevity penalty `min(1, exp(1 - |ref| / |cand|))`.
pub fn bleu_tokens(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let counts = ngram_overlap(candidate, reference, n);
        let precision = if counts.overlap > 0 {
            counts.overlap as f64 / counts.candidate_total as f64
        } else {
            1.0 / (counts.candidate_total as f64 + 1.0)
        };
        log_sum += precision.ln();
    }
    let geo = (log_sum / BLEU_MAX_ORDER as f64).exp();
    let ratio = reference.len() as f64 / candidate.len() as f64;
    let brevity = (1.0 - ratio).exp().min(1.0);
    (geo * brevity).clamp(0.0, 1.0)
}

pub fn bleu(candidate: &str, reference: &str) -> f64 {
    bleu_tokens(&tokenize(candidate), &tokenize(reference))
}
