//! Corpus-level BLEU: modified (clipped) n-gram precision up to order 4,
//! geometric mean, and the brevity penalty. Unsmoothed by construction: any
//! zero precision zeroes the score, and the per-order values are reported
//! so a smoothing variant can be recomputed offline.

use std::collections::HashMap;

pub const MAX_ORDER: usize = 4;

/// Clipped n-gram match statistics at one order, corpus-aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClippedPrecision {
    pub matches: usize,
    pub total: usize,
}

impl ClippedPrecision {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matches as f64 / self.total as f64
        }
    }

    /// True when the candidate corpus has no n-grams at this order at all.
    pub fn undefined(&self) -> bool {
        self.total == 0
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Corpus-aggregated clipped precision: sum over sentences of clipped
/// n-gram matches divided by the sum of candidate n-gram counts.
pub fn clipped_precision<C, R, S>(candidates: &[C], references: &[R], n: usize) -> ClippedPrecision
where
    C: AsRef<[S]>,
    R: AsRef<[S]>,
    S: AsRef<str>,
{
    assert_eq!(candidates.len(), references.len());
    let mut matches = 0;
    let mut total = 0;
    for (cand, reference) in candidates.iter().zip(references) {
        let cand_counts = ngram_counts(cand.as_ref(), n);
        let ref_counts = ngram_counts(reference.as_ref(), n);
        for (gram, &count) in &cand_counts {
            total += count;
            matches += count.min(ref_counts.get(gram).copied().unwrap_or(0));
        }
    }
    ClippedPrecision { matches, total }
}

/// BLEU brevity penalty: 1 when the candidate corpus is at least as long as
/// the reference corpus, otherwise exp(1 - r/c).
pub fn brevity_penalty(c_len: usize, r_len: usize) -> f64 {
    assert!(c_len > 0, "brevity penalty is undefined for empty candidates");
    if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    }
}

/// Full corpus-level BLEU decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuResult {
    /// Clipped precisions p_1..p_4.
    pub precisions: [ClippedPrecision; MAX_ORDER],
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
    /// Percentage in [0, 100]; 0 when any order is empty or unmatched.
    pub score: f64,
    /// Raised when the candidate corpus is empty or an order had no
    /// candidate n-grams.
    pub flagged: bool,
}

/// Corpus BLEU over aligned single-reference corpora.
pub fn corpus_bleu<C, R, S>(candidates: &[C], references: &[R]) -> BleuResult
where
    C: AsRef<[S]>,
    R: AsRef<[S]>,
    S: AsRef<str>,
{
    assert!(!candidates.is_empty(), "corpus must contain at least one pair");
    let precisions: Vec<ClippedPrecision> = (1..=MAX_ORDER)
        .map(|n| clipped_precision(candidates, references, n))
        .collect();
    let precisions: [ClippedPrecision; MAX_ORDER] = precisions.try_into().unwrap();

    let candidate_len: usize = candidates.iter().map(|c| c.as_ref().len()).sum();
    let reference_len: usize = references.iter().map(|r| r.as_ref().len()).sum();

    let flagged = candidate_len == 0 || precisions.iter().any(ClippedPrecision::undefined);
    let bp = if candidate_len == 0 {
        0.0
    } else {
        brevity_penalty(candidate_len, reference_len)
    };

    let score = if candidate_len == 0 || precisions.iter().any(|p| p.matches == 0) {
        0.0
    } else {
        let log_mean = precisions
            .iter()
            .map(|p| p.fraction().ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        100.0 * bp * log_mean.exp()
    };

    BleuResult {
        precisions,
        brevity_penalty: bp,
        candidate_len,
        reference_len,
        score,
        flagged,
    }
}
