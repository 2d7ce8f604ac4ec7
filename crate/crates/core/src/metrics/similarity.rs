use std::collections::HashMap;
use std::hash::Hash;

use super::MetricError;
use crate::retrieval::tokenize;

/// Added to zero n-gram match counts.
pub const BLEU_EPSILON: f64 = 1e-9;
pub const CHRF_MAX_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 3.0;

fn ngram_counts<T: Eq + Hash + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for w in items.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

fn clipped_matches<T: Eq + Hash + Clone>(reference: &[T], candidate: &[T], n: usize) -> usize {
    let refs = ngram_counts(reference, n);
    ngram_counts(candidate, n)
        .into_iter()
        .map(|(g, c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Sufficient statistics of BLEU-2 for one or more sentence pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; 2],
    pub totals: [usize; 2],
    /// Reference n-gram counts, used to tell whether an order exists at all.
    pub ref_totals: [usize; 2],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn from_tokens(reference: &[String], candidate: &[String]) -> Self {
        let mut s = BleuStats {
            candidate_len: candidate.len(),
            reference_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=2 {
            s.matches[n - 1] = clipped_matches(reference, candidate, n);
            s.totals[n - 1] = candidate.len().saturating_sub(n - 1);
            s.ref_totals[n - 1] = reference.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..2 {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
            self.ref_totals[n] += other.ref_totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// Uniform weights over the orders present in either side; an order
    /// with no n-grams on both sides (one-token texts) is left out.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..2 {
            if self.totals[n] == 0 && self.ref_totals[n] == 0 {
                continue;
            }
            let matches = if self.matches[n] == 0 {
                BLEU_EPSILON
            } else {
                self.matches[n] as f64
            };
            log_sum += (matches / self.totals[n].max(1) as f64).ln();
            orders += 1;
        }
        let c = self.candidate_len as f64;
        let r = self.reference_len as f64;
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * (log_sum / orders as f64).exp()
    }
}

/// Sentence-level BLEU-2 over the shared tokenizer.
pub fn bleu2(reference: &str, candidate: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(BleuStats::from_tokens(&r, &tokenize(candidate)).score())
}

/// Corpus-level BLEU-2: statistics summed over all pairs before scoring.
pub fn corpus_bleu2(pairs: &[(&str, &str)]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::InsufficientData);
    }
    let mut total = BleuStats::default();
    for (reference, candidate) in pairs {
        let r = tokenize(reference);
        if r.is_empty() {
            return Err(MetricError::EmptyReference);
        }
        total.add(&BleuStats::from_tokens(&r, &tokenize(candidate)));
    }
    Ok(total.score())
}

/// Character n-gram F-score (orders 1–6, beta 3), whitespace removed.
/// Precision and recall are averaged over the orders that have at least
/// one match.
pub fn chrf(reference: &str, candidate: &str) -> Result<f64, MetricError> {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let c: Vec<char> = candidate.chars().filter(|c| !c.is_whitespace()).collect();
    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0);
    for n in 1..=CHRF_MAX_ORDER {
        let m = clipped_matches(&r, &c, n);
        if m == 0 {
            continue;
        }
        p_sum += m as f64 / (c.len() + 1 - n) as f64;
        r_sum += m as f64 / (r.len() + 1 - n) as f64;
        orders += 1;
    }
    if orders == 0 {
        return Ok(0.0);
    }
    let p = p_sum / orders as f64;
    let rc = r_sum / orders as f64;
    let b2 = CHRF_BETA * CHRF_BETA;
    Ok(100.0 * (1.0 + b2) * p * rc / (b2 * p + rc))
}

/// Unit-cost character edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit-distance similarity; two empty strings score 100.
pub fn ruby(reference: &str, candidate: &str) -> f64 {
    let longest = reference.chars().count().max(candidate.chars().count());
    if longest == 0 {
        return 100.0;
    }
    100.0 * (1.0 - levenshtein(reference, candidate) as f64 / longest as f64)
}
