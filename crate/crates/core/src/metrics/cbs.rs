use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::MetricError;
use crate::retrieval::tokenize;

/// Maps each token to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricError>;
}

/// Deterministic pseudo-random token vectors derived from SHA-256.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64 }
    }
}

impl Embedder for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricError> {
        Ok(tokens
            .iter()
            .map(|t| {
                let mut v = Vec::with_capacity(self.dim);
                let mut block = 0u32;
                while v.len() < self.dim {
                    let digest = Sha256::new()
                        .chain_update(block.to_le_bytes())
                        .chain_update(t.as_bytes())
                        .finalize();
                    for pair in digest.chunks(2) {
                        if v.len() == self.dim {
                            break;
                        }
                        let x = u16::from_le_bytes([pair[0], pair[1]]) as f64;
                        v.push(x / 32767.5 - 1.0);
                    }
                    block += 1;
                }
                v
            })
            .collect())
    }
}

/// One-hot vectors over a fixed vocabulary; unknown tokens are an error.
#[derive(Debug, Clone)]
pub struct OneHotEmbedder {
    index: HashMap<String, usize>,
}

impl OneHotEmbedder {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(vocab: I) -> Self {
        let mut index = HashMap::new();
        for t in vocab {
            let n = index.len();
            index.entry(t.into()).or_insert(n);
        }
        OneHotEmbedder { index }
    }
}

impl Embedder for OneHotEmbedder {
    fn name(&self) -> &str {
        "one-hot"
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricError> {
        tokens
            .iter()
            .map(|t| {
                let i = self
                    .index
                    .get(t)
                    .ok_or_else(|| MetricError::Embedding(format!("token `{t}` not in vocabulary")))?;
                let mut v = vec![0.0; self.index.len()];
                v[*i] = 1.0;
                Ok(v)
            })
            .collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy-matching F1 over token embeddings, on vectors already computed.
pub fn cbs_vectors(reference: &[Vec<f64>], candidate: &[Vec<f64>]) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let best = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.iter()
            .map(|u| to.iter().map(|v| cosine(u, v)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    let p = best(candidate, reference);
    let r = best(reference, candidate);
    if p + r <= 0.0 {
        return 0.0;
    }
    (100.0 * 2.0 * p * r / (p + r)).clamp(0.0, 100.0)
}

/// Embedding similarity between two statements (0–100).
pub fn cbs(embedder: &dyn Embedder, reference: &str, candidate: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let c = tokenize(candidate);
    let rv = embedder.embed(&r)?;
    let cv = embedder.embed(&c)?;
    Ok(cbs_vectors(&rv, &cv))
}
