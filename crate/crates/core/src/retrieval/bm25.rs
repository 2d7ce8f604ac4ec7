use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, IndexMode, RetrievalError, RetrievalHit};
use crate::corpus::Dataset;

const FORMAT: &str = "autoformal-bm25";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

/// Okapi BM25 index over the knowledge base.
///
/// The serialized form holds per-document term frequencies; the inverted
/// postings are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeBaseIndex {
    format: String,
    version: u32,
    pub mode: IndexMode,
    pub params: Bm25Params,
    pub doc_ids: Vec<String>,
    pub term_frequencies: Vec<BTreeMap<String, u32>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_len: f64,
    pub doc_freqs: BTreeMap<String, u32>,
    #[serde(skip)]
    postings: HashMap<String, Vec<(u32, u32)>>,
}

impl KnowledgeBaseIndex {
    /// Indexes `(id, text)` documents directly.
    pub fn from_documents<I, S, T>(docs: I, mode: IndexMode, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut doc_ids = Vec::new();
        let mut term_frequencies = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut doc_freqs: BTreeMap<String, u32> = BTreeMap::new();
        for (id, text) in docs {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            let tokens = tokenize(text.as_ref());
            doc_lengths.push(tokens.len() as u32);
            for tok in tokens {
                *tf.entry(tok).or_insert(0) += 1;
            }
            for term in tf.keys() {
                *doc_freqs.entry(term.clone()).or_insert(0) += 1;
            }
            doc_ids.push(id.into());
            term_frequencies.push(tf);
        }
        let avg_doc_len = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        let mut index = KnowledgeBaseIndex {
            format: FORMAT.to_string(),
            version: VERSION,
            mode,
            params,
            doc_ids,
            term_frequencies,
            doc_lengths,
            avg_doc_len,
            doc_freqs,
            postings: HashMap::new(),
        };
        index.rebuild_postings();
        index
    }

    fn rebuild_postings(&mut self) {
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        for (doc, tf) in self.term_frequencies.iter().enumerate() {
            for (term, &count) in tf {
                postings
                    .entry(term.clone())
                    .or_default()
                    .push((doc as u32, count));
            }
        }
        self.postings = postings;
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Floored Robertson-Sparck-Jones IDF. Zero for unseen terms.
    pub fn idf(&self, term: &str) -> f64 {
        let df = match self.doc_freqs.get(term) {
            Some(&df) => df as f64,
            None => return 0.0,
        };
        let n = self.len() as f64;
        ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    /// BM25 score of `query` against every document, in index order.
    /// Repeated query terms count once per occurrence.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        let Bm25Params { k1, b } = self.params;
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            if idf == 0.0 {
                continue;
            }
            for &(doc, tf) in list {
                let tf = tf as f64;
                let dl = self.doc_lengths[doc as usize] as f64;
                let norm = if self.avg_doc_len > 0.0 {
                    1.0 - b + b * dl / self.avg_doc_len
                } else {
                    1.0
                };
                scores[doc as usize] += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        scores
    }

    pub fn score(&self, query: &str, doc_id: &str) -> Option<f64> {
        let pos = self.doc_ids.iter().position(|d| d == doc_id)?;
        Some(self.score_all(query)[pos])
    }
}

/// Indexes the training split. Training items with an empty comment are
/// left out: they cannot serve as (comment, statement) exemplars.
pub fn build_index(
    dataset: &Dataset,
    mode: IndexMode,
    params: Bm25Params,
) -> Result<KnowledgeBaseIndex, RetrievalError> {
    let docs: Vec<(String, String)> = dataset
        .train()
        .filter(|item| !item.comment.trim().is_empty())
        .map(|item| (item.id.clone(), mode.document(item)))
        .collect();
    if docs.is_empty() {
        return Err(RetrievalError::EmptyTrainSplit);
    }
    Ok(KnowledgeBaseIndex::from_documents(docs, mode, params))
}

/// Top-`k` documents by score, ties broken by ascending id. Documents
/// with zero score are still returned when fewer than `k` score higher.
pub fn retrieve(
    index: &KnowledgeBaseIndex,
    query: &str,
    k: usize,
) -> Result<Vec<RetrievalHit>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let scores = index.score_all(query);
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| index.doc_ids[a].cmp(&index.doc_ids[b]))
    });
    Ok(order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, doc)| RetrievalHit {
            item_id: index.doc_ids[doc].clone(),
            score: scores[doc],
            rank: rank + 1,
        })
        .collect())
}

pub fn save_index(index: &KnowledgeBaseIndex, path: &Path) -> Result<(), RetrievalError> {
    let json = serde_json::to_string(index).map_err(|e| RetrievalError::Format(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<KnowledgeBaseIndex, RetrievalError> {
    let text = fs::read_to_string(path)?;
    let mut index: KnowledgeBaseIndex =
        serde_json::from_str(&text).map_err(|e| RetrievalError::Format(e.to_string()))?;
    if index.format != FORMAT || index.version != VERSION {
        return Err(RetrievalError::Format(format!(
            "unsupported index format {} v{}",
            index.format, index.version
        )));
    }
    if index.term_frequencies.len() != index.doc_ids.len()
        || index.doc_lengths.len() != index.doc_ids.len()
    {
        return Err(RetrievalError::Format("inconsistent document arrays".into()));
    }
    index.rebuild_postings();
    Ok(index)
}
