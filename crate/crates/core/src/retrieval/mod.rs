//! Most-similar exemplar retrieval: a BM25 index over the training split and
//! top-k lookup for a query built from an item's comment.

mod bm25;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bm25::{build_index, load_index, retrieve, save_index, Bm25Params, KnowledgeBaseIndex};
pub use tokenize::tokenize;

use crate::corpus::{CorpusItem, Dataset};
use crate::prompts::Exemplar;

/// Which item fields are concatenated into an indexed document, in the
/// fixed order comment, informalization, statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexMode {
    pub use_comment: bool,
    pub use_informalization: bool,
    pub use_statement: bool,
}

impl IndexMode {
    pub const T: IndexMode = IndexMode::new_unchecked(true, false, false);
    pub const TS: IndexMode = IndexMode::new_unchecked(true, false, true);
    pub const IS: IndexMode = IndexMode::new_unchecked(false, true, true);
    pub const TIS: IndexMode = IndexMode::new_unchecked(true, true, true);

    const fn new_unchecked(t: bool, i: bool, s: bool) -> Self {
        IndexMode {
            use_comment: t,
            use_informalization: i,
            use_statement: s,
        }
    }

    pub fn new(
        use_comment: bool,
        use_informalization: bool,
        use_statement: bool,
    ) -> Result<Self, RetrievalError> {
        if !(use_comment || use_informalization || use_statement) {
            return Err(RetrievalError::InvalidMode("no field selected".into()));
        }
        Ok(Self::new_unchecked(
            use_comment,
            use_informalization,
            use_statement,
        ))
    }

    /// The document text indexed for `item` under this mode.
    pub fn document(&self, item: &CorpusItem) -> String {
        let mut parts: Vec<&str> = Vec::with_capacity(3);
        if self.use_comment {
            parts.push(&item.comment);
        }
        if self.use_informalization {
            parts.push(item.informalization.as_deref().unwrap_or(""));
        }
        if self.use_statement {
            parts.push(&item.formal_statement);
        }
        parts.join(" ")
    }
}

impl fmt::Display for IndexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.use_comment {
            parts.push("T");
        }
        if self.use_informalization {
            parts.push("I");
        }
        if self.use_statement {
            parts.push("S");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for IndexMode {
    type Err = RetrievalError;

    /// Accepts `T`, `TS`, `IS`, `TIS` and the `+`-separated spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let letters: String = s
            .chars()
            .filter(|c| *c != '+' && !c.is_whitespace())
            .collect();
        let (mut t, mut i, mut st) = (false, false, false);
        for c in letters.chars() {
            let flag = match c.to_ascii_uppercase() {
                'T' => &mut t,
                'I' => &mut i,
                'S' => &mut st,
                _ => return Err(RetrievalError::InvalidMode(s.to_string())),
            };
            if *flag {
                return Err(RetrievalError::InvalidMode(s.to_string()));
            }
            *flag = true;
        }
        IndexMode::new(t, i, st).map_err(|_| RetrievalError::InvalidMode(s.to_string()))
    }
}

impl Serialize for QueryMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for QueryMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Query construction: the item's comment, optionally followed by a
/// zero-shot formalization of it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct QueryMode {
    pub augment_with_zero_shot: bool,
}

impl QueryMode {
    pub const T: QueryMode = QueryMode {
        augment_with_zero_shot: false,
    };
    pub const T_ZS: QueryMode = QueryMode {
        augment_with_zero_shot: true,
    };
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.augment_with_zero_shot {
            "T+ZS"
        } else {
            "T"
        })
    }
}

impl FromStr for QueryMode {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace(['+', ' '], "").to_ascii_uppercase().as_str() {
            "T" => Ok(QueryMode::T),
            "TZS" => Ok(QueryMode::T_ZS),
            _ => Err(RetrievalError::InvalidMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub item_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("the dataset has no usable training items to index")]
    EmptyTrainSplit,
    #[error("the index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid retrieval mode `{0}`")]
    InvalidMode(String),
    #[error("query mode T+ZS needs a zero-shot formalization")]
    MissingZeroShot,
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Builds the retrieval query text for `item`. With zero-shot augmentation
/// the formalization is appended after a newline.
pub fn make_query(
    item: &CorpusItem,
    mode: QueryMode,
    zero_shot: Option<&str>,
) -> Result<String, RetrievalError> {
    if !mode.augment_with_zero_shot {
        return Ok(item.comment.clone());
    }
    let zs = zero_shot.ok_or(RetrievalError::MissingZeroShot)?;
    Ok(format!("{}\n{}", item.comment, zs))
}

/// Resolves hits to (comment, statement) exemplars in rank order. Hits whose
/// item is missing from `dataset` are skipped.
pub fn exemplars_for(hits: &[RetrievalHit], dataset: &Dataset) -> Vec<Exemplar> {
    let by_id = dataset.index_by_id();
    hits.iter()
        .filter_map(|h| by_id.get(h.item_id.as_str()))
        .filter_map(|item| {
            Exemplar::new(&item.comment, &item.formal_statement)
                .ok()
                .map(|e| e.with_source(&item.id))
        })
        .collect()
}
