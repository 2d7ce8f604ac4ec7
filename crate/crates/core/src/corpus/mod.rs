//! Formal library items extracted from Isabelle/ZF theory files, and the
//! train/test dataset built from them.

mod dataset;
mod parser;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use dataset::{
    build_dataset, extract_dir, informalize_corpus, load_dataset, save_dataset, Dataset,
    InformalizeOptions, InformalizeSummary,
};
pub use parser::{has_top_level_proof_keyword, parse_theory_file, starts_with_item_keyword};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Lemma,
    Theorem,
    Corollary,
    Definition,
}

impl ItemKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ItemKind::Lemma => "lemma",
            ItemKind::Theorem => "theorem",
            ItemKind::Corollary => "corollary",
            ItemKind::Definition => "definition",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "lemma" => Some(ItemKind::Lemma),
            "theorem" => Some(ItemKind::Theorem),
            "corollary" => Some(ItemKind::Corollary),
            "definition" => Some(ItemKind::Definition),
            _ => None,
        }
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

/// One formal library item: its statement, the natural-language comment that
/// precedes it in the theory file, and an optional machine informalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub kind: ItemKind,
    pub locale: Option<String>,
    pub name: String,
    /// Header through the last statement clause; never includes the proof.
    pub formal_statement: String,
    pub comment: String,
    pub proof: Option<String>,
    pub informalization: Option<String>,
    pub source_file: String,
    pub split: Split,
}

impl CorpusItem {
    /// Items without an attached text block are kept but flagged.
    pub fn is_flagged(&self) -> bool {
        self.comment.trim().is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{file}:{line}: malformed theory: {message}")]
    MalformedTheory {
        file: String,
        line: usize,
        message: String,
    },
    #[error("cannot build a dataset from an empty corpus")]
    EmptyCorpus,
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidSplitRatio(f64),
    #[error("duplicate item id `{0}`")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}
