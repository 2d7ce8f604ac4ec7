use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_theory_file, starts_with_item_keyword, CorpusError, CorpusItem, Split};
use crate::llm::{CompletionProvider, CompletionRequest, DecodingConfig};
use crate::prompts::render_informalization;

const FORMAT: &str = "mathlibform";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<CorpusItem>,
    pub split_seed: u64,
    /// Fraction of items assigned to the training split.
    pub split_ratio: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    split_seed: u64,
    split_ratio: f64,
}

impl Dataset {
    pub fn train(&self) -> impl Iterator<Item = &CorpusItem> {
        self.items.iter().filter(|i| i.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &CorpusItem> {
        self.items.iter().filter(|i| i.split == Split::Test)
    }

    pub fn get(&self, id: &str) -> Option<&CorpusItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn index_by_id(&self) -> HashMap<&str, &CorpusItem> {
        self.items.iter().map(|i| (i.id.as_str(), i)).collect()
    }
}

/// Shuffles `items` deterministically under `seed` and assigns the first
/// `round(ratio * n)` shuffled items to the training split, the rest to test.
/// Items keep their original order in the returned dataset.
pub fn build_dataset(
    mut items: Vec<CorpusItem>,
    split_ratio: f64,
    seed: u64,
) -> Result<Dataset, CorpusError> {
    if items.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(CorpusError::InvalidSplitRatio(split_ratio));
    }
    let mut seen = HashSet::new();
    for item in &items {
        if !seen.insert(item.id.as_str()) {
            return Err(CorpusError::DuplicateId(item.id.clone()));
        }
    }

    let n = items.len();
    let n_train = (split_ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (rank, &idx) in order.iter().enumerate() {
        items[idx].split = if rank < n_train {
            Split::Train
        } else {
            Split::Test
        };
    }
    Ok(Dataset {
        items,
        split_seed: seed,
        split_ratio,
    })
}

/// Parses every `.thy` file below `dir` (sorted by path) into one item list.
pub fn extract_dir(dir: &Path) -> Result<Vec<CorpusItem>, CorpusError> {
    let mut files = Vec::new();
    collect_theories(dir, &mut files)?;
    files.sort();
    let parsed: Vec<Result<Vec<CorpusItem>, CorpusError>> = files
        .par_iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?;
            let name = path
                .strip_prefix(dir)
                .unwrap_or(path)
                .to_string_lossy()
                .replace('\\', "/");
            parse_theory_file(&text, &name)
        })
        .collect();
    let mut items = Vec::new();
    for file_items in parsed {
        items.extend(file_items?);
    }
    Ok(items)
}

fn collect_theories(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_dir() {
            collect_theories(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "thy") {
            out.push(path);
        }
    }
    Ok(())
}

/// Writes a header line followed by one JSON object per item.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        split_seed: dataset.split_seed,
        split_ratio: dataset.split_ratio,
    };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for item in &dataset.items {
        serde_json::to_writer(&mut out, item).expect("item serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text)
}

fn parse_dataset(text: &str) -> Result<Dataset, CorpusError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(CorpusError::Schema {
        line: 1,
        message: "missing dataset header".into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| CorpusError::Schema {
        line: 1,
        message: format!("invalid dataset header: {e}"),
    })?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CorpusError::Schema {
            line: 1,
            message: format!(
                "unsupported dataset format {} v{}",
                header.format, header.version
            ),
        });
    }

    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let schema = |message: String| CorpusError::Schema {
            line: line_no,
            message,
        };
        let item: CorpusItem = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        if item.formal_statement.trim().is_empty() {
            return Err(schema("formal_statement is empty".into()));
        }
        if starts_with_item_keyword(&item.formal_statement) != Some(item.kind) {
            return Err(schema(format!(
                "formal_statement of `{}` does not begin with `{}`",
                item.id, item.kind
            )));
        }
        if !seen.insert(item.id.clone()) {
            return Err(schema(format!("duplicate item id `{}`", item.id)));
        }
        items.push(item);
    }
    Ok(Dataset {
        items,
        split_seed: header.split_seed,
        split_ratio: header.split_ratio,
    })
}

#[derive(Debug, Clone, Default)]
pub struct InformalizeOptions {
    /// Overwrite informalizations that are already present.
    pub force: bool,
    pub decoding: DecodingConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InformalizeSummary {
    pub populated: usize,
    pub skipped: usize,
    /// `(item id, error message)` for items the provider failed on.
    pub failures: Vec<(String, String)>,
}

/// Fills each item's informalization from the informalization prompt.
/// Provider failures leave the item untouched and are reported; the run
/// carries on with the next item.
pub fn informalize_corpus(
    dataset: &mut Dataset,
    provider: &dyn CompletionProvider,
    options: &InformalizeOptions,
) -> InformalizeSummary {
    let mut summary = InformalizeSummary::default();
    for item in &mut dataset.items {
        if item.informalization.is_some() && !options.force {
            summary.skipped += 1;
            continue;
        }
        let prompt = match render_informalization(&item.formal_statement) {
            Ok(p) => p,
            Err(e) => {
                summary.failures.push((item.id.clone(), e.to_string()));
                continue;
            }
        };
        let request = CompletionRequest::from_prompt(&prompt, options.decoding.clone())
            .for_item(&item.id);
        match provider.complete(&request) {
            Ok(result) => {
                item.informalization = Some(result.text);
                summary.populated += 1;
            }
            Err(e) => {
                tracing::warn!(id = %item.id, error = %e, "informalization failed");
                summary.failures.push((item.id.clone(), e.to_string()));
            }
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ItemKind;

    pub(crate) fn item(id: &str, statement: &str) -> CorpusItem {
        CorpusItem {
            id: id.to_string(),
            kind: ItemKind::Lemma,
            locale: None,
            name: id.to_string(),
            formal_statement: statement.to_string(),
            comment: format!("comment for {id}"),
            proof: None,
            informalization: None,
            source_file: "T.thy".into(),
            split: Split::Unassigned,
        }
    }

    fn items(n: usize) -> Vec<CorpusItem> {
        (0..n)
            .map(|i| item(&format!("i{i}"), &format!("lemma i{i}: shows \"x{i}\"")))
            .collect()
    }

    #[test]
    fn split_counts() {
        let d = build_dataset(items(10), 0.9, 7).unwrap();
        assert_eq!(d.train().count(), 9);
        assert_eq!(d.test().count(), 1);
        let d = build_dataset(items(2744), 0.9, 42).unwrap();
        assert_eq!(d.train().count(), 2470);
        assert_eq!(d.test().count(), 274);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let a = build_dataset(items(50), 0.9, 3).unwrap();
        let b = build_dataset(items(50), 0.9, 3).unwrap();
        assert_eq!(a, b);
        let c = build_dataset(items(50), 0.9, 4).unwrap();
        assert_ne!(
            a.items.iter().map(|i| i.split).collect::<Vec<_>>(),
            c.items.iter().map(|i| i.split).collect::<Vec<_>>()
        );
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            build_dataset(vec![], 0.9, 1),
            Err(CorpusError::EmptyCorpus)
        ));
        assert!(matches!(
            build_dataset(items(3), 1.0, 1),
            Err(CorpusError::InvalidSplitRatio(_))
        ));
        let mut dup = items(2);
        dup[1].id = dup[0].id.clone();
        assert!(matches!(
            build_dataset(dup, 0.5, 1),
            Err(CorpusError::DuplicateId(_))
        ));
    }

    #[test]
    fn save_load_round_trip_is_canonical() {
        let mut d = build_dataset(items(3), 0.67, 9).unwrap();
        d.items[0].formal_statement = "lemma i0: shows \"a \\<in> ℤ ∪ {∅}\"".into();
        d.items[1].informalization = Some("Für alle x ∈ X".into());
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        save_dataset(&d, &p1).unwrap();
        let loaded = load_dataset(&p1).unwrap();
        assert_eq!(loaded, d);
        save_dataset(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn missing_field_names_line() {
        let d = build_dataset(items(2), 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        save_dataset(&d, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut v: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
        v.as_object_mut().unwrap().remove("formal_statement");
        lines[2] = v.to_string();
        match parse_dataset(&lines.join("\n")) {
            Err(CorpusError::Schema { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("formal_statement"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn statement_must_begin_with_kind() {
        let d = build_dataset(vec![item("a", "theorem a: shows \"x\"")], 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        save_dataset(&d, &p).unwrap();
        assert!(matches!(
            load_dataset(&p),
            Err(CorpusError::Schema { line: 2, .. })
        ));
    }
}
