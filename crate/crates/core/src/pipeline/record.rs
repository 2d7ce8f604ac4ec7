use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{canonical_json, ExperimentConfig};
use super::PipelineError;
use crate::autosef::RefinementTrace;
use crate::checker::{passes, SyntaxDiagnostic};
use crate::denoise::DenoiseOutcome;
use crate::metrics::{EvalItem, MetricVector};
use crate::retrieval::RetrievalHit;

pub const RUN_FORMAT: &str = "autoformal-run";
pub const RUN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Hash of the ordered test-split ids.
    pub split_id: String,
    /// Size of the test split.
    pub items: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Query,
    Retrieval,
    Autoformalize,
    Denoise,
    Autosef,
    Metrics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ItemStatus {
    Ok,
    Failed { stage: Stage, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderCalls {
    pub zero_shot: u32,
    pub autoformalize: u32,
    pub denoise: u32,
    pub repair: u32,
}

impl ProviderCalls {
    pub fn total(&self) -> u32 {
        self.zero_shot + self.autoformalize + self.denoise + self.repair
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    /// Position in the test split.
    pub index: usize,
    /// Ground-truth statement.
    pub reference: String,
    pub query: Option<String>,
    pub zero_shot: Option<String>,
    pub hits: Vec<RetrievalHit>,
    pub exemplar_ids: Vec<String>,
    pub prompt_ids: Vec<String>,
    pub raw_output: Option<String>,
    pub denoise: Option<DenoiseOutcome>,
    pub denoised_output: Option<String>,
    pub refinement: Option<RefinementTrace>,
    pub final_output: Option<String>,
    pub metrics: Option<MetricVector>,
    pub diagnostics: Vec<SyntaxDiagnostic>,
    pub provider_calls: ProviderCalls,
    pub status: ItemStatus,
    /// Wall time per stage. Not part of the content hash.
    #[serde(default)]
    pub timing_ms: BTreeMap<String, u64>,
}

impl ItemRecord {
    pub fn new(item_id: &str, index: usize, reference: &str) -> Self {
        ItemRecord {
            item_id: item_id.to_string(),
            index,
            reference: reference.to_string(),
            query: None,
            zero_shot: None,
            hits: Vec::new(),
            exemplar_ids: Vec::new(),
            prompt_ids: Vec::new(),
            raw_output: None,
            denoise: None,
            denoised_output: None,
            refinement: None,
            final_output: None,
            metrics: None,
            diagnostics: Vec::new(),
            provider_calls: ProviderCalls::default(),
            status: ItemStatus::Ok,
            timing_ms: BTreeMap::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ItemStatus::Ok
    }

    /// Hash of everything except timings.
    pub fn content_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("record serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("timing_ms");
        }
        hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
    }

    /// The candidate at `stage`, falling back to the latest earlier output.
    pub fn output(&self, stage: OutputStage) -> Option<&str> {
        let raw = self.raw_output.as_deref();
        let pbd = self
            .denoise
            .as_ref()
            .and_then(|d| d.pbd_output.as_deref())
            .or(raw);
        let denoised = self.denoised_output.as_deref().or(raw);
        match stage {
            OutputStage::Raw => raw,
            OutputStage::Pbd => pbd,
            OutputStage::Denoised => denoised,
            OutputStage::Iteration(k) => match &self.refinement {
                Some(t) => Some(&t.state_at(k).code),
                None => denoised,
            },
            OutputStage::Final => self.final_output.as_deref().or(denoised),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputStage {
    Raw,
    /// Verbatim PBD answer.
    Pbd,
    Denoised,
    /// After `k` repair rounds; 0 is the input to repair.
    Iteration(usize),
    Final,
}

impl std::str::FromStr for OutputStage {
    type Err = String;

    /// `raw`, `pbd`, `denoised`, `final`, or a repair round number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(OutputStage::Raw),
            "pbd" => Ok(OutputStage::Pbd),
            "denoised" => Ok(OutputStage::Denoised),
            "final" => Ok(OutputStage::Final),
            other => other
                .trim_start_matches("iter")
                .trim_start_matches(['-', ':'])
                .parse()
                .map(OutputStage::Iteration)
                .map_err(|_| format!("unknown output stage `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(Box<RunHeader>),
    Item(Box<ItemRecord>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RunHeader,
    /// Sorted by `index`.
    pub items: Vec<ItemRecord>,
}

impl RunRecord {
    /// Hash over the header and every item without timings; equal for
    /// runs that produced the same outputs.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let header = serde_json::to_value(&self.header).expect("header serializes");
        h.update(canonical_json(&header).as_bytes());
        for item in &self.items {
            h.update(b"\n");
            h.update(item.content_hash().as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn is_complete(&self) -> bool {
        self.items.len() == self.header.items
    }

    pub fn failed(&self) -> usize {
        self.items.iter().filter(|i| !i.is_ok()).count()
    }

    pub fn provider_calls(&self) -> ProviderCalls {
        self.items.iter().fold(ProviderCalls::default(), |mut acc, i| {
            acc.zero_shot += i.provider_calls.zero_shot;
            acc.autoformalize += i.provider_calls.autoformalize;
            acc.denoise += i.provider_calls.denoise;
            acc.repair += i.provider_calls.repair;
            acc
        })
    }

    /// Candidates at `stage` paired with their references. Items that failed
    /// before producing anything contribute an empty candidate.
    pub fn outputs(&self, stage: OutputStage) -> Vec<EvalItem> {
        self.items
            .iter()
            .map(|i| EvalItem {
                id: i.item_id.clone(),
                reference: Some(i.reference.clone()),
                candidate: i.output(stage).unwrap_or("").to_string(),
            })
            .collect()
    }

    /// Pass rate (0–100) after each of `0..=budget` repair rounds, from the
    /// recorded diagnostics.
    pub fn pass_rate_by_iteration(&self, budget: usize) -> Vec<f64> {
        if self.items.is_empty() {
            return vec![0.0; budget + 1];
        }
        (0..=budget)
            .map(|k| {
                let clean = self
                    .items
                    .iter()
                    .filter(|i| match &i.refinement {
                        Some(t) => t.passes_at(k),
                        None => i.is_ok() && passes(&i.diagnostics),
                    })
                    .count();
                100.0 * clean as f64 / self.items.len() as f64
            })
            .collect()
    }
}

/// Reads a run file. A final line that does not parse (an interrupted
/// write) is dropped and reported by the flag; a bad line elsewhere is an
/// error.
pub fn read_run(path: &Path) -> Result<(RunRecord, bool), PipelineError> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut header = None;
    let mut items = Vec::new();
    let mut truncated = false;
    for (n, line) in lines.iter().enumerate() {
        let parsed: Line = match serde_json::from_str(line) {
            Ok(l) => l,
            Err(_) if n + 1 == lines.len() && n > 0 => {
                truncated = true;
                break;
            }
            Err(e) => return Err(PipelineError::Record(format!("{}:{}: {e}", path.display(), n + 1))),
        };
        match (parsed, n) {
            (Line::Header(h), 0) => header = Some(*h),
            (Line::Item(i), n) if n > 0 => items.push(*i),
            _ => {
                return Err(PipelineError::Record(format!(
                    "{}:{}: the header must be the first line and appear once",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    let header = header.ok_or_else(|| PipelineError::Record(format!("{}: no header", path.display())))?;
    if header.format != RUN_FORMAT || header.version != RUN_VERSION {
        return Err(PipelineError::Record(format!(
            "{}: unsupported format {} v{}",
            path.display(),
            header.format,
            header.version
        )));
    }
    if !text.ends_with('\n') && !truncated && !items.is_empty() {
        // complete JSON but no newline: still an interrupted write
        items.pop();
        truncated = true;
    }
    items.sort_by_key(|i| i.index);
    items.dedup_by_key(|i| i.index);
    Ok((RunRecord { header, items }, truncated))
}

pub(crate) fn header_line(header: &RunHeader) -> String {
    serde_json::to_string(&Line::Header(Box::new(header.clone()))).expect("header serializes")
}

pub(crate) fn item_line(item: &ItemRecord) -> String {
    serde_json::to_string(&Line::Item(Box::new(item.clone()))).expect("record serializes")
}

/// Rewrites `path` with exactly `record`, then reopens it for appending.
pub(crate) fn rewrite(path: &Path, record: &RunRecord) -> Result<fs::File, PipelineError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        writeln!(f, "{}", header_line(&record.header))?;
        for item in &record.items {
            writeln!(f, "{}", item_line(item))?;
        }
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(fs::OpenOptions::new().append(true).open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ExperimentConfig;

    fn header() -> RunHeader {
        let config = ExperimentConfig::from_toml(
            "version = 1\nname = \"t\"\ndataset = \"d.jsonl\"\n[providers.autoformalize]\nkind = \"oracle\"\n",
        )
        .unwrap();
        RunHeader {
            format: RUN_FORMAT.into(),
            version: RUN_VERSION,
            config_hash: config.hash(),
            config,
            split_id: "s".into(),
            items: 2,
        }
    }

    fn item(i: usize) -> ItemRecord {
        let mut r = ItemRecord::new(&format!("T.x{i}"), i, "lemma x: shows \"x\"");
        r.raw_output = Some("raw".into());
        r
    }

    #[test]
    fn output_stage_names() {
        assert_eq!("final".parse::<OutputStage>(), Ok(OutputStage::Final));
        assert_eq!("iter:3".parse::<OutputStage>(), Ok(OutputStage::Iteration(3)));
        assert_eq!("0".parse::<OutputStage>(), Ok(OutputStage::Iteration(0)));
        assert!("later".parse::<OutputStage>().is_err());
    }

    #[test]
    fn timing_does_not_change_the_hash() {
        let a = item(0);
        let mut b = a.clone();
        b.timing_ms.insert("autoformalize".into(), 123);
        assert_eq!(a.content_hash(), b.content_hash());
        b.raw_output = Some("other".into());
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn read_drops_a_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut text = format!("{}\n{}\n", header_line(&header()), item_line(&item(0)));
        let second = item_line(&item(1));
        text.push_str(&second[..second.len() / 2]);
        fs::write(&path, &text).unwrap();
        let (run, truncated) = read_run(&path).unwrap();
        assert!(truncated);
        assert_eq!(run.items.len(), 1);
        assert!(!run.is_complete());

        fs::write(&path, format!("{}\n{}", header_line(&header()), item_line(&item(0)))).unwrap();
        let (run, truncated) = read_run(&path).unwrap();
        assert!(truncated);
        assert!(run.items.is_empty());
    }

    #[test]
    fn read_rejects_garbage_in_the_middle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let text = format!("{}\nnot json\n{}\n", header_line(&header()), item_line(&item(0)));
        fs::write(&path, text).unwrap();
        assert!(read_run(&path).is_err());
        fs::write(&path, format!("{}\n", item_line(&item(0)))).unwrap();
        assert!(read_run(&path).is_err());
    }

    #[test]
    fn stage_outputs_fall_back() {
        let r = item(0);
        assert_eq!(r.output(OutputStage::Final), Some("raw"));
        assert_eq!(r.output(OutputStage::Pbd), Some("raw"));
        assert_eq!(r.output(OutputStage::Iteration(3)), Some("raw"));
        let empty = ItemRecord::new("T.y", 1, "r");
        assert_eq!(empty.output(OutputStage::Final), None);
    }
}
