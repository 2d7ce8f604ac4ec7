use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{build_checker, build_embedder, ExperimentConfig, Providers};
use super::record::{
    header_line, item_line, read_run, rewrite, ItemRecord, ItemStatus, OutputStage, RunHeader,
    RunRecord, Stage, RUN_FORMAT, RUN_VERSION,
};
use super::PipelineError;
use crate::autosef::{self, AutoSefContext};
use crate::checker::{CheckerError, Severity, SyntaxChecker, SyntaxDiagnostic};
use crate::corpus::{load_dataset, CorpusItem, Dataset};
use crate::denoise::{cbd_with, denoise, PbdContext};
use crate::llm::{CompletionProvider, CompletionRequest};
use crate::metrics::{bleu2, cbs, chrf, evaluate, ruby, Embedder, EvaluationReport, MetricVector};
use crate::prompts::{fixed_exemplars, Exemplar, TemplateSet};
use crate::retrieval::{build_index, exemplars_for, make_query, retrieve, KnowledgeBaseIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok,
    /// Some items failed; the rest are recorded.
    Partial,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Ok => 0,
            ExitStatus::Partial => 1,
            ExitStatus::ConfigError => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop after this many new items, as if the process were killed.
    pub max_items: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub status: ExitStatus,
    /// Items processed by this invocation.
    pub processed: usize,
    /// Items already present in the run file.
    pub resumed: usize,
    pub elapsed_ms: u64,
}

/// Everything a run needs, loaded once.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub dataset: Dataset,
    pub index: Option<KnowledgeBaseIndex>,
    pub providers: Providers,
    pub checker: Arc<dyn SyntaxChecker>,
    pub embedder: Option<Arc<dyn Embedder>>,
    pub templates: TemplateSet,
}

impl Experiment {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let dataset = load_dataset(&config.dataset)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", config.dataset.display())))?;
        let providers = Providers::from_config(&config.providers, &dataset)?;
        Self::with_parts(config, dataset, providers, build_checker(&config.checker)?)
    }

    /// Uses the given dataset, providers and checker instead of the ones
    /// named in the config.
    pub fn with_parts(
        config: &ExperimentConfig,
        dataset: Dataset,
        providers: Providers,
        checker: Arc<dyn SyntaxChecker>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let index = match &config.retrieval {
            Some(r) => Some(build_index(&dataset, r.index_mode, r.bm25)?),
            None => None,
        };
        let templates = match &config.templates_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::default(),
        };
        Ok(Experiment {
            config_hash: config.hash(),
            config: config.clone(),
            dataset,
            index,
            providers,
            checker,
            embedder: build_embedder(&config.metrics),
            templates,
        })
    }

    pub fn header(&self) -> RunHeader {
        let ids: Vec<&str> = self.dataset.test().map(|i| i.id.as_str()).collect();
        RunHeader {
            format: RUN_FORMAT.into(),
            version: RUN_VERSION,
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            split_id: split_id(&ids),
            items: ids.len(),
        }
    }
}

pub(crate) fn split_id(ids: &[&str]) -> String {
    hex::encode(Sha256::digest(ids.join("\n").as_bytes()))
}

/// Loads the config's resources and runs it into `out`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out: &Path,
    options: RunOptions,
) -> Result<RunOutcome, PipelineError> {
    Experiment::from_config(config)?.run(out, options)
}

impl Experiment {
    /// Runs every test item not yet in `out`. An existing file must come
    /// from the same config; a torn last line is discarded first.
    pub fn run(&self, out: &Path, options: RunOptions) -> Result<RunOutcome, PipelineError> {
        let start = Instant::now();
        let header = self.header();
        let (mut record, mut file) = if out.exists() && fs::metadata(out)?.len() > 0 {
            let (existing, truncated) = read_run(out)?;
            if existing.header.config_hash != header.config_hash {
                return Err(PipelineError::Config(format!(
                    "{} was written by config {}, not {}",
                    out.display(),
                    existing.header.config_hash,
                    header.config_hash
                )));
            }
            let file = if truncated {
                tracing::warn!(path = %out.display(), "dropping a partially written record");
                rewrite(out, &existing)?
            } else {
                fs::OpenOptions::new().append(true).open(out)?
            };
            (existing, file)
        } else {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut file = fs::File::create(out)?;
            writeln!(file, "{}", header_line(&header))?;
            (
                RunRecord {
                    header,
                    items: Vec::new(),
                },
                file,
            )
        };
        let resumed = record.items.len();
        let done: std::collections::HashSet<usize> = record.items.iter().map(|i| i.index).collect();
        let mut pending: Vec<(usize, &CorpusItem)> = self
            .dataset
            .test()
            .enumerate()
            .filter(|(i, _)| !done.contains(i))
            .collect();
        if let Some(max) = options.max_items {
            pending.truncate(max);
        }

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let chunk = self.config.workers * 4;
        let mut processed = 0;
        for batch in pending.chunks(chunk) {
            let results: Vec<ItemRecord> =
                pool.install(|| batch.par_iter().map(|(i, item)| process_item(self, item, *i)).collect());
            for r in results {
                writeln!(file, "{}", item_line(&r))?;
                record.items.push(r);
                processed += 1;
            }
            file.flush()?;
        }
        record.items.sort_by_key(|i| i.index);
        let status = if record.failed() > 0 {
            ExitStatus::Partial
        } else {
            ExitStatus::Ok
        };
        tracing::info!(
            processed,
            resumed,
            failed = record.failed(),
            calls = record.provider_calls().total(),
            "run finished"
        );
        Ok(RunOutcome {
            record,
            status,
            processed,
            resumed,
            elapsed_ms: start.elapsed().as_millis() as u64,
        })
    }
}

impl Experiment {
    /// Re-runs the stages from `from` (denoise or autosef) over the items
    /// of an existing run and writes the result to `out` under this
    /// experiment's header. Earlier outputs are reused, not regenerated.
    pub fn rerun(&self, run: &RunRecord, from: Stage, out: &Path) -> Result<RunOutcome, PipelineError> {
        if !matches!(from, Stage::Denoise | Stage::Autosef) {
            return Err(PipelineError::Config(format!("cannot restart a run at stage {from:?}")));
        }
        let start = Instant::now();
        let header = self.header();
        if header.split_id != run.header.split_id {
            return Err(PipelineError::SplitMismatch {
                a: run.header.config_hash.clone(),
                b: header.config_hash,
            });
        }
        let by_id = self.dataset.index_by_id();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let items: Vec<ItemRecord> = pool.install(|| {
            run.items
                .par_iter()
                .map(|prev| match by_id.get(prev.item_id.as_str()) {
                    Some(item) if restartable(prev, from) => restart_item(self, item, prev, from),
                    _ => prev.clone(),
                })
                .collect()
        });
        let record = RunRecord { header, items };
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        rewrite(out, &record)?;
        let status = if record.failed() > 0 {
            ExitStatus::Partial
        } else {
            ExitStatus::Ok
        };
        Ok(RunOutcome {
            processed: record.items.len(),
            record,
            status,
            resumed: 0,
            elapsed_ms: start.elapsed().as_millis() as u64,
        })
    }
}

fn restartable(prev: &ItemRecord, from: Stage) -> bool {
    let reached = match &prev.status {
        ItemStatus::Ok => true,
        ItemStatus::Failed { stage, .. } => *stage as u8 >= from as u8,
    };
    reached && prev.raw_output.is_some() && (from == Stage::Denoise || prev.denoised_output.is_some())
}

fn restart_item(exp: &Experiment, item: &CorpusItem, prev: &ItemRecord, from: Stage) -> ItemRecord {
    let mut rec = ItemRecord::new(&prev.item_id, prev.index, &prev.reference);
    rec.query = prev.query.clone();
    rec.zero_shot = prev.zero_shot.clone();
    rec.hits = prev.hits.clone();
    rec.exemplar_ids = prev.exemplar_ids.clone();
    rec.raw_output = prev.raw_output.clone();
    rec.provider_calls.zero_shot = prev.provider_calls.zero_shot;
    rec.provider_calls.autoformalize = prev.provider_calls.autoformalize;
    let mut kept_prompts = 1;
    let mut kept_timings = vec!["zero_shot", "retrieval", "autoformalize"];
    if from == Stage::Autosef {
        rec.denoise = prev.denoise.clone();
        rec.denoised_output = prev.denoised_output.clone();
        rec.provider_calls.denoise = prev.provider_calls.denoise;
        kept_prompts += prev.denoise.as_ref().map_or(0, |d| d.prompt_id.iter().count());
        kept_timings.push("denoise");
    }
    rec.prompt_ids = prev.prompt_ids.iter().take(kept_prompts).cloned().collect();
    rec.timing_ms = prev
        .timing_ms
        .iter()
        .filter(|(k, _)| kept_timings.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let exemplars = recorded_exemplars(exp, &rec);
    let _ = finish(exp, item, &mut rec, &exemplars, from);
    rec
}

fn request(prompt: &crate::prompts::RenderedPrompt, exp: &Experiment, provider: &dyn CompletionProvider, id: &str) -> CompletionRequest {
    let mut r = CompletionRequest::from_prompt(prompt, exp.config.decoding.clone()).for_item(id);
    r.provider = provider.name().to_string();
    r
}

fn fail(record: &mut ItemRecord, stage: Stage, message: impl ToString) {
    record.status = ItemStatus::Failed {
        stage,
        message: message.to_string(),
    };
}

fn timed<T>(record: &mut ItemRecord, stage: &str, f: impl FnOnce(&mut ItemRecord) -> T) -> T {
    let t = Instant::now();
    let out = f(record);
    record
        .timing_ms
        .insert(stage.to_string(), t.elapsed().as_millis() as u64);
    out
}

/// Runs one item through every configured stage. Errors are recorded in
/// the returned status rather than propagated.
pub fn process_item(exp: &Experiment, item: &CorpusItem, index: usize) -> ItemRecord {
    let mut rec = ItemRecord::new(&item.id, index, &item.formal_statement);
    let _ = run_stages(exp, item, &mut rec);
    rec
}

fn run_stages(exp: &Experiment, item: &CorpusItem, rec: &mut ItemRecord) -> Option<()> {
    let config = &exp.config;
    let nl = if item.comment.trim().is_empty() {
        item.informalization.clone().unwrap_or_default()
    } else {
        item.comment.clone()
    };
    if nl.trim().is_empty() {
        fail(rec, Stage::Query, "item has no natural-language text");
        return None;
    }

    let exemplars: Vec<Exemplar> = match (&config.retrieval, &exp.index) {
        (Some(r), Some(index)) => {
            if r.query_mode.augment_with_zero_shot {
                let zs = timed(rec, "zero_shot", |_| -> Result<String, String> {
                    let provider = exp.providers.autoformalize.as_ref();
                    let prompt = exp
                        .templates
                        .render_autoformalization(&[], &nl)
                        .map_err(|e| e.to_string())?;
                    let answer = provider
                        .complete(&request(&prompt, exp, provider, &item.id))
                        .map_err(|e| e.to_string())?;
                    Ok(cbd_with(&answer.text, config.cbd_rules))
                });
                rec.provider_calls.zero_shot = 1;
                match zs {
                    Ok(text) => rec.zero_shot = Some(text),
                    Err(e) => {
                        fail(rec, Stage::Query, e);
                        return None;
                    }
                }
            }
            let mut query_item = item.clone();
            query_item.comment = nl.clone();
            let query = match make_query(&query_item, r.query_mode, rec.zero_shot.as_deref()) {
                Ok(q) => q,
                Err(e) => {
                    fail(rec, Stage::Query, e);
                    return None;
                }
            };
            let hits = match timed(rec, "retrieval", |_| retrieve(index, &query, config.k())) {
                Ok(h) => h,
                Err(e) => {
                    rec.query = Some(query);
                    fail(rec, Stage::Retrieval, e);
                    return None;
                }
            };
            rec.query = Some(query);
            let ex = exemplars_for(&hits, &exp.dataset);
            rec.hits = hits;
            ex
        }
        _ if config.shots > 0 => fixed_exemplars().into_iter().take(config.shots).collect(),
        _ => Vec::new(),
    };
    rec.exemplar_ids = exemplars.iter().filter_map(|e| e.source.clone()).collect();

    let provider = exp.providers.autoformalize.as_ref();
    let prompt = match exp.templates.render_autoformalization(&exemplars, &nl) {
        Ok(p) => p,
        Err(e) => {
            fail(rec, Stage::Autoformalize, e);
            return None;
        }
    };
    rec.prompt_ids.push(prompt.id());
    rec.provider_calls.autoformalize = 1;
    let raw = match timed(rec, "autoformalize", |_| {
        provider.complete(&request(&prompt, exp, provider, &item.id))
    }) {
        Ok(r) => r.text,
        Err(e) => {
            fail(rec, Stage::Autoformalize, e);
            return None;
        }
    };
    rec.raw_output = Some(raw);
    finish(exp, item, rec, &exemplars, Stage::Denoise)
}

/// Exemplars of a recorded item: its retrieval hits, or the fixed baseline
/// when the run had shots but no retrieval.
fn recorded_exemplars(exp: &Experiment, rec: &ItemRecord) -> Vec<Exemplar> {
    if !rec.hits.is_empty() {
        exemplars_for(&rec.hits, &exp.dataset)
    } else if exp.config.shots > 0 && exp.config.retrieval.is_none() {
        fixed_exemplars().into_iter().take(exp.config.shots).collect()
    } else {
        Vec::new()
    }
}

/// Stages from `from` (denoise or autosef) onwards, given the earlier
/// outputs already in `rec`.
fn finish(exp: &Experiment, item: &CorpusItem, rec: &mut ItemRecord, exemplars: &[Exemplar], from: Stage) -> Option<()> {
    let config = &exp.config;
    let raw = rec.raw_output.clone().unwrap_or_default();
    let denoised = if from == Stage::Autosef {
        rec.denoised_output.clone().unwrap_or_else(|| raw.clone())
    } else {
        let d = stage_denoise(exp, item, rec, exemplars, &raw);
        rec.denoised_output = Some(d.clone());
        d
    };

    let mut final_output = denoised.clone();
    if let Some(asef) = &config.autosef {
        if !denoised.trim().is_empty() {
            let repair_exemplars = if exemplars.is_empty() {
                fixed_exemplars()
            } else {
                exemplars.to_vec()
            };
            let ctx = AutoSefContext {
                provider: exp.providers.repair.as_ref(),
                checker: exp.checker.as_ref(),
                templates: &exp.templates,
                exemplars: &repair_exemplars,
                item_id: Some(&item.id),
                decoding: &config.decoding,
                rules: config.cbd_rules,
            };
            match timed(rec, "autosef", |_| autosef::run(&ctx, &denoised, asef)) {
                Ok(trace) => {
                    rec.provider_calls.repair = trace.provider_calls;
                    rec.prompt_ids
                        .extend(trace.iterations.iter().filter_map(|i| i.prompt_id.clone()));
                    final_output = trace.final_code().to_string();
                    rec.refinement = Some(trace);
                }
                Err(e) => {
                    fail(rec, Stage::Autosef, e);
                    return None;
                }
            }
        }
    }
    rec.final_output = Some(final_output.clone());

    let scored = timed(rec, "metrics", |_| score(exp, &item.formal_statement, &final_output));
    match scored {
        Ok((metrics, diagnostics)) => {
            rec.metrics = Some(metrics);
            rec.diagnostics = diagnostics;
        }
        Err(e) => {
            fail(rec, Stage::Metrics, e);
            return None;
        }
    }
    Some(())
}

fn stage_denoise(exp: &Experiment, item: &CorpusItem, rec: &mut ItemRecord, exemplars: &[Exemplar], raw: &str) -> String {
    let config = &exp.config;
    let Some(mode) = config.denoise else {
        return raw.to_string();
    };
    let ctx = PbdContext {
        provider: exp.providers.denoise.as_ref(),
        templates: &exp.templates,
        retrieved: exemplars,
        item_id: Some(&item.id),
        decoding: &config.decoding,
    };
    let outcome = timed(rec, "denoise", |_| denoise(Some(&ctx), mode, raw, config.cbd_rules));
    rec.provider_calls.denoise = outcome.provider_calls;
    rec.prompt_ids.extend(outcome.prompt_id.clone());
    let text = outcome.text.clone();
    rec.denoise = Some(outcome);
    text
}

fn score(
    exp: &Experiment,
    reference: &str,
    candidate: &str,
) -> Result<(MetricVector, Vec<SyntaxDiagnostic>), String> {
    let diagnostics = match exp.checker.check(candidate) {
        Ok(d) => d,
        Err(CheckerError::EmptyStatement) => vec![SyntaxDiagnostic {
            line: 1,
            offset: 0,
            end_offset: None,
            message: "empty statement".into(),
            severity: Severity::Error,
        }],
        Err(e) => return Err(e.to_string()),
    };
    let cbs_value = match &exp.embedder {
        Some(e) => Some(cbs(e.as_ref(), reference, candidate).map_err(|e| e.to_string())?),
        None => None,
    };
    Ok((
        MetricVector {
            bleu2: bleu2(reference, candidate).map_err(|e| e.to_string())?,
            chrf: chrf(reference, candidate).map_err(|e| e.to_string())?,
            ruby: ruby(reference, candidate),
            cbs: cbs_value,
            pass: crate::checker::passes(&diagnostics),
        },
        diagnostics,
    ))
}

/// Scores the outputs of `run` at `stage`.
pub fn evaluate_run(
    run: &RunRecord,
    stage: OutputStage,
    checker: &dyn SyntaxChecker,
    embedder: Option<&dyn Embedder>,
) -> Result<EvaluationReport, PipelineError> {
    let config = &run.header.config;
    let llm = if config.llm.is_empty() {
        config.name.clone()
    } else {
        config.llm.clone()
    };
    Ok(evaluate(&run.outputs(stage), checker, embedder, &llm, &config.method_label())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ItemKind, Split};
    use crate::llm::{NoiseSpec, OracleProvider};
    use crate::pipeline::config::CheckerConfig;

    fn dataset() -> Dataset {
        let mut ds = crate::synth::retrieval_fixture(30, 5);
        for (i, item) in ds.items.iter_mut().enumerate() {
            if i % 3 == 0 {
                item.split = Split::Test;
            }
        }
        ds.items.push(CorpusItem {
            id: "Synth.no_text".into(),
            kind: ItemKind::Lemma,
            locale: None,
            name: "no_text".into(),
            formal_statement: "lemma no_text: shows \"x \\<in> X\"".into(),
            comment: String::new(),
            proof: None,
            informalization: None,
            source_file: "synthetic".into(),
            split: Split::Test,
        });
        ds
    }

    fn config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            "version = 1\nname = \"t\"\ndataset = \"unused\"\nworkers = 2\n{extra}\n[providers.autoformalize]\nkind = \"oracle\"\n"
        ))
        .unwrap()
    }

    fn experiment(config: &ExperimentConfig, noise: NoiseSpec) -> Experiment {
        let ds = dataset();
        let provider = Arc::new(OracleProvider::from_dataset("oracle", &ds, noise));
        Experiment::with_parts(
            config,
            ds,
            Providers::uniform(provider),
            build_checker(&CheckerConfig::default()).unwrap(),
        )
        .unwrap()
    }

    fn noisy() -> NoiseSpec {
        NoiseSpec {
            append_explanation: true,
            append_proof: true,
            seed: 3,
            ..NoiseSpec::clean()
        }
    }

    #[test]
    fn stages_off_keeps_raw_output() {
        let c = config("shots = 0");
        let exp = experiment(&c, noisy());
        let dir = tempfile::tempdir().unwrap();
        let out = exp.run(&dir.path().join("r.jsonl"), RunOptions::default()).unwrap();
        assert_eq!(out.status, ExitStatus::Partial);
        assert_eq!(out.record.failed(), 1);
        for item in out.record.items.iter().filter(|i| i.is_ok()) {
            assert_eq!(item.final_output, item.raw_output);
            assert_eq!(item.provider_calls.total(), 1);
        }
    }

    #[test]
    fn call_count_follows_the_stages() {
        let c = config("denoise = \"1A+cbd\"\n[retrieval]\nquery_mode = \"T+ZS\"\n[autosef]\nbudget = 9");
        let exp = experiment(&c, noisy());
        let ds = exp.dataset.clone();
        for (i, item) in ds.test().enumerate().filter(|(_, it)| !it.comment.is_empty()) {
            let r = process_item(&exp, item, i);
            assert!(r.is_ok(), "{:?}", r.status);
            let rounds = r.refinement.as_ref().map_or(0, |t| t.provider_calls);
            assert_eq!(r.provider_calls.total(), 1 + 1 + 1 + rounds);
            assert_eq!(r.hits.len(), 3);
            assert!(r.metrics.as_ref().unwrap().pass);
        }
    }

    #[test]
    fn resume_matches_a_single_run() {
        let c = config("denoise = \"cbd\"\n[retrieval]\n[autosef]\nbudget = 3");
        let exp = experiment(&c, noisy());
        let dir = tempfile::tempdir().unwrap();
        let full = exp.run(&dir.path().join("full.jsonl"), RunOptions::default()).unwrap();
        let path = dir.path().join("split.jsonl");
        let first = exp.run(&path, RunOptions { max_items: Some(4) }).unwrap();
        assert_eq!(first.processed, 4);
        let second = exp.run(&path, RunOptions::default()).unwrap();
        assert_eq!(second.resumed, 4);
        for (a, b) in full.record.items.iter().zip(&second.record.items) {
            assert_eq!(a.content_hash(), b.content_hash(), "{a:?}\n{b:?}");
        }
        assert_eq!(full.record.header, second.record.header);
        assert_eq!(full.record.items.len(), second.record.items.len());
        assert_eq!(full.record.content_hash(), second.record.content_hash());
        let (reread, _) = read_run(&path).unwrap();
        assert_eq!(reread.content_hash(), full.record.content_hash());
    }

    #[test]
    fn resume_refuses_another_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        experiment(&config("shots = 0"), NoiseSpec::clean())
            .run(&path, RunOptions { max_items: Some(1) })
            .unwrap();
        let err = experiment(&config("shots = 2"), NoiseSpec::clean())
            .run(&path, RunOptions::default())
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rerun_with_the_same_stages_reproduces_the_items() {
        let c = config("shots = 3\ndenoise = \"1D+cbd\"\n[retrieval]\n[autosef]\nbudget = 4\n");
        let exp = experiment(&c, NoiseSpec { corrupt_symbol_rate: 0.3, repair_probability: 0.7, ..noisy() });
        let dir = tempfile::tempdir().unwrap();
        let first = exp.run(&dir.path().join("a.jsonl"), RunOptions::default()).unwrap().record;
        for from in [Stage::Denoise, Stage::Autosef] {
            let again = exp.rerun(&first, from, &dir.path().join("b.jsonl")).unwrap().record;
            assert_eq!(again.content_hash(), first.content_hash(), "{from:?}");
            let (reread, _) = read_run(&dir.path().join("b.jsonl")).unwrap();
            assert_eq!(reread.content_hash(), first.content_hash());
        }
        assert!(exp.rerun(&first, Stage::Query, &dir.path().join("c.jsonl")).is_err());
    }

    #[test]
    fn rerun_denoise_replaces_later_stages() {
        let exp = experiment(&config("shots = 0"), noisy());
        let dir = tempfile::tempdir().unwrap();
        let first = exp.run(&dir.path().join("a.jsonl"), RunOptions::default()).unwrap().record;
        let c = config("shots = 0\ndenoise = \"cbd\"");
        let cleaned = experiment(&c, noisy())
            .rerun(&first, Stage::Denoise, &dir.path().join("b.jsonl"))
            .unwrap()
            .record;
        assert_ne!(cleaned.header.config_hash, first.header.config_hash);
        for (before, after) in first.items.iter().zip(&cleaned.items) {
            assert_eq!(before.raw_output, after.raw_output);
            if after.is_ok() {
                assert_eq!(after.final_output, after.raw_output.as_deref().map(crate::denoise::cbd));
                assert_eq!(after.provider_calls.total(), 1);
            }
        }
    }
}
