mod common;

use std::path::PathBuf;
use std::sync::Arc;

use autoformal::corpus::build_dataset;
use autoformal::llm::{NoiseSpec, OracleProvider, ScriptedProvider};
use autoformal::pipeline::{
    compare_runs, evaluate_run, read_run, Experiment, ItemStatus, OutputStage, Providers, RunOptions, RunSummary, Stage,
};
use autoformal::{Dataset, ExitStatus, ExperimentConfig, OfflineChecker};
use common::*;

fn dataset() -> Dataset {
    build_dataset(golden_items(), 0.7, 11).unwrap()
}

fn config(body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "version = 1\nname = \"p\"\nllm = \"Oracle\"\ndataset = \"unused\"\nworkers = 2\n{body}\n[providers.autoformalize]\nkind = \"oracle\"\n"
    ))
    .unwrap()
}

fn experiment(config: &ExperimentConfig, noise: NoiseSpec) -> Experiment {
    let ds = dataset();
    let provider = Arc::new(OracleProvider::from_dataset("oracle", &ds, noise));
    Experiment::with_parts(config, ds, Providers::uniform(provider), Arc::new(OfflineChecker::default())).unwrap()
}

fn noisy() -> NoiseSpec {
    NoiseSpec {
        append_explanation: true,
        append_proof: true,
        corrupt_symbol_rate: 0.3,
        drop_bracket_rate: 0.1,
        style_bias_rate: 0.4,
        repair_probability: 0.7,
        seed: 2,
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(c.dataset.is_absolute() || c.dataset.starts_with(&dir), "{}", c.dataset.display());
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn clean_oracle_passes_everything() {
    let c = config("denoise = \"cbd\"\n[retrieval]\n[autosef]\nbudget = 9");
    let exp = experiment(&c, NoiseSpec::clean());
    let dir = tempfile::tempdir().unwrap();
    let out = exp.run(&dir.path().join("r.jsonl"), RunOptions::default()).unwrap();
    assert_eq!(out.status, ExitStatus::Ok);
    for item in &out.record.items {
        assert_eq!(item.final_output.as_deref(), Some(item.reference.as_str()), "{}", item.item_id);
        assert_eq!(item.provider_calls.repair, 0);
    }
    let report = evaluate_run(&out.record, OutputStage::Raw, &OfflineChecker::default(), None).unwrap();
    assert_eq!(report.aggregate.pass, 100.0);
    assert_eq!(report.aggregate.bleu2, 100.0);
}

#[test]
fn provider_calls_follow_the_stages() {
    let c = config("denoise = \"1D+cbd\"\n[retrieval]\nquery_mode = \"T+ZS\"\n[autosef]\nbudget = 5");
    let exp = experiment(&c, noisy());
    let dir = tempfile::tempdir().unwrap();
    let run = exp.run(&dir.path().join("r.jsonl"), RunOptions::default()).unwrap().record;
    for item in run.items.iter().filter(|i| i.is_ok()) {
        let rounds = item.refinement.as_ref().map_or(0, |t| t.provider_calls);
        assert_eq!(item.provider_calls.total(), 1 + 1 + 1 + rounds, "{}", item.item_id);
        assert!(rounds <= 5);
        assert!(item.zero_shot.is_some());
        assert_eq!(item.hits.len(), 3);
        assert_eq!(item.prompt_ids.len() as u32, 2 + rounds);
    }
}

#[test]
fn pass_rate_does_not_drop_across_repair_rounds() {
    let c = config("denoise = \"cbd\"\n[retrieval]\n[autosef]\nbudget = 9");
    let exp = experiment(&c, noisy());
    let dir = tempfile::tempdir().unwrap();
    let run = exp.run(&dir.path().join("r.jsonl"), RunOptions::default()).unwrap().record;
    let rates = run.pass_rate_by_iteration(9);
    assert_eq!(rates.len(), 10);
    for w in rates.windows(2) {
        assert!(w[1] >= w[0], "{rates:?}");
    }
}

#[test]
fn provider_failures_are_isolated_per_item() {
    let c = config("shots = 0");
    let ds = dataset();
    let exp = Experiment::with_parts(
        &c,
        ds,
        Providers::uniform(Arc::new(ScriptedProvider::new("empty"))),
        Arc::new(OfflineChecker::default()),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = exp.run(&dir.path().join("r.jsonl"), RunOptions::default()).unwrap();
    assert_eq!(out.status, ExitStatus::Partial);
    assert_eq!(out.status.code(), 1);
    assert_eq!(out.record.items.len(), exp.dataset.test().count());
    assert!(out
        .record
        .items
        .iter()
        .all(|i| matches!(i.status, ItemStatus::Failed { stage: Stage::Autoformalize, .. })));
}

#[test]
fn run_file_is_readable_while_appending() {
    let c = config("[retrieval]");
    let exp = experiment(&c, noisy());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    exp.run(&path, RunOptions { max_items: Some(3) }).unwrap();
    let (partial, torn) = read_run(&path).unwrap();
    assert!(!torn);
    assert_eq!(partial.items.len(), 3);
    assert!(!partial.is_complete());
    let full = exp.run(&path, RunOptions::default()).unwrap();
    assert_eq!(full.resumed, 3);
    assert!(full.record.is_complete());
}

#[test]
fn compare_needs_a_shared_split() {
    let c = config("[retrieval]");
    let dir = tempfile::tempdir().unwrap();
    let a = experiment(&c, noisy()).run(&dir.path().join("a.jsonl"), RunOptions::default()).unwrap().record;
    let other = build_dataset(golden_items(), 0.7, 12).unwrap();
    let provider = Arc::new(OracleProvider::from_dataset("oracle", &other, noisy()));
    let b = Experiment::with_parts(&c, other, Providers::uniform(provider), Arc::new(OfflineChecker::default()))
        .unwrap()
        .run(&dir.path().join("b.jsonl"), RunOptions::default())
        .unwrap()
        .record;
    let checker = OfflineChecker::default();
    let summary = |r: &autoformal::RunRecord| {
        RunSummary::from_report(&evaluate_run(r, OutputStage::Final, &checker, None).unwrap(), &r.header)
    };
    let err = compare_runs(&[summary(&a), summary(&b)], None).unwrap_err();
    assert!(err.to_string().contains("different test splits"), "{err}");
}
