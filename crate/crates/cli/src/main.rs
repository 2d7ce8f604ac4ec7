use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use autoformal::checker::SyntaxChecker;
use autoformal::corpus::{build_dataset, extract_dir, informalize_corpus, load_dataset, save_dataset, InformalizeOptions};
use autoformal::metrics::{Embedder, HashEmbedder};
use autoformal::pipeline::{
    build_checker, build_provider, compare_runs, evaluate_run, read_run, Experiment, ExperimentConfig, OutputStage,
    PipelineError, ProviderConfig, RunOptions, RunSummary, Stage,
};
use autoformal::retrieval::{build_index, save_index, Bm25Params, IndexMode};
use autoformal::{AutoSefConfig, DenoiseMode};
use clap::{Parser, Subcommand};

/// Retrieval-augmented autoformalization into Isabelle/ZF.
#[derive(Parser)]
#[command(name = "autoformal", version)]
struct Cli {
    /// More log output (repeat for trace level). `RUST_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or enrich the statement dataset.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Build the BM25 exemplar index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run an experiment config over the test split.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run file; defaults to `runs/<name>-<hash>.jsonl`. An existing
        /// file from the same config is resumed.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many new items.
        #[arg(long)]
        max_items: Option<usize>,
    },
    /// Re-denoise the raw outputs of a run. Refinement results are dropped.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        /// `cbd`, `1A`..`1D` or `1A+cbd`..`1D+cbd`.
        #[arg(long)]
        mode: DenoiseMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run syntax-error driven refinement on the denoised outputs of a run.
    Autosef {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 9)]
        budget: u32,
        /// Use the whole budget even when answers stop changing.
        #[arg(long)]
        fixed_iterations: bool,
        /// Accept answers that have more errors than their predecessor.
        #[arg(long)]
        no_regression_guard: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run and write table, CSV and JSON reports.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// `raw`, `pbd`, `denoised`, `final` or a repair round number.
        #[arg(long, default_value = "final")]
        stage: OutputStage,
        /// Embedding provider for CBS: `hash` or `hash:<dim>`.
        #[arg(long)]
        with_cbs: Option<String>,
        /// Report directory; defaults to `<run>.eval/` next to the run file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Table of several runs with deltas against a baseline.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Method label or config hash prefix of the baseline run.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, default_value = "final")]
        stage: OutputStage,
        #[arg(long)]
        with_cbs: Option<String>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Extract items from `.thy` files and split them.
    Extract {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of items in the training split.
        #[arg(long, default_value_t = 0.9)]
        ratio: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Fill in informal descriptions of each statement.
    Informalize {
        #[arg(long)]
        dataset: PathBuf,
        /// `oracle`, or a TOML file holding one provider table
        /// (`kind = "http" | "scripted" | "oracle"`).
        #[arg(long)]
        provider: String,
        /// Output file; defaults to rewriting the dataset in place.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace informalizations that are already present.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum IndexCommand {
    Build {
        #[arg(long)]
        dataset: PathBuf,
        /// `T`, `TS`, `IS` or `TIS`.
        #[arg(long, default_value = "T")]
        mode: IndexMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = Bm25Params::default().k1)]
        k1: f64,
        #[arg(long, default_value_t = Bm25Params::default().b)]
        b: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn,autoformal=info",
        1 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Corpus(CorpusCommand::Extract { src, out, ratio, seed }) => {
            let items = extract_dir(&src).with_context(|| format!("extracting {}", src.display()))?;
            let ds = build_dataset(items, ratio, seed)?;
            save_dataset(&ds, &out)?;
            let flagged = ds.items.iter().filter(|i| i.is_flagged()).count();
            println!(
                "{} items ({} train, {} test, {flagged} without comment) -> {}",
                ds.items.len(),
                ds.train().count(),
                ds.test().count(),
                out.display()
            );
            Ok(0)
        }
        Command::Corpus(CorpusCommand::Informalize {
            dataset,
            provider,
            out,
            force,
        }) => {
            let mut ds = load_dataset(&dataset)?;
            let config = provider_config(&provider)?;
            let provider = build_provider("informalize", &config, &ds)?;
            let options = InformalizeOptions {
                force,
                ..Default::default()
            };
            let summary = informalize_corpus(&mut ds, provider.as_ref(), &options);
            let out = out.unwrap_or(dataset);
            save_dataset(&ds, &out)?;
            println!(
                "populated {}, skipped {}, failed {} -> {}",
                summary.populated,
                summary.skipped,
                summary.failures.len(),
                out.display()
            );
            for (id, message) in &summary.failures {
                eprintln!("  {id}: {message}");
            }
            Ok(u8::from(!summary.failures.is_empty()))
        }
        Command::Index(IndexCommand::Build { dataset, mode, out, k1, b }) => {
            let ds = load_dataset(&dataset)?;
            let index = build_index(&ds, mode, Bm25Params { k1, b })?;
            save_index(&index, &out)?;
            println!("indexed {} documents (mode {mode}) -> {}", index.len(), out.display());
            Ok(0)
        }
        Command::Run { config, out, max_items } => {
            let path = std::path::absolute(&config)?;
            let config = ExperimentConfig::load(&path)?;
            let out = out.unwrap_or_else(|| {
                PathBuf::from("runs").join(format!("{}-{}.jsonl", config.name, &config.hash()[..8]))
            });
            let exp = Experiment::from_config(&config)?;
            let outcome = exp.run(&out, RunOptions { max_items })?;
            println!(
                "{}: {} items ({} new, {} resumed, {} failed) in {} ms -> {}",
                config.method_label(),
                outcome.record.items.len(),
                outcome.processed,
                outcome.resumed,
                outcome.record.failed(),
                outcome.elapsed_ms,
                out.display()
            );
            Ok(outcome.status.code() as u8)
        }
        Command::Denoise { input, mode, out } => {
            let (run, _) = read_run(&input)?;
            let mut config = run.header.config.clone();
            config.denoise = Some(mode);
            config.autosef = None;
            restage(&run, &config, Stage::Denoise, &out)
        }
        Command::Autosef {
            input,
            budget,
            fixed_iterations,
            no_regression_guard,
            out,
        } => {
            let (run, _) = read_run(&input)?;
            let mut config = run.header.config.clone();
            config.autosef = Some(AutoSefConfig {
                budget,
                fixed_iterations,
                regression_guard: !no_regression_guard,
            });
            restage(&run, &config, Stage::Autosef, &out)
        }
        Command::Evaluate {
            run,
            stage,
            with_cbs,
            out,
        } => {
            let embedder = embedder(with_cbs.as_deref())?;
            let (record, truncated) = read_run(&run)?;
            if truncated {
                tracing::warn!("{} ends in a partial record; it is ignored", run.display());
            }
            let checker = checker_for(&record.header.config)?;
            let report = evaluate_run(&record, stage, checker.as_ref(), embedder.as_deref())?;
            let dir = out.unwrap_or_else(|| run.with_extension("eval"));
            report.write_to(&dir)?;
            print!("{}", report.render_table());
            println!("reports -> {}", dir.display());
            Ok(0)
        }
        Command::Compare {
            runs,
            baseline,
            stage,
            with_cbs,
            out,
        } => {
            let embedder = embedder(with_cbs.as_deref())?;
            let mut summaries = Vec::new();
            for path in &runs {
                let (record, _) = read_run(path).with_context(|| path.display().to_string())?;
                let checker = checker_for(&record.header.config)?;
                let report = evaluate_run(&record, stage, checker.as_ref(), embedder.as_deref())?;
                summaries.push(RunSummary::from_report(&report, &record.header));
            }
            let table = compare_runs(&summaries, baseline.as_deref())?.render();
            print!("{table}");
            if let Some(out) = out {
                std::fs::write(&out, &table)?;
            }
            Ok(0)
        }
    }
}

fn restage(run: &autoformal::RunRecord, config: &ExperimentConfig, from: Stage, out: &Path) -> anyhow::Result<u8> {
    let exp = Experiment::from_config(config)?;
    let outcome = exp.rerun(run, from, out)?;
    println!(
        "{}: {} items ({} failed) in {} ms -> {}",
        config.method_label(),
        outcome.record.items.len(),
        outcome.record.failed(),
        outcome.elapsed_ms,
        out.display()
    );
    Ok(outcome.status.code() as u8)
}

fn provider_config(spec: &str) -> anyhow::Result<ProviderConfig> {
    if spec == "oracle" {
        return Ok(ProviderConfig::Oracle { noise: Default::default() });
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(PipelineError::Config(format!("provider `{spec}` is neither `oracle` nor a file")).into());
    }
    let text = std::fs::read_to_string(path)?;
    let mut config: ProviderConfig =
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{spec}: {e}")))?;
    if let ProviderConfig::Scripted { path: script } = &mut config {
        if script.is_relative() {
            *script = path.parent().unwrap_or(Path::new(".")).join(&*script);
        }
    }
    Ok(config)
}

fn checker_for(config: &ExperimentConfig) -> anyhow::Result<Arc<dyn SyntaxChecker>> {
    Ok(build_checker(&config.checker)?)
}

fn embedder(spec: Option<&str>) -> anyhow::Result<Option<Arc<dyn Embedder>>> {
    let Some(spec) = spec else {
        return Ok(None);
    };
    let dim = match spec.split_once(':') {
        None if spec == "hash" => 64,
        Some(("hash", d)) => d.parse().context("embedding dimension")?,
        _ => bail!("unknown embedding provider `{spec}` (expected `hash` or `hash:<dim>`)"),
    };
    Ok(Some(Arc::new(HashEmbedder { dim })))
}
