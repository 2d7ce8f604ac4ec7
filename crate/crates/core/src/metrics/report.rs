use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bleu2, cbs, chrf, corpus_bleu2, pearson_matrix, ruby, CorrelationMatrix, Embedder, MetricError, MetricVector};
use crate::checker::{error_count, CheckerError, SyntaxChecker};

pub const METRIC_NAMES: [&str; 5] = ["BLEU-2", "ChrF", "RUBY", "CBS", "Pass"];

/// One output to score against its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub reference: Option<String>,
    pub candidate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub id: String,
    pub metrics: MetricVector,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub items: usize,
    /// Corpus-level BLEU-2.
    pub bleu2: f64,
    pub bleu2_sentence_mean: f64,
    pub chrf: f64,
    pub ruby: f64,
    pub cbs: Option<f64>,
    pub pass: f64,
}

impl AggregateScores {
    /// BLEU-2, ChrF, RUBY, CBS, Pass.
    pub fn columns(&self) -> [Option<f64>; 5] {
        [
            Some(self.bleu2),
            Some(self.chrf),
            Some(self.ruby),
            self.cbs,
            Some(self.pass),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub llm: String,
    pub method: String,
    pub checker_backend: String,
    pub embedder: Option<String>,
    pub items: Vec<ItemScores>,
    pub aggregate: AggregateScores,
    pub correlation: Option<CorrelationMatrix>,
    pub warnings: Vec<String>,
}

/// Scores every item with a ground truth; items without one are skipped
/// with a warning.
pub fn evaluate(
    items: &[EvalItem],
    checker: &dyn SyntaxChecker,
    embedder: Option<&dyn Embedder>,
    llm: &str,
    method: &str,
) -> Result<EvaluationReport, MetricError> {
    let mut warnings = Vec::new();
    let usable: Vec<(&EvalItem, &str)> = items
        .iter()
        .filter_map(|i| match i.reference.as_deref() {
            Some(r) if !r.trim().is_empty() => Some((i, r)),
            _ => {
                warnings.push(format!("{}: no ground truth, item excluded", i.id));
                None
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(MetricError::InsufficientData);
    }

    let scored: Vec<Result<(ItemScores, Option<String>), MetricError>> = usable
        .par_iter()
        .map(|(item, reference)| {
            let errors = match checker.check(&item.candidate) {
                Ok(d) => error_count(&d),
                Err(CheckerError::EmptyStatement) => 1,
                Err(e) => return Err(MetricError::Checker(e.to_string())),
            };
            let (cbs_value, warning) = match embedder {
                Some(e) => match cbs(e, reference, &item.candidate) {
                    Ok(v) => (Some(v), None),
                    Err(err) => (None, Some(format!("{}: cbs unavailable: {err}", item.id))),
                },
                None => (None, None),
            };
            Ok((
                ItemScores {
                    id: item.id.clone(),
                    metrics: MetricVector {
                        bleu2: bleu2(reference, &item.candidate)?,
                        chrf: chrf(reference, &item.candidate)?,
                        ruby: ruby(reference, &item.candidate),
                        cbs: cbs_value,
                        pass: errors == 0,
                    },
                    errors,
                },
                warning,
            ))
        })
        .collect();
    let mut rows = Vec::with_capacity(scored.len());
    for r in scored {
        let (row, warning) = r?;
        warnings.extend(warning);
        rows.push(row);
    }

    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&MetricVector) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    let pairs: Vec<(&str, &str)> = usable.iter().map(|(i, r)| (*r, i.candidate.as_str())).collect();
    let all_cbs: Option<Vec<f64>> = rows.iter().map(|r| r.metrics.cbs).collect();
    let aggregate = AggregateScores {
        items: rows.len(),
        bleu2: corpus_bleu2(&pairs)?,
        bleu2_sentence_mean: mean(&|m| m.bleu2),
        chrf: mean(&|m| m.chrf),
        ruby: mean(&|m| m.ruby),
        cbs: all_cbs.as_ref().map(|v| v.iter().sum::<f64>() / n),
        pass: 100.0 * rows.iter().filter(|r| r.metrics.pass).count() as f64 / n,
    };

    let correlation = if rows.len() >= 2 {
        let mut columns = vec![
            ("BLEU-2".to_string(), rows.iter().map(|r| r.metrics.bleu2).collect()),
            ("ChrF".to_string(), rows.iter().map(|r| r.metrics.chrf).collect()),
            ("RUBY".to_string(), rows.iter().map(|r| r.metrics.ruby).collect()),
        ];
        if let Some(v) = all_cbs {
            columns.push(("CBS".to_string(), v));
        }
        columns.push((
            "Pass".to_string(),
            rows.iter().map(|r| f64::from(u8::from(r.metrics.pass))).collect(),
        ));
        Some(pearson_matrix(&columns)?)
    } else {
        None
    };

    Ok(EvaluationReport {
        llm: llm.to_string(),
        method: method.to_string(),
        checker_backend: checker.backend().to_string(),
        embedder: embedder.map(|e| e.name().to_string()),
        items: rows,
        aggregate,
        correlation,
        warnings,
    })
}

/// A row of a results table: model, method, and BLEU-2/ChrF/RUBY/CBS/Pass
/// cells already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub llm: String,
    pub method: String,
    pub cells: Vec<String>,
}

/// Aligned plain-text table with the LLM, Method and metric columns.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut header = vec!["LLM".to_string(), "Method".to_string()];
    header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
    let table: Vec<Vec<String>> = std::iter::once(header)
        .chain(rows.iter().map(|r| {
            let mut v = vec![r.llm.clone(), r.method.clone()];
            v.extend(r.cells.iter().cloned());
            v
        }))
        .collect();
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c < 2 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl EvaluationReport {
    pub fn table_row(&self) -> TableRow {
        TableRow {
            llm: self.llm.clone(),
            method: self.method.clone(),
            cells: self.aggregate.columns().into_iter().map(cell).collect(),
        }
    }

    pub fn render_table(&self) -> String {
        let mut out = format_table(&[self.table_row()]);
        out.push_str(&format!(
            "\nitems: {}  checker: {}  mean sentence BLEU-2: {:.2}\n",
            self.aggregate.items, self.checker_backend, self.aggregate.bleu2_sentence_mean
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let a = &self.aggregate;
        format!(
            "llm,method,bleu2,chrf,ruby,cbs,pass,bleu2_sentence_mean,items,checker\n{},{},{:.4},{:.4},{:.4},{},{:.4},{:.4},{},{}\n",
            csv_field(&self.llm),
            csv_field(&self.method),
            a.bleu2,
            a.chrf,
            a.ruby,
            a.cbs.map_or(String::new(), |v| format!("{v:.4}")),
            a.pass,
            a.bleu2_sentence_mean,
            a.items,
            self.checker_backend
        )
    }

    pub fn items_csv(&self) -> String {
        let mut out = String::from("id,bleu2,chrf,ruby,cbs,pass,errors\n");
        for r in &self.items {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{},{},{}\n",
                csv_field(&r.id),
                m.bleu2,
                m.chrf,
                m.ruby,
                m.cbs.map_or(String::new(), |v| format!("{v:.4}")),
                u8::from(m.pass),
                r.errors
            ));
        }
        out
    }

    /// Writes `report.txt`, `summary.csv`, `items.csv`, `correlation.csv`
    /// and `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), self.render_table())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("items.csv"), self.items_csv())?;
        if let Some(c) = &self.correlation {
            fs::write(dir.join("correlation.csv"), c.to_csv())?;
        }
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join("report.json"), json + "\n")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
