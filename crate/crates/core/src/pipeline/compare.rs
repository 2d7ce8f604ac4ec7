use serde::{Deserialize, Serialize};

use super::record::RunHeader;
use super::PipelineError;
use crate::metrics::{format_table, EvaluationReport, TableRow, METRIC_NAMES};

/// Aggregate scores of one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub llm: String,
    pub method: String,
    pub config_hash: String,
    pub split_id: String,
    /// BLEU-2, ChrF, RUBY, CBS, Pass.
    pub scores: [Option<f64>; 5],
}

impl RunSummary {
    pub fn from_report(report: &EvaluationReport, header: &RunHeader) -> Self {
        RunSummary {
            llm: report.llm.clone(),
            method: report.method.clone(),
            config_hash: header.config_hash.clone(),
            split_id: header.split_id.clone(),
            scores: report.aggregate.columns(),
        }
    }
}

/// Scores rounded to cents; deltas are taken between the rounded values so
/// that they agree with the printed numbers.
pub fn delta_cents(before: f64, after: f64) -> i64 {
    (after * 100.0).round() as i64 - (before * 100.0).round() as i64
}

/// `+3.72`, `-0.35`, `+0.00`.
pub fn format_cents(cents: i64) -> String {
    let sign = if cents < 0 { '-' } else { '+' };
    let a = cents.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

/// `before (+delta)`, e.g. `6.33 (+3.72)`.
pub fn paired_cell(before: f64, after: f64) -> String {
    format!("{before:.2} ({})", format_cents(delta_cents(before, after)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
    pub baseline: Option<usize>,
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let mut out = format_table(&self.rows);
        out.push_str("\n* best value in the column\n");
        if let Some(b) = self.baseline {
            out.push_str(&format!(
                "deltas against {} / {}\n",
                self.rows[b].llm, self.rows[b].method
            ));
        }
        out
    }
}

/// Table of runs with the best value per column marked. With a baseline
/// (matched against method label or config hash prefix) the other rows
/// carry deltas. All runs must share the test split.
pub fn compare_runs(runs: &[RunSummary], baseline: Option<&str>) -> Result<ComparisonTable, PipelineError> {
    let Some(first) = runs.first() else {
        return Err(PipelineError::Config("no runs to compare".into()));
    };
    if let Some(other) = runs.iter().find(|r| r.split_id != first.split_id) {
        return Err(PipelineError::SplitMismatch {
            a: first.config_hash.clone(),
            b: other.config_hash.clone(),
        });
    }
    let base = match baseline {
        Some(name) => Some(
            runs.iter()
                .position(|r| r.method == name || (!name.is_empty() && r.config_hash.starts_with(name)))
                .ok_or_else(|| {
                    let known: Vec<&str> = runs.iter().map(|r| r.method.as_str()).collect();
                    PipelineError::Config(format!("baseline `{name}` is not among the runs ({})", known.join(", ")))
                })?,
        ),
        None => None,
    };
    let best: Vec<Option<i64>> = (0..METRIC_NAMES.len())
        .map(|c| runs.iter().filter_map(|r| r.scores[c]).map(cents).max())
        .collect();
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, r)| TableRow {
            llm: r.llm.clone(),
            method: r.method.clone(),
            cells: (0..METRIC_NAMES.len())
                .map(|c| {
                    let Some(v) = r.scores[c] else {
                        return "-".to_string();
                    };
                    let mut s = format!("{v:.2}");
                    if let Some(b) = base.filter(|b| *b != i).and_then(|b| runs[b].scores[c]) {
                        s.push_str(&format!(" ({})", format_cents(delta_cents(b, v))));
                    }
                    if best[c] == Some(cents(v)) && runs.len() > 1 {
                        s.push('*');
                    }
                    s
                })
                .collect(),
        })
        .collect();
    Ok(ComparisonTable { rows, baseline: base })
}

fn cents(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

/// One setting measured before and after a change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub label: String,
    pub before: [f64; 5],
    pub after: [f64; 5],
}

/// Metrics as rows, settings as columns, each cell `before (+delta)`.
pub fn render_paired(rows: &[PairedRow]) -> String {
    let mut table = vec![std::iter::once("Metric".to_string())
        .chain(rows.iter().map(|r| r.label.clone()))
        .collect::<Vec<_>>()];
    for (m, name) in METRIC_NAMES.iter().enumerate() {
        table.push(
            std::iter::once(name.to_string())
                .chain(rows.iter().map(|r| paired_cell(r.before[m], r.after[m])))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..=rows.len())
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * rows.len()));
            out.push('\n');
        }
    }
    out
}
