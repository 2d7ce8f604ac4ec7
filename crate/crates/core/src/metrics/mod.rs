//! Similarity metrics (BLEU-2, chrF, RUBY, embedding score), Pass rate,
//! Pearson correlation and per-run reports.

mod cbs;
mod report;
mod similarity;

use serde::{Deserialize, Serialize};

pub use cbs::{cbs, cbs_vectors, Embedder, HashEmbedder, OneHotEmbedder};
pub use report::{
    evaluate, format_table, AggregateScores, EvalItem, EvaluationReport, ItemScores, TableRow,
    METRIC_NAMES,
};
pub use similarity::{
    bleu2, chrf, corpus_bleu2, levenshtein, ruby, BleuStats, BLEU_EPSILON, CHRF_BETA,
    CHRF_MAX_ORDER,
};

use crate::checker::{passes, SyntaxDiagnostic};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("not enough data")]
    InsufficientData,
    #[error("columns have different lengths")]
    RaggedColumns,
    #[error("embedding: {0}")]
    Embedding(String),
    #[error("checker: {0}")]
    Checker(String),
}

/// Scores of one item, each in 0–100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub bleu2: f64,
    pub chrf: f64,
    pub ruby: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cbs: Option<f64>,
    pub pass: bool,
}

/// Share (0–100) of diagnostic lists with no errors.
pub fn pass_rate(lists: &[Vec<SyntaxDiagnostic>]) -> Result<f64, MetricError> {
    if lists.is_empty() {
        return Err(MetricError::InsufficientData);
    }
    let clean = lists.iter().filter(|d| passes(d)).count();
    Ok(100.0 * clean as f64 / lists.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `None` where a column has zero variance.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.values[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v:.6}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Pearson coefficient of two equal-length samples; `None` when either has
/// zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson_matrix(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix, MetricError> {
    let rows = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(MetricError::RaggedColumns);
    }
    if rows < 2 {
        return Err(MetricError::InsufficientData);
    }
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = if i == j {
                pearson(&columns[i].1, &columns[i].1).map(|_| 1.0)
            } else {
                pearson(&columns[i].1, &columns[j].1)
            };
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(CorrelationMatrix {
        names: columns.iter().map(|c| c.0.clone()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::Severity;

    fn diag(sev: Severity) -> SyntaxDiagnostic {
        SyntaxDiagnostic {
            line: 1,
            offset: 0,
            end_offset: None,
            message: "m".into(),
            severity: sev,
        }
    }

    #[test]
    fn pass_rates() {
        let mut lists = vec![Vec::new(); 177];
        lists.extend(vec![vec![diag(Severity::Error)]; 97]);
        assert!((pass_rate(&lists).unwrap() - 64.60).abs() < 0.005);
        assert_eq!(pass_rate(&[vec![diag(Severity::Warning)]]).unwrap(), 100.0);
        assert_eq!(pass_rate(&[vec![diag(Severity::Error)]]).unwrap(), 0.0);
        assert!(pass_rate(&[]).is_err());
    }

    #[test]
    fn correlation_basics() {
        let x = vec![1.0, 2.0, 3.0, 5.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let flat = vec![2.0; 4];
        let m = pearson_matrix(&[
            ("x".into(), x),
            ("neg".into(), neg),
            ("flat".into(), flat),
        ])
        .unwrap();
        assert_eq!(m.get("x", "x"), Some(1.0));
        assert!((m.get("x", "neg").unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.get("x", "flat"), None);
        assert_eq!(m.get("flat", "flat"), None);
        assert!(m.to_csv().starts_with("metric,x,neg,flat\n"));
    }

    #[test]
    fn correlation_errors() {
        assert!(pearson_matrix(&[("a".into(), vec![1.0])]).is_err());
        assert_eq!(
            pearson_matrix(&[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![1.0])]),
            Err(MetricError::RaggedColumns)
        );
    }
}
