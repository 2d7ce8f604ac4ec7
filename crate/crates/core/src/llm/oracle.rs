use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionProvider, CompletionRequest, CompletionResult, ProviderError};
use crate::corpus::Dataset;
use crate::prompts::PromptFamily;

/// Seeded corruption applied by [`OracleProvider`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub append_explanation: bool,
    pub append_proof: bool,
    /// Probability that each `\<in>` becomes `::` in autoformalization output.
    pub corrupt_symbol_rate: f64,
    /// Probability that each `)` is dropped in autoformalization output.
    pub drop_bracket_rate: f64,
    pub seed: u64,
    /// `\<in>` to `::` rate for PBD 1A; 1B gets half, 1C a quarter, 1D none.
    pub style_bias_rate: f64,
    /// Chance that a repair prompt fixes the reported error.
    pub repair_probability: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::clean()
    }
}

impl NoiseSpec {
    pub fn clean() -> Self {
        NoiseSpec {
            append_explanation: false,
            append_proof: false,
            corrupt_symbol_rate: 0.0,
            drop_bracket_rate: 0.0,
            seed: 0,
            style_bias_rate: 0.0,
            repair_probability: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("corrupt_symbol_rate", self.corrupt_symbol_rate),
            ("drop_bracket_rate", self.drop_bracket_rate),
            ("style_bias_rate", self.style_bias_rate),
            ("repair_probability", self.repair_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleTruth {
    pub statement: String,
    pub comment: String,
}

/// Answers every prompt family from the ground truth of the requested item.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    name: String,
    truths: HashMap<String, OracleTruth>,
    pub noise: NoiseSpec,
}

impl OracleProvider {
    pub fn new(name: &str, truths: HashMap<String, OracleTruth>, noise: NoiseSpec) -> Self {
        OracleProvider {
            name: name.to_string(),
            truths,
            noise,
        }
    }

    pub fn from_dataset(name: &str, dataset: &Dataset, noise: NoiseSpec) -> Self {
        let truths = dataset
            .items
            .iter()
            .map(|i| {
                (
                    i.id.clone(),
                    OracleTruth {
                        statement: i.formal_statement.clone(),
                        comment: i.comment.clone(),
                    },
                )
            })
            .collect();
        Self::new(name, truths, noise)
    }

    fn rng(&self, request: &CompletionRequest, family: PromptFamily) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.noise.seed.to_le_bytes());
        h.update(request.hints.item_id.as_deref().unwrap_or("").as_bytes());
        h.update([0]);
        h.update(format!("{family:?}").as_bytes());
        h.update([0]);
        h.update(request.prompt.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }

    /// Autoformalization answer: the ground truth with the configured noise.
    pub fn noisy_statement(&self, truth: &str, rng: &mut impl Rng) -> String {
        let mut out = replace_in(truth, self.noise.corrupt_symbol_rate, rng);
        if self.noise.drop_bracket_rate > 0.0 {
            out = drop_closers(&out, self.noise.drop_bracket_rate, rng);
        }
        if self.noise.append_proof {
            out.push('\n');
            out.push_str(PROOFS.choose(rng).expect("non-empty"));
        }
        if self.noise.append_explanation {
            match rng.random_range(0..4) {
                0 => {
                    out = format!(
                        "{}\n```isabelle\n{out}\n```\n{}",
                        LEADS.choose(rng).expect("non-empty"),
                        paragraph(rng)
                    );
                }
                1 => {
                    out.push_str("\n(* Note: ");
                    out.push_str(&paragraph(rng).replace('\n', " "));
                    out.push_str(" *)");
                }
                _ => {
                    out.push('\n');
                    out.push_str(&paragraph(rng));
                }
            }
        }
        out
    }
}

impl CompletionProvider for OracleProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        let family = request
            .hints
            .family
            .ok_or_else(|| ProviderError::unavailable("request carries no prompt family"))?;
        let id = request
            .hints
            .item_id
            .as_deref()
            .ok_or_else(|| ProviderError::unavailable("request carries no item id"))?;
        let truth = self
            .truths
            .get(id)
            .ok_or_else(|| ProviderError::unavailable(format!("no ground truth for `{id}`")))?;
        let mut rng = self.rng(request, family);
        let text = match family {
            PromptFamily::Informalize => {
                if truth.comment.trim().is_empty() {
                    format!("A statement named {id}.")
                } else {
                    truth.comment.clone()
                }
            }
            PromptFamily::Autoformalize => self.noisy_statement(&truth.statement, &mut rng),
            PromptFamily::Pbd1A | PromptFamily::Pbd1B | PromptFamily::Pbd1C | PromptFamily::Pbd1D => {
                let factor = match family {
                    PromptFamily::Pbd1A => 1.0,
                    PromptFamily::Pbd1B => 0.5,
                    PromptFamily::Pbd1C => 0.25,
                    _ => 0.0,
                };
                replace_in(&truth.statement, self.noise.style_bias_rate * factor, &mut rng)
            }
            PromptFamily::Autosef => {
                let code = request
                    .hints
                    .input_code
                    .as_deref()
                    .ok_or_else(|| ProviderError::unavailable("repair request without code"))?;
                let at = request
                    .hints
                    .diagnostic
                    .as_ref()
                    .map_or(0, |d| d.byte_position(code));
                if rng.random::<f64>() < self.noise.repair_probability {
                    repair_nearest(code, &truth.statement, at)
                } else {
                    code.to_string()
                }
            }
        };
        Ok(CompletionResult::text_only(&self.name, text))
    }
}

const PROOFS: [&str; 5] = [
    "proof -\n  from assms show ?thesis by simp\nqed",
    "by simp",
    "  using assms by blast",
    "by (auto simp add: assms)",
    "proof\n  assume \"x \\<in> X\"\n  then show ?thesis by auto\nqed",
];

const LEADS: [&str; 3] = [
    "Here is the formalization in Isabelle/ZF:",
    "Here is the translated lemma:",
    "Sure, the Isabelle/ZF version is as follows.",
];

const SUBJECTS: [&str; 6] = [
    "the statement",
    "this result",
    "the formal version",
    "the lemma above",
    "the translation",
    "this definition",
];

const PREDICATES: [&str; 6] = [
    "captures the natural language description closely",
    "relies on the notation introduced in the locale",
    "assumes that the underlying set is nonempty",
    "uses the standard set membership operator",
    "should be read together with the previous results",
    "follows directly from the definitions involved",
];

fn paragraph(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n)
        .map(|i| {
            let subject = SUBJECTS.choose(rng).expect("non-empty");
            let predicate = PREDICATES.choose(rng).expect("non-empty");
            let lead = if i == 0 { "Note that" } else { "In particular" };
            format!("{lead} {subject} {predicate}.")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Replaces each `\<in>` by `::` with probability `rate`.
fn replace_in(s: &str, rate: f64, rng: &mut impl Rng) -> String {
    if rate <= 0.0 {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut parts = s.split("\\<in>");
    out.push_str(parts.next().unwrap_or(""));
    for part in parts {
        out.push_str(if rng.random::<f64>() < rate { "::" } else { "\\<in>" });
        out.push_str(part);
    }
    out
}

fn drop_closers(s: &str, rate: f64, rng: &mut impl Rng) -> String {
    s.chars()
        .filter(|&c| c != ')' || rng.random::<f64>() >= rate)
        .collect()
}

/// Splits text into diff units: whitespace runs, `\<…>` symbols, words
/// and single characters.
pub(crate) fn diff_units(s: &str) -> Vec<&str> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let start = i;
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            while i < s.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
        } else if let Some(len) = crate::isar::symbol_len(s, i) {
            i += len;
        } else if crate::isar::is_word_byte(b) {
            while i < s.len() && crate::isar::is_word_byte(bytes[i]) {
                i += 1;
            }
        } else {
            i += s[i..].chars().next().map_or(1, char::len_utf8);
        }
        out.push(&s[start..i]);
    }
    out
}

/// A differing region: `code[a0..a1]` should become `truth[b0..b1]`
/// (indices into the diff units).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Hunk {
    pub a0: usize,
    pub a1: usize,
    pub b0: usize,
    pub b1: usize,
}

pub(crate) fn diff_hunks(a: &[&str], b: &[&str]) -> Vec<Hunk> {
    let (n, m) = (a.len(), b.len());
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    // Walk the table; collect equal pairs.
    let mut equal = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            equal.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    equal.push((n, m));

    let mut hunks: Vec<Hunk> = Vec::new();
    let (mut pa, mut pb) = (0, 0);
    let mut last_equal_ws_only = true;
    let mut run_start: Option<(usize, usize)> = None;
    for &(ea, eb) in &equal {
        if ea > pa || eb > pb {
            let h = Hunk {
                a0: pa,
                a1: ea,
                b0: pb,
                b1: eb,
            };
            match hunks.last_mut() {
                // Separated from the previous hunk only by whitespace.
                Some(prev) if last_equal_ws_only && run_start.is_some() => {
                    prev.a1 = h.a1;
                    prev.b1 = h.b1;
                }
                _ => hunks.push(h),
            }
            run_start = None;
        }
        if ea < n || eb < m {
            if run_start.is_none() {
                run_start = Some((ea, eb));
                last_equal_ws_only = true;
            }
            if !a[ea].trim().is_empty() {
                last_equal_ws_only = false;
            }
        }
        pa = ea + 1;
        pb = eb + 1;
        if !hunks.is_empty() && run_start.is_none() {
            run_start = Some((ea, eb));
            last_equal_ws_only = a.get(ea).is_some_and(|t| t.trim().is_empty());
        }
    }
    hunks
}

/// Applies the diff hunk that contains byte `at` of `code`, or else the one
/// nearest to it (earliest on ties).
pub(crate) fn repair_nearest(code: &str, truth: &str, at: usize) -> String {
    let a = diff_units(code);
    let b = diff_units(truth);
    let hunks = diff_hunks(&a, &b);
    let mut offsets = Vec::with_capacity(a.len() + 1);
    let mut pos = 0;
    for u in &a {
        offsets.push(pos);
        pos += u.len();
    }
    offsets.push(pos);
    let distance = |h: &Hunk| {
        let (s, e) = (offsets[h.a0], offsets[h.a1]);
        if at >= s && at <= e {
            0
        } else if at < s {
            s - at
        } else {
            at - e
        }
    };
    let Some(best) = hunks.iter().min_by_key(|h| (distance(h), h.a0)) else {
        return code.to_string();
    };
    let mut out = String::with_capacity(truth.len().max(code.len()));
    out.push_str(&code[..offsets[best.a0]]);
    for u in &b[best.b0..best.b1] {
        out.push_str(u);
    }
    out.push_str(&code[offsets[best.a1]..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::{Severity, SyntaxDiagnostic};

    const TRUTH: &str = "lemma a1: assumes \"x \\<in> X\" shows \"x \\<in> X\"";

    fn oracle(noise: NoiseSpec) -> OracleProvider {
        let truths = HashMap::from([(
            "t.a1".to_string(),
            OracleTruth {
                statement: TRUTH.into(),
                comment: "Membership is preserved.".into(),
            },
        )]);
        OracleProvider::new("oracle", truths, noise)
    }

    fn req(family: PromptFamily, prompt: &str) -> CompletionRequest {
        let mut r = CompletionRequest::new(prompt).for_item("t.a1");
        r.hints.family = Some(family);
        r
    }

    #[test]
    fn clean_is_ground_truth() {
        let o = oracle(NoiseSpec::clean());
        let out = o.complete(&req(PromptFamily::Autoformalize, "p")).unwrap();
        assert_eq!(out.text, TRUTH);
        let inf = o.complete(&req(PromptFamily::Informalize, "p")).unwrap();
        assert_eq!(inf.text, "Membership is preserved.");
    }

    #[test]
    fn appended_proof() {
        let o = oracle(NoiseSpec {
            append_proof: true,
            ..NoiseSpec::clean()
        });
        for seed_prompt in ["p1", "p2", "p3", "p4", "p5", "p6"] {
            let out = o.complete(&req(PromptFamily::Autoformalize, seed_prompt)).unwrap().text;
            let tail = out.strip_prefix(TRUTH).unwrap().trim_start();
            assert!(
                ["proof", "by", "using"].iter().any(|k| tail.starts_with(k)),
                "{tail}"
            );
        }
    }

    #[test]
    fn full_symbol_corruption() {
        let o = oracle(NoiseSpec {
            corrupt_symbol_rate: 1.0,
            ..NoiseSpec::clean()
        });
        let out = o.complete(&req(PromptFamily::Autoformalize, "p")).unwrap().text;
        assert!(!out.contains("\\<in>"));
        assert_eq!(out.matches("::").count(), 2);
    }

    #[test]
    fn deterministic() {
        let noise = NoiseSpec {
            append_explanation: true,
            append_proof: true,
            corrupt_symbol_rate: 0.5,
            seed: 9,
            ..NoiseSpec::clean()
        };
        let a = oracle(noise.clone()).complete(&req(PromptFamily::Autoformalize, "p")).unwrap();
        let b = oracle(noise).complete(&req(PromptFamily::Autoformalize, "p")).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn pbd_bias_by_variant() {
        let o = oracle(NoiseSpec {
            style_bias_rate: 1.0,
            ..NoiseSpec::clean()
        });
        let a = o.complete(&req(PromptFamily::Pbd1A, "p")).unwrap().text;
        assert!(a.contains("::"));
        let d = o.complete(&req(PromptFamily::Pbd1D, "p")).unwrap().text;
        assert_eq!(d, TRUTH);
    }

    #[test]
    fn repairs_one_hunk_at_a_time() {
        let broken = "lemma a1: assumes \"x \\<zzz> X\" assumes shows \"x \\<in> X";
        let o = oracle(NoiseSpec::clean());
        let diag = |code: &str, needle: &str| SyntaxDiagnostic {
            line: 1,
            offset: code.find(needle).unwrap(),
            end_offset: None,
            message: String::new(),
            severity: Severity::Error,
        };
        let step = |code: &str, needle: &str| {
            o.complete(
                &req(PromptFamily::Autosef, code)
                    .with_input(code)
                    .with_diagnostic(&diag(code, needle)),
            )
            .unwrap()
            .text
        };
        let one = step(broken, "\\<zzz>");
        assert_eq!(one, "lemma a1: assumes \"x \\<in> X\" assumes shows \"x \\<in> X");
        let two = step(&one, "assumes shows");
        assert_eq!(two, "lemma a1: assumes \"x \\<in> X\" shows \"x \\<in> X");
        let three = step(&two, "\"x \\<in> X\"");
        assert_eq!(three, TRUTH);
    }

    #[test]
    fn unknown_item() {
        let o = oracle(NoiseSpec::clean());
        let mut r = CompletionRequest::new("p").for_item("nope");
        r.hints.family = Some(PromptFamily::Autoformalize);
        assert!(o.complete(&r).is_err());
    }

    #[test]
    fn rates_validated() {
        let bad = NoiseSpec {
            drop_bracket_rate: 1.5,
            ..NoiseSpec::clean()
        };
        assert!(bad.validate().is_err());
        assert!(NoiseSpec::clean().validate().is_ok());
    }
}
