//! Fixtures and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use autoformal::autosef::{self, AutoSefConfig, AutoSefContext, RefinementTrace};
use autoformal::checker::OfflineChecker;
use autoformal::corpus::CorpusItem;
use autoformal::denoise::CbdRules;
use autoformal::llm::{CompletionProvider, CompletionRequest, DecodingConfig, NoiseSpec, OracleProvider, OracleTruth};
use autoformal::prompts::{fixed_exemplars, PromptFamily, TemplateSet};
use autoformal::synth::{repair_items, RepairItem};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/isarmathlib")
}

pub fn golden_items() -> Vec<CorpusItem> {
    std::fs::read_to_string(fixture("isarmathlib_golden.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[derive(serde::Deserialize)]
pub struct MetricCase {
    pub reference: String,
    pub candidate: String,
}

pub fn metric_cases() -> Vec<MetricCase> {
    serde_json::from_str(&std::fs::read_to_string(fixture("metric_oracle_cases.json")).unwrap()).unwrap()
}

// ---- reference metrics -------------------------------------------------

fn count_occurrences<T: PartialEq>(hay: &[T], needle: &[T]) -> usize {
    if needle.len() > hay.len() {
        return 0;
    }
    (0..=hay.len() - needle.len()).filter(|&i| &hay[i..i + needle.len()] == needle).count()
}

/// Clipped n-gram matches by enumerating every distinct candidate n-gram
/// and counting occurrences by scanning.
fn brute_matches<T: PartialEq + Clone>(reference: &[T], candidate: &[T], n: usize) -> usize {
    if candidate.len() < n {
        return 0;
    }
    let mut seen: Vec<Vec<T>> = Vec::new();
    let mut total = 0;
    for i in 0..=candidate.len() - n {
        let g = candidate[i..i + n].to_vec();
        if seen.contains(&g) {
            continue;
        }
        total += count_occurrences(candidate, &g).min(count_occurrences(reference, &g));
        seen.push(g);
    }
    total
}

pub fn oracle_bleu2(reference: &[String], candidate: &[String]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut logs = Vec::new();
    for n in 1..=2usize {
        let cand_ngrams = (candidate.len() + 1).saturating_sub(n);
        let ref_ngrams = (reference.len() + 1).saturating_sub(n);
        if cand_ngrams == 0 && ref_ngrams == 0 {
            continue;
        }
        let m = brute_matches(reference, candidate, n) as f64;
        let m = if m == 0.0 { 1e-9 } else { m };
        logs.push((m / cand_ngrams.max(1) as f64).ln());
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

pub fn oracle_chrf(reference: &str, candidate: &str) -> f64 {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let c: Vec<char> = candidate.chars().filter(|c| !c.is_whitespace()).collect();
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for n in 1..=6 {
        let m = brute_matches(&r, &c, n);
        if m > 0 {
            precisions.push(m as f64 / (c.len() - n + 1) as f64);
            recalls.push(m as f64 / (r.len() - n + 1) as f64);
        }
    }
    if precisions.is_empty() {
        return 0.0;
    }
    let p = precisions.iter().sum::<f64>() / precisions.len() as f64;
    let rc = recalls.iter().sum::<f64>() / recalls.len() as f64;
    100.0 * 10.0 * p * rc / (9.0 * p + rc)
}

/// Edit distance by memoized recursion over suffixes.
pub fn oracle_levenshtein(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    go(&a, &b, 0, 0, &mut HashMap::new())
}

pub fn oracle_ruby(reference: &str, candidate: &str) -> f64 {
    let longest = reference.chars().count().max(candidate.chars().count());
    if longest == 0 {
        return 100.0;
    }
    100.0 * (1.0 - oracle_levenshtein(reference, candidate) as f64 / longest as f64)
}

/// Raw-moment form of the Pearson coefficient.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    if den.abs() < 1e-12 {
        return None;
    }
    Some((n * sxy - sx * sy) / den)
}

// ---- BM25 --------------------------------------------------------------

/// Three short documents with hand-countable statistics.
pub const TOY_DOCS: [(&str, &str); 3] = [
    ("d1", "open set open cover"),
    ("d2", "closed set"),
    ("d3", "group inverse element of group"),
];

/// BM25 of `query` against `doc`, evaluated directly from the formula on
/// whitespace tokens. IDF is floored Robertson-Sparck-Jones.
pub fn bm25_by_hand(query: &str, doc: &str, k1: f64, b: f64) -> f64 {
    let docs: Vec<Vec<&str>> = TOY_DOCS.iter().map(|(_, t)| t.split(' ').collect()).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let d: Vec<&str> = doc.split(' ').collect();
    let mut score = 0.0;
    for term in query.split(' ') {
        let df = docs.iter().filter(|d| d.contains(&term)).count() as f64;
        if df == 0.0 {
            continue;
        }
        let idf = ((n - df + 0.5) / (df + 0.5)).ln().max(0.0);
        let tf = d.iter().filter(|t| **t == term).count() as f64;
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
    }
    score
}

// ---- denoising ---------------------------------------------------------

pub struct CaseStudyRow {
    pub label: &'static str,
    pub raw: &'static str,
    /// `None` when the statement should pass; otherwise text at the first
    /// error.
    pub flagged_at: Option<&'static str>,
}

/// Outputs of one natural-language statement under each setting.
pub fn case_study() -> Vec<CaseStudyRow> {
    vec![
        CaseStudyRow {
            label: "3-shot",
            raw: "lemma open_set_in_nhs: assumes \"X = \\<bigcup> T\" \"T \\<in>\n  Covers(X)\" \"U \\<in> Open(X)\"shows \"U \\<in> NHS(X)\"\nwhere NHS(X) is a predicate representing the natural \nneighborhood system on X. Note: The definition of NHS(X) \nshould be provided before using this lemma.",
            flagged_at: Some("\\<bigcup>"),
        },
        CaseStudyRow {
            label: "MS-RAG",
            raw: "lemma open_is_neighbors: assumes \"U \\<in> T\" and \"x \\<in> U\" \n  shows \"U \\<in> ({neighborhood system of} T)`(x)\"\n(* Note: This lemma assumes that T is a topology, but it is\nnot explicitly stated in the natural language version.*)",
            flagged_at: None,
        },
        CaseStudyRow {
            label: "PBD 1A",
            raw: "lemma open_is_neighbors: assumes \"U :: set T\" and \"x :: T\" \n  shows \"U :: ({neighborhood system of} T) x\"",
            flagged_at: Some("::"),
        },
        CaseStudyRow {
            label: "PBD 1B",
            raw: "lemma open_is_neighbors: assumes \"U \\<in> T\" and \"x \\<in> U\" \n  shows \"U \\<in> ({neighborhood\\_system} T)`(x)\"",
            flagged_at: Some("\\_"),
        },
        CaseStudyRow {
            label: "PBD 1C",
            raw: "lemma open_is_neighbors: assumes \"U \\<in> T\" \"x \\<in> U\" \n  shows \"U \\<in> ({neighborhood system of} T) x\"",
            flagged_at: Some(") x"),
        },
        CaseStudyRow {
            label: "PBD 1D",
            raw: "lemma open_is_neighbors: assumes \"U \\<in> T\" and \"x \\<in> U\" \n  shows \"U \\<in> ({neighborhood system of} T)`(x)\"",
            flagged_at: None,
        },
    ]
}

/// `n` (noisy output, ground truth) pairs: well-formed statements with
/// appended proofs and explanations as the oracle model produces them.
pub fn noise_cases(n: usize, seed: u64) -> Vec<(String, String)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut truths = HashMap::new();
    let mut ids = Vec::new();
    let golden = golden_items();
    for i in 0..n {
        let statement = if i % 4 == 0 {
            golden[i / 4 % golden.len()].formal_statement.clone()
        } else {
            autoformal::synth::statement(&format!("noise_{i}"), &mut rng)
        };
        let id = format!("N.{i}");
        truths.insert(
            id.clone(),
            OracleTruth {
                statement,
                comment: String::new(),
            },
        );
        ids.push(id);
    }
    let oracle = OracleProvider::new(
        "noisy",
        truths.clone(),
        NoiseSpec {
            append_explanation: true,
            append_proof: true,
            seed,
            ..NoiseSpec::clean()
        },
    );
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| {
            let mut req = CompletionRequest::new(format!("case {i}")).for_item(&id);
            req.hints.family = Some(PromptFamily::Autoformalize);
            let mut text = oracle.complete(&req).unwrap().text;
            let truth = truths[&id].statement.clone();
            // a third of the cases carry only a trailing proof
            if i % 3 == 1 {
                text = format!("{truth}\nby simp");
            }
            (text, truth)
        })
        .collect()
}

// ---- repair ------------------------------------------------------------

pub fn repair_oracle(items: &[RepairItem], probability: f64, seed: u64) -> OracleProvider {
    let truths = items
        .iter()
        .map(|i| {
            (
                i.id.clone(),
                OracleTruth {
                    statement: i.truth.clone(),
                    comment: String::new(),
                },
            )
        })
        .collect();
    OracleProvider::new(
        "repair",
        truths,
        NoiseSpec {
            repair_probability: probability,
            seed,
            ..NoiseSpec::clean()
        },
    )
}

/// Runs the repair loop over `n` seeded repair items.
pub fn repair_traces(n: usize, seed: u64, probability: f64, config: &AutoSefConfig) -> Vec<RefinementTrace> {
    let items = repair_items(n, seed);
    let oracle = repair_oracle(&items, probability, seed);
    let checker = OfflineChecker::default();
    let templates = TemplateSet::default();
    let exemplars = fixed_exemplars();
    let decoding = DecodingConfig::default();
    items
        .iter()
        .map(|item| {
            let ctx = AutoSefContext {
                provider: &oracle,
                checker: &checker,
                templates: &templates,
                exemplars: &exemplars,
                item_id: Some(&item.id),
                decoding: &decoding,
                rules: CbdRules::ALL,
            };
            autosef::run(&ctx, &item.code, config).unwrap()
        })
        .collect()
}
