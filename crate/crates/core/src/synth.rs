//! Seeded synthetic fixtures: corpus items with distinct comments for
//! retrieval tests, well-formed statements, faulty statements for the
//! repair loop, and random text for fuzzing.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusItem, Dataset, ItemKind, Split};
use crate::faults::{inject_many, random_kinds};

const LOCALES: [Option<&str>; 4] = [None, Some("topology0"), Some("int0"), Some("group0")];
const VARS: [&str; 8] = ["a", "b", "x", "y", "z", "u", "v", "w"];
const SETS: [&str; 8] = ["A", "B", "C", "G", "T", "X", "Y", "U"];

const FORMULAS: [&str; 10] = [
    "{v} \\<in> {S}",
    "{S} \\<subseteq> {R}",
    "({v}\\<cdot>{w}) \\<in> {S}",
    "{v} \\<lsq> {v}\\<ra>{w}",
    "f`({v}) \\<in> {R}",
    "\\<Union>{S} = {R}",
    "{S} \\<inter> {R} \\<in> Pow({S})",
    "\\<forall>{v}\\<in>{S}. {v} \\<in> {R}",
    "{S} \\<union> {R} = {R} \\<union> {S}",
    "\\<langle>{v},{w}\\<rangle> \\<in> {S}\\<times>{R}",
];

fn formula(rng: &mut impl Rng) -> String {
    let template = FORMULAS.choose(rng).expect("non-empty");
    let mut vars = VARS.to_vec();
    vars.shuffle(rng);
    let mut sets = SETS.to_vec();
    sets.shuffle(rng);
    template
        .replace("{v}", vars[0])
        .replace("{w}", vars[1])
        .replace("{S}", sets[0])
        .replace("{R}", sets[1])
}

/// A well-formed lemma-style statement named `name`.
pub fn statement(name: &str, rng: &mut impl Rng) -> String {
    let keyword = ["lemma", "lemma", "theorem", "corollary"].choose(rng).expect("non-empty");
    let locale = LOCALES.choose(rng).expect("non-empty");
    let mut out = keyword.to_string();
    if let Some(l) = locale {
        out.push_str(&format!(" (in {l})"));
    }
    out.push_str(&format!(" {name}:"));
    let assumptions = rng.random_range(0..=2);
    if assumptions > 0 {
        out.push_str(" assumes");
        for _ in 0..assumptions {
            out.push_str(&format!(" \"{}\"", formula(rng)));
        }
        out.push_str("\n ");
    }
    out.push_str(&format!(" shows \"{}\"", formula(rng)));
    out
}

const ADJECTIVES: [&str; 20] = [
    "open", "closed", "compact", "finite", "nonempty", "bounded", "abelian", "normal", "cyclic",
    "dense", "discrete", "connected", "ordered", "total", "injective", "surjective", "monotone",
    "regular", "separable", "complete",
];
const NOUNS: [&str; 20] = [
    "set", "subgroup", "topology", "function", "relation", "interval", "sequence", "ring",
    "field", "cover", "filter", "ideal", "chain", "lattice", "metric", "basis", "partition",
    "product", "quotient", "image",
];
const VERBS: [&str; 10] = [
    "contains", "preserves", "extends", "separates", "generates", "bounds", "covers", "meets",
    "refines", "determines",
];

/// `n` train-split items whose comments are pairwise distinct as token
/// sets. Comments follow `The {adj} {noun} {verb} the {adj} {noun}.`
pub fn retrieval_fixture(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut items = Vec::with_capacity(n);
    while items.len() < n {
        let a1 = ADJECTIVES.choose(&mut rng).expect("non-empty");
        let n1 = NOUNS.choose(&mut rng).expect("non-empty");
        let v = VERBS.choose(&mut rng).expect("non-empty");
        let a2 = ADJECTIVES.choose(&mut rng).expect("non-empty");
        let n2 = NOUNS.choose(&mut rng).expect("non-empty");
        let mut key = vec![*a1, *n1, *v, *a2, *n2];
        key.sort_unstable();
        key.dedup();
        if key.len() < 5 || !seen.insert(key) {
            continue;
        }
        let i = items.len();
        let name = format!("syn_{i:04}");
        let formal_statement = statement(&name, &mut rng);
        let kind = crate::corpus::starts_with_item_keyword(&formal_statement).unwrap_or(ItemKind::Lemma);
        let locale = formal_statement
            .split_once("(in ")
            .and_then(|(_, rest)| rest.split_once(')'))
            .map(|(l, _)| l.to_string());
        items.push(CorpusItem {
            id: format!("Synth.{name}"),
            kind,
            locale,
            name: name.clone(),
            formal_statement,
            comment: format!("The {a1} {n1} {v} the {a2} {n2}."),
            proof: None,
            informalization: None,
            source_file: "synthetic".into(),
            split: Split::Train,
        });
    }
    Dataset {
        items,
        split_seed: seed,
        split_ratio: 1.0,
    }
}

/// `n` unassigned items with distinct ids, for split-size checks.
pub fn item_list(n: usize) -> Vec<CorpusItem> {
    (0..n)
        .map(|i| CorpusItem {
            id: format!("Synth.item_{i:05}"),
            kind: ItemKind::Lemma,
            locale: None,
            name: format!("item_{i:05}"),
            formal_statement: format!("lemma item_{i:05}: shows \"x{i} \\<in> X\""),
            comment: String::new(),
            proof: None,
            informalization: None,
            source_file: "synthetic".into(),
            split: Split::Unassigned,
        })
        .collect()
}

/// A statement with injected faults and its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairItem {
    pub id: String,
    pub truth: String,
    pub code: String,
    pub faults: usize,
}

/// Probability of 0, 1, 2 and 3 injected faults per repair item.
pub const FAULT_COUNT_WEIGHTS: [f64; 4] = [0.25, 0.35, 0.25, 0.15];

/// `n` repair items; the number of faults follows [`FAULT_COUNT_WEIGHTS`].
pub fn repair_items(n: usize, seed: u64) -> Vec<RepairItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let i = out.len();
        let id = format!("Synth.repair_{i:04}");
        let truth = statement(&format!("repair_{i:04}"), &mut rng);
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let mut faults = FAULT_COUNT_WEIGHTS.len() - 1;
        for (k, w) in FAULT_COUNT_WEIGHTS.iter().enumerate() {
            acc += w;
            if draw < acc {
                faults = k;
                break;
            }
        }
        let kinds = random_kinds(faults, &mut rng);
        let Some(code) = inject_many(&truth, &kinds, &mut rng) else {
            continue;
        };
        out.push(RepairItem {
            id,
            truth,
            code,
            faults,
        });
    }
    out
}

const FUZZ_PIECES: [&str; 40] = [
    "lemma", "theorem", "definition", "corollary", " ", " ", "\n", "\n\n", "\"", "\"x \\<in> X\"",
    "assumes", "shows", "proof", "qed", "by", "using", "apply", "(*", "*)", "(* note *)", "```",
    "```isabelle", "Note that this holds.", "Here is the lemma:", "a1:", ":", "(", ")", "{", "}",
    "\\<in>", "\\<open>", "\\<close>", "text", "This is a long explanation line", ".", "foo",
    "simp", "\t", "x\\<^sub>1",
];

/// Random text built from Isar fragments, prose and markdown pieces.
pub fn fuzz_text(rng: &mut impl Rng) -> String {
    let n = rng.random_range(0..24);
    (0..n)
        .map(|_| *FUZZ_PIECES.choose(rng).expect("non-empty"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::{offline_validate, SymbolWhitelist};

    #[test]
    fn statements_are_clean() {
        let wl = SymbolWhitelist::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..300 {
            let s = statement(&format!("s{i}"), &mut rng);
            assert_eq!(offline_validate(&s, &wl), vec![], "{s}");
        }
    }

    #[test]
    fn fixture_is_duplicate_free_and_seeded() {
        let a = retrieval_fixture(200, 7);
        assert_eq!(a.items.len(), 200);
        let mut comments: Vec<_> = a.items.iter().map(|i| i.comment.clone()).collect();
        comments.sort();
        comments.dedup();
        assert_eq!(comments.len(), 200);
        assert_eq!(a, retrieval_fixture(200, 7));
    }

    #[test]
    fn repair_items_are_faulty_as_declared() {
        let wl = SymbolWhitelist::default();
        for item in repair_items(100, 3) {
            let errors = offline_validate(&item.code, &wl).len();
            if item.faults == 0 {
                assert_eq!(item.code, item.truth);
                assert_eq!(errors, 0);
            } else {
                assert!(errors >= 1, "{}", item.code);
            }
        }
    }
}
