mod common;

use std::collections::HashMap;

use autoformal::checker::{error_count, OfflineChecker, SyntaxChecker};
use autoformal::denoise::{cbd, cbd_with, denoise, CbdRules, DenoiseStatus, PbdContext};
use autoformal::llm::{DecodingConfig, ScriptedProvider};
use autoformal::prompts::TemplateSet;
use autoformal::synth::fuzz_text;
use autoformal::{DenoiseMode, PbdVariant};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;

fn char_counts(s: &str) -> HashMap<char, usize> {
    let mut m = HashMap::new();
    for c in s.chars() {
        *m.entry(c).or_default() += 1;
    }
    m
}

fn fuzzed() -> impl Strategy<Value = String> {
    any::<u64>().prop_map(|seed| fuzz_text(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn idempotent_on_fuzzed_text(text in fuzzed()) {
        let once = cbd(&text);
        prop_assert_eq!(cbd(&once), once);
    }

    #[test]
    fn idempotent_on_arbitrary_text(text in "(?s).{0,200}") {
        let once = cbd(&text);
        prop_assert_eq!(cbd(&once), once);
    }

    #[test]
    fn never_adds_characters(text in fuzzed()) {
        let before = char_counts(&text);
        for (c, n) in char_counts(&cbd(&text)) {
            prop_assert!(before.get(&c).copied().unwrap_or(0) >= n, "{:?} appears more often", c);
        }
    }

    #[test]
    fn without_fence_and_comment_rules_output_is_a_substring(text in fuzzed()) {
        let rules = CbdRules { strip_fences: false, drop_comments: false, ..CbdRules::ALL };
        let out = cbd_with(&text, rules);
        prop_assert!(text.contains(&out), "{:?} not within {:?}", out, text);
    }
}

#[test]
fn recovers_ground_truth_from_explanations_and_proofs() {
    let cases = noise_cases(1000, 21);
    let failures: Vec<_> = cases.iter().filter(|(noisy, truth)| cbd(noisy) != *truth).collect();
    assert!(failures.len() <= 50, "{} failures, first: {:?}", failures.len(), failures.first());
}

#[test]
fn case_study_outcomes() {
    let checker = OfflineChecker::default();
    for row in case_study() {
        let diags = checker.check(&cbd(row.raw)).unwrap();
        assert_eq!(error_count(&diags) > 0, row.flagged_at.is_some(), "{}: {diags:?}", row.label);
    }
}

#[test]
fn cbd_strips_fences_lead_and_trailing_proof() {
    let raw = "Here is the formalization:\n```isabelle\nlemma foo: assumes \"x \\<in> A\" shows \"x \\<in> B\"\nproof -\n  show ?thesis by auto\nqed\n```\nThis works because A is a subset of B.";
    assert_eq!(cbd(raw), "lemma foo: assumes \"x \\<in> A\" shows \"x \\<in> B\"");
}

#[test]
fn mode_names_round_trip() {
    for s in ["cbd", "1A", "1B+cbd", "1D+cbd"] {
        let m: DenoiseMode = s.parse().unwrap();
        assert_eq!(m.to_string(), s);
    }
    assert_eq!("1c".parse::<DenoiseMode>().unwrap().pbd_variant, Some(PbdVariant::C));
    for bad in ["", "1E", "cbd+1A", "1A+pbd"] {
        assert!(bad.parse::<DenoiseMode>().is_err(), "{bad}");
    }
}

#[test]
fn failed_pbd_falls_back_to_cbd() {
    let provider = ScriptedProvider::new("empty");
    let templates = TemplateSet::default();
    let decoding = DecodingConfig::default();
    let ctx = PbdContext {
        provider: &provider,
        templates: &templates,
        retrieved: &[],
        item_id: Some("x"),
        decoding: &decoding,
    };
    let raw = "```\nlemma a: shows \"x \\<in> A\"\n```\nby simp";
    let out = denoise(Some(&ctx), "1A+cbd".parse().unwrap(), raw, CbdRules::ALL);
    assert!(matches!(out.status, DenoiseStatus::FailedDenoise { .. }));
    assert_eq!(out.text, cbd(raw));
}
