mod common;

use autoformal::corpus::{build_dataset, extract_dir, load_dataset, parse_theory_file, save_dataset, CorpusError};
use autoformal::synth::item_list;
use autoformal::{ItemKind, Split};
use common::*;

#[test]
fn extraction_matches_golden_fixture() {
    let items = extract_dir(&data_dir()).unwrap();
    assert_eq!(items, golden_items());
}

#[test]
fn statements_stop_before_the_proof() {
    for item in golden_items() {
        assert!(
            item.formal_statement.starts_with(item.kind.keyword()),
            "{}: {}",
            item.id,
            item.formal_statement
        );
        for kw in ["proof", "by ", "using "] {
            assert!(!item.formal_statement.trim_end().ends_with(kw.trim()), "{}", item.id);
        }
    }
}

#[test]
fn comment_attaches_to_the_next_item_only() {
    let thy = "theory T imports ZF begin\n\ntext\\<open>About foo.\\<close>\n\nlemma foo: shows \"a \\<in> A\" by simp\n\nlemma bar: shows \"b \\<in> B\" by simp\n\nend\n";
    let items = parse_theory_file(thy, "T.thy").unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0].comment, "About foo.");
    assert_eq!(items[1].comment, "");
    assert!(items[1].is_flagged());
    assert_eq!(items[0].kind, ItemKind::Lemma);
}

#[test]
fn split_is_deterministic_and_sized_by_rounding() {
    let a = build_dataset(item_list(2744), 0.9, 42).unwrap();
    let b = build_dataset(item_list(2744), 0.9, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.test().count(), 274);
    let c = build_dataset(item_list(2744), 0.9, 43).unwrap();
    assert_ne!(
        a.items.iter().map(|i| i.split).collect::<Vec<_>>(),
        c.items.iter().map(|i| i.split).collect::<Vec<_>>()
    );
    assert_eq!(build_dataset(item_list(10), 0.25, 1).unwrap().train().count(), 3);
    assert!(a.items.iter().all(|i| i.split != Split::Unassigned));
}

#[test]
fn bad_ratio_is_rejected() {
    for ratio in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(build_dataset(item_list(10), ratio, 1).is_err(), "{ratio}");
    }
}

#[test]
fn dataset_round_trips_through_jsonl() {
    let ds = build_dataset(golden_items(), 0.9, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.jsonl");
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);
}

#[test]
fn duplicate_ids_are_rejected_on_load() {
    let ds = build_dataset(golden_items(), 0.9, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.jsonl");
    save_dataset(&ds, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let last = text.lines().last().unwrap().to_string();
    std::fs::write(&path, format!("{text}{last}\n")).unwrap();
    let err = load_dataset(&path).unwrap_err();
    assert!(matches!(err, CorpusError::Schema { .. } | CorpusError::DuplicateId(..)), "{err}");
}
