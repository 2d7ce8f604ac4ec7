mod common;

use autoformal::corpus::build_dataset;
use autoformal::retrieval::{
    build_index, exemplars_for, load_index, make_query, retrieve, save_index, Bm25Params, IndexMode, KnowledgeBaseIndex,
    QueryMode, RetrievalError,
};
use autoformal::synth::retrieval_fixture;
use common::*;
use proptest::prelude::*;

fn toy() -> KnowledgeBaseIndex {
    KnowledgeBaseIndex::from_documents(TOY_DOCS, IndexMode::T, Bm25Params::default())
}

#[test]
fn toy_scores_match_hand_computation() {
    let index = toy();
    let p = Bm25Params::default();
    for (id, doc) in TOY_DOCS {
        let want = bm25_by_hand("open set", doc, p.k1, p.b);
        assert!((index.score("open set", id).unwrap() - want).abs() < 1e-9, "{id}");
    }
    let hits = retrieve(&index, "open set", 3).unwrap();
    assert_eq!(hits[0].item_id, "d1");
    assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn zero_scores_tie_break_by_id() {
    let hits = retrieve(&toy(), "unrelated words", 3).unwrap();
    assert!(hits.iter().all(|h| h.score == 0.0));
    assert_eq!(hits.iter().map(|h| h.item_id.as_str()).collect::<Vec<_>>(), ["d1", "d2", "d3"]);
}

#[test]
fn invalid_requests() {
    assert!(matches!(retrieve(&toy(), "set", 0), Err(RetrievalError::InvalidK)));
    assert!(IndexMode::new(false, false, false).is_err());
    let item = &golden_items()[0];
    assert!(matches!(make_query(item, QueryMode::T_ZS, None), Err(RetrievalError::MissingZeroShot)));
}

#[test]
fn zero_shot_query_appends_the_formalization() {
    let item = &golden_items()[0];
    let q = make_query(item, QueryMode::T_ZS, Some("lemma x: shows \"a\"")).unwrap();
    assert_eq!(q, format!("{}\nlemma x: shows \"a\"", item.comment));
}

#[test]
fn saved_index_reproduces_scores() {
    let ds = build_dataset(golden_items(), 0.8, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for mode in [IndexMode::T, IndexMode::TS, IndexMode::IS, IndexMode::TIS] {
        let index = build_index(&ds, mode, Bm25Params::default()).unwrap();
        let path = dir.path().join(format!("{mode}.json"));
        save_index(&index, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        for item in ds.test() {
            let q = make_query(item, QueryMode::T, None).unwrap();
            assert_eq!(index.score_all(&q), loaded.score_all(&q));
        }
    }
}

#[test]
fn index_skips_items_without_comment() {
    let ds = build_dataset(golden_items(), 0.8, 2).unwrap();
    let index = build_index(&ds, IndexMode::T, Bm25Params::default()).unwrap();
    let expected = ds.train().filter(|i| !i.comment.trim().is_empty()).count();
    assert_eq!(index.len(), expected);
}

#[test]
fn exemplars_follow_hit_order() {
    let ds = retrieval_fixture(50, 9);
    let index = build_index(&ds, IndexMode::T, Bm25Params::default()).unwrap();
    let q = make_query(&ds.items[4], QueryMode::T, None).unwrap();
    let hits = retrieve(&index, &q, 3).unwrap();
    let ex = exemplars_for(&hits, &ds);
    assert_eq!(ex.len(), 3);
    for (h, e) in hits.iter().zip(&ex) {
        assert_eq!(e.source.as_deref(), Some(h.item_id.as_str()));
    }
}

proptest! {
    #[test]
    fn scores_are_finite_and_nonnegative(query in "[a-z ]{0,40}") {
        for s in toy().score_all(&query) {
            prop_assert!(s.is_finite() && s >= 0.0);
        }
    }

    #[test]
    fn hits_are_sorted(query in "(open|set|group|closed|cover|inverse| )*") {
        let hits = retrieve(&toy(), &query, 3).unwrap();
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].item_id < w[1].item_id));
        }
    }
}
