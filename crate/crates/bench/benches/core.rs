use std::hint::black_box;

use autoformal::checker::{OfflineChecker, SyntaxChecker};
use autoformal::denoise::cbd;
use autoformal::faults::catalog;
use autoformal::metrics::{bleu2, chrf, ruby};
use autoformal::retrieval::{build_index, make_query, retrieve, Bm25Params, IndexMode, QueryMode};
use autoformal::synth::{fuzz_text, retrieval_fixture};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;

fn bm25(c: &mut Criterion) {
    let mut group = c.benchmark_group("bm25");
    for n in [274, 2744] {
        let ds = retrieval_fixture(n, 1);
        group.bench_with_input(BenchmarkId::new("build", n), &ds, |b, ds| {
            b.iter(|| build_index(ds, IndexMode::T, Bm25Params::default()).unwrap())
        });
        let index = build_index(&ds, IndexMode::T, Bm25Params::default()).unwrap();
        let queries: Vec<String> = ds
            .items
            .iter()
            .take(64)
            .map(|i| make_query(i, QueryMode::T, None).unwrap())
            .collect();
        group.throughput(Throughput::Elements(queries.len() as u64));
        group.bench_with_input(BenchmarkId::new("retrieve_k3", n), &queries, |b, qs| {
            b.iter(|| {
                for q in qs {
                    black_box(retrieve(&index, q, 3).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let reference = "lemma (in group0) inverse_in_group: assumes \"x \\<in> G\" shows \"x\\<inverse> \\<in> G\"";
    let candidate = "lemma inverse_in_group: assumes \"x \\<in> G\" shows \"x\\<inverse> \\<in> G\" and \"x \\<noteq> 0\"";
    let mut group = c.benchmark_group("metrics");
    group.bench_function("bleu2", |b| b.iter(|| bleu2(black_box(reference), black_box(candidate)).unwrap()));
    group.bench_function("chrf", |b| b.iter(|| chrf(black_box(reference), black_box(candidate)).unwrap()));
    group.bench_function("ruby", |b| b.iter(|| ruby(black_box(reference), black_box(candidate))));
    group.finish();
}

fn denoise(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let inputs: Vec<String> = (0..256).map(|_| fuzz_text(&mut rng)).collect();
    let mut group = c.benchmark_group("cbd");
    group.throughput(Throughput::Elements(inputs.len() as u64));
    group.bench_function("fuzzed", |b| {
        b.iter(|| {
            for s in &inputs {
                black_box(cbd(s));
            }
        })
    });
    group.finish();
}

fn checker(c: &mut Criterion) {
    let checker = OfflineChecker::default();
    let cases = catalog();
    let mut group = c.benchmark_group("checker");
    group.throughput(Throughput::Elements(cases.len() as u64));
    group.bench_function("fault_catalog", |b| {
        b.iter(|| {
            for case in &cases {
                black_box(checker.check(&case.code).unwrap());
            }
        })
    });
    group.finish();
}

criterion_group!(benches, bm25, metrics, denoise, checker);
criterion_main!(benches);
