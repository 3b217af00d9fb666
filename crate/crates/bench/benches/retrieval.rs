use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use rapid_bench::{random_index, random_queries, random_scores};
use rapid_core::index::{parallel_retrieve, similarity_matrix, top_k};

fn bench_top_k(c: &mut Criterion) {
    let mut group = c.benchmark_group("top_k");
    let scores = random_scores(1, 100_000);
    for k in [10, 600, 5000] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| b.iter(|| top_k(&scores, k).unwrap()));
    }
    group.finish();
}

fn bench_similarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("similarity_matrix");
    let index = random_index(2, 20_000, 512);
    for n in [1, 8] {
        let queries = random_queries(3, n, 512);
        group.throughput(Throughput::Elements((n * index.len()) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &queries, |b, q| {
            b.iter(|| similarity_matrix(q, &index).unwrap())
        });
    }
    group.finish();
}

fn bench_parallel_retrieve(c: &mut Criterion) {
    let mut group = c.benchmark_group("parallel_retrieve");
    group.sample_size(10);
    let index = random_index(4, 100_000, 512);
    let drafts = random_queries(5, 8, 512);
    group.bench_function("8x100000x512_k600", |b| b.iter(|| parallel_retrieve(&drafts, &index, 600).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_top_k, bench_similarity, bench_parallel_retrieve);
criterion_main!(benches);
