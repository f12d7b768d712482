use corpusmix_bench::synthetic_corpus;
use corpusmix_core::neardedup::{
    lsh_candidates, minhash_sign, near_dedup, shingle, NearDedupConfig,
};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

fn bench_shingle_and_sign(c: &mut Criterion) {
    let docs = synthetic_corpus(1_000, 200, 0.0, 1);
    let mut group = c.benchmark_group("signatures");
    group.throughput(Throughput::Elements(docs.len() as u64));
    group.bench_function("shingle_and_sign_1k_docs", |b| {
        b.iter(|| {
            docs.iter()
                .map(|d| minhash_sign(&shingle(&d.text, 5), 128, 42))
                .count()
        })
    });
    group.finish();
}

fn bench_lsh_candidates(c: &mut Criterion) {
    let docs = synthetic_corpus(2_000, 200, 0.1, 2);
    let config = NearDedupConfig::default();
    let signatures: Vec<_> = docs
        .iter()
        .map(|d| minhash_sign(&shingle(&d.text, config.shingle_words), config.num_perms, config.seed))
        .collect();
    c.bench_function("lsh_candidates_2k_docs", |b| {
        b.iter(|| lsh_candidates(&signatures, &config.lsh).unwrap().len())
    });
}

fn bench_near_dedup(c: &mut Criterion) {
    let docs = synthetic_corpus(2_000, 200, 0.1, 3);
    let config = NearDedupConfig::default();
    let mut group = c.benchmark_group("near_dedup");
    group.sample_size(10);
    group.throughput(Throughput::Elements(docs.len() as u64));
    group.bench_function("end_to_end_2k_docs", |b| {
        b.iter_batched(
            || docs.clone(),
            |docs| near_dedup(&docs, &config).unwrap().survivors.len(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_shingle_and_sign, bench_lsh_candidates, bench_near_dedup);
criterion_main!(benches);
