use criterion::{criterion_group, criterion_main, Criterion};
use pvk_bench::texts;
use pvk_core::dedup::{lsh_cluster, minhash, shingle, sketch_texts};

fn bench(c: &mut Criterion) {
    let docs = texts(3, 5_000, 200);
    let shingles = shingle(&docs[0]);
    c.bench_function("minhash 200-word doc", |b| b.iter(|| minhash(0, &shingles)));
    let (_, sigs) = sketch_texts(&docs);
    c.bench_function("sketch 5k docs", |b| b.iter(|| sketch_texts(&docs)));
    c.bench_function("lsh_cluster 5k signatures", |b| b.iter(|| lsh_cluster(&sigs)));
}

criterion_group!(benches, bench);
criterion_main!(benches);
