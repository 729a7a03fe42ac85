use criterion::{criterion_group, criterion_main, Criterion};
use pvk_bench::texts;
use pvk_core::{count_up_to, ByteCodec, DType, DataOrderPlan, TermSpec, TokenDataset, TrainingStream};

fn bench(c: &mut Criterion) {
    let docs: Vec<Vec<u32>> = texts(4, 4_000, 120).iter().map(|t| t.bytes().map(u32::from).collect()).collect();
    let ds = TokenDataset::from_docs(&docs, DType::U16).unwrap();
    let plan = DataOrderPlan { seed: 1, batch_size: 16, seq_len: 255, train_iters: 512, eod_token: Some(10), save_interval: 512 };
    let stream = TrainingStream::new(&ds, &plan).unwrap();
    let mut terms: Vec<TermSpec> = (0..100).map(TermSpec::numeric).collect();
    terms.push(TermSpec::entities(["paris", "france"]));
    c.bench_function("count_up_to 2M tokens, 101 terms", |b| {
        b.iter(|| count_up_to(&stream, &ByteCodec, 512, &terms).unwrap())
    });
}

criterion_group!(benches, bench);
criterion_main!(benches);
