use criterion::{criterion_group, criterion_main, Criterion};
use pvk_bench::token_docs;
use pvk_core::memorization::{fit_poisson, scan, LookupOracle, NgramOracle, ScanConfig};
use pvk_core::{DType, DataOrderPlan, TokenDataset, TrainingStream};

fn bench(c: &mut Criterion) {
    let docs = token_docs(5, 20_000, 65, 50_000);
    let ds = TokenDataset::from_docs(&docs, DType::U16).unwrap();
    let plan = DataOrderPlan { seed: 1, batch_size: 32, seq_len: 64, train_iters: 200, eod_token: None, save_interval: 100 };
    let stream = TrainingStream::new(&ds, &plan).unwrap();
    let lookup = LookupOracle::new(32, docs.iter().filter(|d| d.len() > 32).step_by(10)).unwrap();
    let cfg = ScanConfig { slice_size: 64, ..ScanConfig::default() };
    c.bench_function("scan 6400 seqs, lookup oracle", |b| b.iter(|| scan(&stream, &lookup, &cfg).unwrap()));
    let ngram = NgramOracle::new(8, docs.iter().take(2_000)).unwrap();
    c.bench_function("scan 640 seqs, 8-gram oracle", |b| {
        b.iter(|| scan(&stream, &ngram, &ScanConfig { limit: Some(640), ..cfg.clone() }).unwrap())
    });
    let counts: Vec<u64> = (0..10_000).map(|i| (i * 7919 % 13) as u64).collect();
    c.bench_function("fit_poisson 10k slices", |b| b.iter(|| fit_poisson(&counts).unwrap()));
}

criterion_group!(benches, bench);
criterion_main!(benches);
