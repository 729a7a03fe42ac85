mod common;

use common::{random_docs, ref_contexts, ref_sample_index, rng};
use proptest::prelude::*;
use pvk_core::dataloader::ContextStream;
use pvk_core::{build_sample_index, DType, DataOrderPlan, TokenDataset, TrainingStream};
use rand::Rng;

fn plan(seed: u64, batch_size: u64, seq_len: u64, train_iters: u64, eod: Option<u32>) -> DataOrderPlan {
    DataOrderPlan { seed, batch_size, seq_len, train_iters, eod_token: eod, save_interval: 1000 }
}

#[test]
fn matches_reference_pipeline() {
    let mut r = rng(11);
    for case in 0..20 {
        let n_docs = r.random_range(1..60);
        let docs = random_docs(&mut r, n_docs, 40, 1000);
        let eod = if case % 2 == 0 { Some(1000) } else { None };
        let seq_len = r.random_range(1..12);
        let expected_contexts = ref_contexts(&docs, eod, seq_len as usize + 1);
        if expected_contexts.is_empty() {
            continue;
        }
        let ds = TokenDataset::from_docs(&docs, DType::U16).unwrap();
        let p = plan(r.random(), r.random_range(1..5), seq_len, r.random_range(1..40), eod);
        let stream = TrainingStream::new(&ds, &p).unwrap();
        let total = p.train_iters * p.batch_size;
        let expected_index = ref_sample_index(expected_contexts.len() as u64, p.seed, total);
        assert_eq!(stream.index().entries(), expected_index.as_slice(), "case {case}");
        for step in 0..p.train_iters {
            let batch = stream.batch_at(step).unwrap();
            let want: Vec<u32> = expected_index[(step * p.batch_size) as usize..((step + 1) * p.batch_size) as usize]
                .iter()
                .flat_map(|&c| expected_contexts[c as usize].clone())
                .collect();
            assert_eq!(batch.tokens, want, "case {case} step {step}");
        }
    }
}

#[test]
fn thread_count_does_not_change_index() {
    let docs = random_docs(&mut rng(3), 500, 50, 30_000);
    let ds = TokenDataset::from_docs(&docs, DType::U16).unwrap();
    let p = plan(77, 8, 15, 900, Some(0));
    let build = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| build_sample_index(&ds, &p).unwrap())
    };
    assert_eq!(build(1), build(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn each_epoch_is_a_permutation(n in 1u64..300, seed: u64, bs in 1u64..9, iters in 1u64..200) {
        let p = plan(seed, bs, 4, iters, None);
        let index = pvk_core::SampleIndex::build(n, &p).unwrap();
        let epochs = (bs * iters).div_ceil(n);
        for e in 0..epochs {
            let mut slice = index.epoch(e).to_vec();
            let full = slice.len() as u64 == n;
            slice.sort_unstable();
            slice.dedup();
            if full {
                prop_assert_eq!(slice, (0..n).collect::<Vec<_>>());
            } else {
                // Partial last epoch: still no repeats.
                prop_assert_eq!(slice.len(), index.epoch(e).len());
            }
        }
    }

    #[test]
    fn extending_the_run_keeps_earlier_batches(n in 1u64..200, seed: u64, bs in 1u64..6, iters in 1u64..60, extra in 1u64..60) {
        let short = pvk_core::SampleIndex::build(n, &plan(seed, bs, 4, iters, None)).unwrap();
        let long = pvk_core::SampleIndex::build(n, &plan(seed, bs, 4, iters + extra, None)).unwrap();
        prop_assert_eq!(short.entries(), &long.entries()[..short.len()]);
    }

    #[test]
    fn unshuffled_contexts_reassemble_the_stream(
        docs in prop::collection::vec(prop::collection::vec(1u32..500, 0..15), 1..25),
        seq_len in 1u64..10,
        use_eod: bool,
    ) {
        let eod = use_eod.then_some(0);
        let ds = TokenDataset::from_docs(&docs, DType::U16).unwrap();
        let cs = ContextStream::new(&ds, &plan(0, 1, seq_len, 1, eod));
        let joined: Vec<u32> = (0..cs.num_contexts()).flat_map(|c| cs.context(c)).collect();
        let mut stream = Vec::new();
        for d in &docs {
            stream.extend_from_slice(d);
            stream.extend(eod);
        }
        let keep = stream.len() - stream.len() % (seq_len as usize + 1);
        prop_assert_eq!(joined, stream[..keep].to_vec());
    }
}
