mod common;

use std::collections::BTreeMap;

use common::{byte_docs, random_text, regex_swap, rng};
use pvk_core::intervention::{apply_intervention_to, swap_pronouns_counted};
use pvk_core::{
    apply_intervention, swap_pronouns_text, ByteCodec, DType, DataOrderPlan, InterventionMode, InterventionPlan,
    PronounMap, TokenDataset, TrainingStream, WordCodec,
};

fn as_text(tokens: &[u32]) -> String {
    tokens.iter().map(|&t| t as u8 as char).collect()
}

#[test]
fn text_swap_agrees_with_regex() {
    let map = PronounMap::default();
    let mut r = rng(41);
    for _ in 0..500 {
        let t = random_text(&mut r, 60);
        let mut counts = BTreeMap::new();
        let got = swap_pronouns_counted(&t, &map, &mut counts);
        let (want, n) = regex_swap(&t, map.pairs());
        assert_eq!(got, want);
        assert_eq!(counts.values().sum::<u64>(), n);
        assert_eq!(swap_pronouns_text(&got, &map), got);
    }
}

#[test]
fn stream_rewrite_prefix_and_counts() {
    let map = PronounMap::default();
    let mut r = rng(42);
    let texts: Vec<String> = (0..200).map(|_| random_text(&mut r, 50)).collect();
    let ds = TokenDataset::from_docs(byte_docs(&texts), DType::U16).unwrap();
    let plan = DataOrderPlan { seed: 9, batch_size: 3, seq_len: 47, train_iters: 400, eod_token: Some(10), save_interval: 100 };
    let stream = TrainingStream::new(&ds, &plan).unwrap();
    let ip = InterventionPlan { fraction: 0.25, mode: InterventionMode::Text };
    let mut out: Vec<Vec<u32>> = Vec::new();
    let m = apply_intervention_to(&stream, &ip, &map, &ByteCodec, &mut out).unwrap();
    assert_eq!(m.start_step, 300);
    assert_eq!(out.len() as u64, stream.len());
    let mut expected = 0;
    for (o, seq) in out.iter().enumerate() {
        let orig = stream.sequence(o as u64);
        if (o as u64) < m.start_ordinal {
            assert_eq!(seq, &orig);
        } else {
            let (want, n) = regex_swap(&as_text(&orig), map.pairs());
            assert_eq!(as_text(seq), want);
            expected += n;
        }
    }
    assert_eq!(m.replacements.values().sum::<u64>(), expected);
    assert!(expected > 0);

    // Running the intervention again over its own output changes nothing.
    let again_ds = TokenDataset::from_docs(&out, DType::U16).unwrap();
    let mut again = Vec::new();
    for d in again_ds.documents() {
        again.push(swap_pronouns_text(&as_text(&d.to_vec()), &map));
    }
    for (o, s) in out.iter().enumerate().skip(m.start_ordinal as usize) {
        assert_eq!(again[o], as_text(s));
    }
}

#[test]
fn pronoun_free_corpus_is_unchanged() {
    let texts = vec!["the river meets the sea near Paris".to_string(); 30];
    let ds = TokenDataset::from_docs(byte_docs(&texts), DType::U16).unwrap();
    let plan = DataOrderPlan { seed: 1, batch_size: 2, seq_len: 15, train_iters: 50, eod_token: None, save_interval: 10 };
    let stream = TrainingStream::new(&ds, &plan).unwrap();
    let mut out: Vec<Vec<u32>> = Vec::new();
    let ip = InterventionPlan { fraction: 1.0, mode: InterventionMode::Text };
    let m = apply_intervention_to(&stream, &ip, &PronounMap::default(), &ByteCodec, &mut out).unwrap();
    assert_eq!(m.replacements.values().sum::<u64>(), 0);
    let orig: Vec<Vec<u32>> = (0..stream.len()).map(|o| stream.sequence(o)).collect();
    assert_eq!(out, orig);
}

#[test]
fn token_mode_with_word_vocabulary() {
    let texts = ["he saw him and his cat", "she met herself", "He told Him"];
    let mut codec = WordCodec::from_texts(texts.iter().copied());
    for w in ["She", "Her", "SHE", "HER", "Herself", "HERSELF", "her", "herself"] {
        codec.intern(w);
    }
    let docs: Vec<Vec<u32>> = texts.iter().map(|t| pvk_core::TextCodec::encode(&codec, t).unwrap()).collect();
    let ds = TokenDataset::from_docs(&docs, DType::U16).unwrap();
    let plan = DataOrderPlan { seed: 2, batch_size: 1, seq_len: 3, train_iters: 3, eod_token: None, save_interval: 1 };
    let stream = TrainingStream::new(&ds, &plan).unwrap();
    let ip = InterventionPlan { fraction: 1.0, mode: InterventionMode::Token };
    let dir = tempfile::tempdir().unwrap();
    let m = apply_intervention(&stream, &ip, &PronounMap::default(), &codec, &dir.path().join("cf"), DType::U16).unwrap();
    let out = TokenDataset::open(&dir.path().join("cf")).unwrap();
    assert_eq!(out.doc_count(), 3);
    for (o, d) in out.documents().enumerate() {
        let orig = stream.sequence(o as u64);
        assert_eq!(d.len(), orig.len());
        let text = pvk_core::TextCodec::decode(&codec, &d.to_vec());
        assert_eq!(text, swap_pronouns_text(&pvk_core::TextCodec::decode(&codec, &orig), &PronounMap::default()));
    }
    assert_eq!(m.sequences_transformed, 3);
}
