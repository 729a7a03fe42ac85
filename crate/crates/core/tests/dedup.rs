mod common;

use common::{jaccard, rng, shingle_strings};
use pvk_core::dedup::{dedup_texts, exact_jaccard, minhash, shingle, sketch_texts, lsh_cluster};
use rand::prelude::*;

fn vocab_text(r: &mut impl Rng, words: usize) -> Vec<String> {
    (0..words).map(|_| format!("w{}", r.random_range(0..100_000))).collect()
}

#[test]
fn hashed_jaccard_tracks_string_jaccard() {
    let mut r = rng(5);
    for _ in 0..200 {
        let a = vocab_text(&mut r, 60).join(" ");
        let mut b: Vec<String> = a.split(' ').map(String::from).collect();
        for _ in 0..r.random_range(0..30) {
            let i = r.random_range(0..b.len());
            b[i] = format!("z{}", r.random_range(0..1000));
        }
        let b = b.join(" ");
        let exact = jaccard(&shingle_strings(&a), &shingle_strings(&b));
        let hashed = exact_jaccard(&shingle(&a), &shingle(&b));
        assert!((exact - hashed).abs() < 1e-12, "{exact} vs {hashed}");
    }
}

#[test]
fn estimator_error_is_bounded() {
    let mut r = rng(6);
    let mut within = 0;
    for _ in 0..300 {
        let a = vocab_text(&mut r, 80);
        let mut b = a.clone();
        for _ in 0..r.random_range(0..40) {
            let i = r.random_range(0..b.len());
            b[i] = format!("y{}", r.random_range(0..100_000));
        }
        let (sa, sb) = (shingle(&a.join(" ")), shingle(&b.join(" ")));
        let est = minhash(0, &sa).estimated_jaccard(&minhash(1, &sb));
        if (est - exact_jaccard(&sa, &sb)).abs() <= 0.15 {
            within += 1;
        }
    }
    assert!(within >= 297, "{within}/300");
}

#[test]
fn one_changed_word_in_a_hundred_is_a_duplicate() {
    let mut r = rng(7);
    let mut clustered = 0;
    for _ in 0..50 {
        let a = vocab_text(&mut r, 100);
        let mut b = a.clone();
        b[r.random_range(0..100)] = "changed".into();
        let report = dedup_texts(&[a.join(" "), b.join(" ")], None);
        clustered += report.clusters.len();
    }
    // J ≈ 91/101 ≈ 0.90 collides with probability about 0.95.
    assert!(clustered >= 40, "{clustered}/50");
}

#[test]
fn planted_duplicates_are_removed() {
    let mut r = rng(8);
    let uniques: Vec<String> = (0..700)
        .map(|_| {
            let n = r.random_range(50..150);
            vocab_text(&mut r, n).join(" ")
        })
        .collect();
    let mut texts = uniques.clone();
    let unique_tokens: usize = uniques.iter().map(|t| t.split(' ').count()).sum();
    let mut dup_tokens = 0;
    // Add copies until 31% of all tokens are duplicates.
    while (dup_tokens as f64) < 0.31 * (unique_tokens + dup_tokens) as f64 {
        let t = uniques.choose(&mut r).unwrap().clone();
        dup_tokens += t.split(' ').count();
        texts.push(t);
    }
    texts.shuffle(&mut r);
    let report = dedup_texts(&texts, None);
    let frac = report.kept_fraction(|d| texts[d as usize].split(' ').count() as u64);
    assert!((frac - 0.69).abs() <= 0.05, "kept {frac}");
    assert_eq!(report.kept.len(), 700);
}

#[test]
fn clustering_ignores_input_order() {
    let mut r = rng(9);
    let mut texts: Vec<String> = (0..200).map(|_| vocab_text(&mut r, 30).join(" ")).collect();
    for i in 0..40 {
        let t = texts[i].clone();
        texts.push(t);
    }
    let (_, mut sigs) = sketch_texts(&texts);
    let a = lsh_cluster(&sigs);
    sigs.shuffle(&mut r);
    assert_eq!(a, lsh_cluster(&sigs));
}
