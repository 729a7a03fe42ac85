//! Synthetic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` documents of uniform random tokens below `vocab`, lengths in `1..=max_len`.
pub fn token_docs(seed: u64, n: usize, max_len: usize, vocab: u32) -> Vec<Vec<u32>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let len = r.random_range(1..=max_len);
            (0..len).map(|_| r.random_range(0..vocab)).collect()
        })
        .collect()
}

const WORDS: &[&str] = &[
    "the", "river", "he", "said", "his", "model", "Paris", "France", "was", "in", "a", "of", "him", "to", "and",
];

/// ASCII prose with small numbers mixed in.
pub fn texts(seed: u64, n: usize, words: usize) -> Vec<String> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let mut s = String::new();
            for i in 0..words {
                if i > 0 {
                    s.push(' ');
                }
                if r.random_bool(0.15) {
                    s.push_str(&r.random_range(0..100u32).to_string());
                } else {
                    s.push_str(WORDS[r.random_range(0..WORDS.len())]);
                }
            }
            s
        })
        .collect()
}
