//! Reference oracles for integration and acceptance tests. Nothing here
//! calls into the code paths it is used to check.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Straight transcription of splitmix64.
pub struct RefSplitMix(pub u64);

impl RefSplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
}

/// Expected sample order: epoch permutations concatenated and truncated.
pub fn ref_sample_index(num_contexts: u64, seed: u64, total: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(total as usize);
    let mut epoch = 0u64;
    while (out.len() as u64) < total {
        let mut mixer = RefSplitMix(seed ^ 0x9E3779B97F4A7C15u64.wrapping_mul(epoch + 1));
        let mut gen = RefSplitMix(mixer.next_u64());
        let mut perm: Vec<u64> = (0..num_contexts).collect();
        let mut i = perm.len();
        while i > 1 {
            i -= 1;
            let j = (gen.next_u64() % (i as u64 + 1)) as usize;
            perm.swap(i, j);
        }
        out.extend(perm);
        epoch += 1;
    }
    out.truncate(total as usize);
    out
}

/// Chunk the EOD-joined stream into contexts.
pub fn ref_contexts(docs: &[Vec<u32>], eod: Option<u32>, context_len: usize) -> Vec<Vec<u32>> {
    let mut stream = Vec::new();
    for d in docs {
        stream.extend_from_slice(d);
        if let Some(e) = eod {
            stream.push(e);
        }
    }
    stream.chunks_exact(context_len).map(<[u32]>::to_vec).collect()
}

pub fn random_docs(r: &mut impl Rng, n_docs: usize, max_len: usize, vocab: u32) -> Vec<Vec<u32>> {
    (0..n_docs)
        .map(|_| {
            let len = r.random_range(0..=max_len);
            (0..len).map(|_| r.random_range(0..vocab)).collect()
        })
        .collect()
}

pub const WORDS: &[&str] = &[
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
    "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango", "Paris", "France", "river", "sea",
];

pub const PRONOUNS: &[&str] = &["he", "He", "HE", "him", "Him", "his", "His", "HIS", "himself", "Himself", "HIMSELF"];

/// Random prose with words, operands 0..=120 and masculine pronouns.
pub fn random_text(r: &mut impl Rng, words: usize) -> String {
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push_str([" ", " ", " ", ", ", ". ", "\n"].choose(r).unwrap());
        }
        match r.random_range(0..10) {
            0..=1 => out.push_str(&r.random_range(0..=120u32).to_string()),
            2 => out.push_str(PRONOUNS.choose(r).unwrap()),
            3 => out.push_str(["hertz", "history", "shelf", "24th", "x4"].choose(r).unwrap()),
            _ => out.push_str(WORDS.choose(r).unwrap()),
        }
    }
    out
}

/// Word-bounded count using the regex engine's `\b`.
pub fn regex_count(text: &str, needle: &str) -> u64 {
    let re = Regex::new(&format!(r"\b{}\b", regex::escape(needle))).unwrap();
    re.find_iter(text).count() as u64
}

pub fn regex_contains_ci(text: &str, needle: &str) -> bool {
    let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(needle))).unwrap();
    re.is_match(text)
}

/// Shingle strings (not hashes) of a text: lowercase, whitespace-normalized
/// 5-word windows, or the whole text when shorter.
pub fn shingle_strings(text: &str) -> HashSet<String> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    if words.len() < 5 {
        return HashSet::from([words.join(" ")]);
    }
    words.windows(5).map(|w| w.join(" ")).collect()
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Training sequences `[0, n)` in order, built from the reference pieces.
pub fn ref_sequences(docs: &[Vec<u32>], eod: Option<u32>, seq_len: u64, seed: u64, n: u64) -> Vec<Vec<u32>> {
    let contexts = ref_contexts(docs, eod, seq_len as usize + 1);
    ref_sample_index(contexts.len() as u64, seed, n).into_iter().map(|c| contexts[c as usize].clone()).collect()
}

/// Word-bounded replacement via regex alternation; returns the text and the
/// number of replacements.
pub fn regex_swap(text: &str, pairs: &[(String, String)]) -> (String, u64) {
    let alt: Vec<String> = pairs.iter().map(|(s, _)| regex::escape(s)).collect();
    let re = Regex::new(&format!(r"\b(?:{})\b", alt.join("|"))).unwrap();
    let mut n = 0;
    let out = re.replace_all(text, |c: &regex::Captures| {
        n += 1;
        pairs.iter().find(|(s, _)| s == &c[0]).unwrap().1.clone()
    });
    (out.into_owned(), n)
}

/// Random text corpus as one byte-token document per text.
pub fn byte_docs(texts: &[String]) -> Vec<Vec<u32>> {
    texts.iter().map(|t| t.bytes().map(u32::from).collect()).collect()
}
