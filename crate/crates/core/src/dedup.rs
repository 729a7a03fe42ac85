//! MinHash + LSH near-duplicate detection.
//!
//! Documents are reduced to sets of 5-word shingles, sketched with 128
//! hash permutations, and bucketed in 8 bands of 16 rows. Any shared band
//! bucket makes two documents candidates; clusters are the connected
//! components of the candidate graph. The banding puts the 50% collision
//! point at `(1/8)^(1/16) ≈ 0.878` Jaccard similarity.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::TextCodec;
use crate::dataset::TokenDataset;
use crate::rng::{mix64, splitmix64, GOLDEN_GAMMA};
use crate::union_find::UnionFind;

pub const SHINGLE_WORDS: usize = 5;
pub const NUM_PERM: usize = 128;
pub const BANDS: usize = 8;
pub const ROWS: usize = 16;
pub const PERMUTATION_SEED: u64 = 0xC0FFEE;
/// Similarity cut used by the optional exact-Jaccard verification pass.
pub const DEFAULT_VERIFY_THRESHOLD: f64 = 0.87;

const _: () = assert!(BANDS * ROWS == NUM_PERM);

const fn permutation_table() -> [u64; NUM_PERM] {
    // The i-th splitmix64 output is mix64(seed + (i + 1) * gamma).
    let mut table = [0u64; NUM_PERM];
    let mut i = 0;
    while i < NUM_PERM {
        let state = PERMUTATION_SEED.wrapping_add(GOLDEN_GAMMA.wrapping_mul(i as u64 + 1));
        table[i] = mix64(state) | 1;
        i += 1;
    }
    table
}

/// XOR masks defining the 128 hash permutations: successive splitmix64
/// outputs from seed `0xC0FFEE`, forced odd.
pub const PERMUTATIONS: [u64; NUM_PERM] = permutation_table();

/// 64-bit FNV-1a.
fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hash_words(words: &[&str]) -> u64 {
    let joined = words.iter().enumerate().flat_map(|(i, w)| {
        let sep: &[u8] = if i == 0 { b"" } else { b" " };
        sep.iter().chain(w.as_bytes()).copied()
    });
    fnv1a(joined)
}

/// Sorted, de-duplicated hashes of every 5-word window of the normalized
/// text (lowercased, whitespace runs collapsed). Texts shorter than five
/// words produce the single hash of the whole normalized text.
pub fn shingle(text: &str) -> Vec<u64> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let mut out: Vec<u64> = if words.len() < SHINGLE_WORDS {
        vec![hash_words(&words)]
    } else {
        words.windows(SHINGLE_WORDS).map(hash_words).collect()
    };
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub doc: u64,
    pub values: Box<[u64; NUM_PERM]>,
}

impl MinHashSignature {
    /// Fraction of permutations on which the two minima agree.
    pub fn estimated_jaccard(&self, other: &Self) -> f64 {
        let eq = self.values.iter().zip(other.values.iter()).filter(|(a, b)| a == b).count();
        eq as f64 / NUM_PERM as f64
    }

    fn band(&self, b: usize) -> &[u64] {
        &self.values[b * ROWS..(b + 1) * ROWS]
    }
}

/// Sketch a shingle set. An empty set gives the all-`u64::MAX` signature.
pub fn minhash(doc: u64, shingles: &[u64]) -> MinHashSignature {
    let mut values = Box::new([u64::MAX; NUM_PERM]);
    for &s in shingles {
        for (v, p) in values.iter_mut().zip(PERMUTATIONS.iter()) {
            *v = (*v).min(splitmix64(s ^ p));
        }
    }
    MinHashSignature { doc, values }
}

/// Exact Jaccard similarity of two sorted, de-duplicated sets.
pub fn exact_jaccard(a: &[u64], b: &[u64]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// The similarity at which an `r`-row, `b`-band LSH collides half the time.
pub fn lsh_threshold(bands: usize, rows: usize) -> f64 {
    (1.0 / bands as f64).powf(1.0 / rows as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupParams {
    pub shingle_words: usize,
    pub num_perm: usize,
    pub bands: usize,
    pub rows: usize,
    pub permutation_seed: u64,
    /// Exact-Jaccard cut applied to candidate pairs, if verification ran.
    pub verify_threshold: Option<f64>,
}

impl Default for DedupParams {
    fn default() -> Self {
        Self {
            shingle_words: SHINGLE_WORDS,
            num_perm: NUM_PERM,
            bands: BANDS,
            rows: ROWS,
            permutation_seed: PERMUTATION_SEED,
            verify_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub num_docs: u64,
    /// Duplicate clusters (two or more documents), each sorted, ordered by
    /// their smallest member.
    pub clusters: Vec<Vec<u64>>,
    /// Every retained document: singletons plus the lowest id of each cluster.
    pub kept: Vec<u64>,
    pub discarded: Vec<u64>,
    pub threshold_estimate: f64,
    pub params: DedupParams,
}

impl DedupReport {
    /// Share of `weight` (e.g. tokens per document) held by kept documents.
    pub fn kept_fraction(&self, weight: impl Fn(u64) -> u64) -> f64 {
        let kept: u64 = self.kept.iter().map(|&d| weight(d)).sum();
        let total: u64 = (0..self.num_docs).map(&weight).sum();
        if total == 0 {
            1.0
        } else {
            kept as f64 / total as f64
        }
    }
}

/// Candidate pairs (as positions into `sigs`) from one band.
fn band_candidates(sigs: &[&MinHashSignature], band: usize) -> Vec<(usize, usize)> {
    let mut buckets: HashMap<&[u64], usize> = HashMap::with_capacity(sigs.len());
    let mut pairs = Vec::new();
    for (i, s) in sigs.iter().enumerate() {
        match buckets.entry(s.band(band)) {
            std::collections::hash_map::Entry::Occupied(e) => pairs.push((*e.get(), i)),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(i);
            }
        }
    }
    pairs
}

/// All pairs sharing a bucket in one band, for the verification pass.
fn band_buckets(sigs: &[&MinHashSignature], band: usize) -> Vec<Vec<usize>> {
    let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
    for (i, s) in sigs.iter().enumerate() {
        buckets.entry(s.band(band)).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = buckets.into_values().filter(|b| b.len() > 1).collect();
    out.sort_unstable();
    out
}

/// Cluster signatures by LSH banding. The result depends only on the set of
/// signatures, not their order.
pub fn lsh_cluster(signatures: &[MinHashSignature]) -> DedupReport {
    cluster_impl(signatures, None)
}

/// As [`lsh_cluster`], but candidate pairs are joined only when the exact
/// Jaccard of their shingle sets reaches `threshold`. `shingles[i]` must be
/// the set behind `signatures[i]`.
pub fn lsh_cluster_verified(
    signatures: &[MinHashSignature],
    shingles: &[Vec<u64>],
    threshold: f64,
) -> DedupReport {
    assert_eq!(signatures.len(), shingles.len());
    cluster_impl(signatures, Some((shingles, threshold)))
}

fn cluster_impl(signatures: &[MinHashSignature], verify: Option<(&[Vec<u64>], f64)>) -> DedupReport {
    let mut order: Vec<usize> = (0..signatures.len()).collect();
    order.sort_unstable_by_key(|&i| signatures[i].doc);
    let sigs: Vec<&MinHashSignature> = order.iter().map(|&i| &signatures[i]).collect();

    let mut uf = UnionFind::new(sigs.len());
    match verify {
        None => {
            let pairs: Vec<Vec<(usize, usize)>> =
                (0..BANDS).into_par_iter().map(|b| band_candidates(&sigs, b)).collect();
            for (a, b) in pairs.into_iter().flatten() {
                uf.union(a, b);
            }
        }
        Some((shingles, threshold)) => {
            let buckets: Vec<Vec<Vec<usize>>> =
                (0..BANDS).into_par_iter().map(|b| band_buckets(&sigs, b)).collect();
            let mut pairs: Vec<(usize, usize)> = buckets
                .iter()
                .flatten()
                .flat_map(|bucket| {
                    bucket.iter().enumerate().flat_map(move |(k, &a)| bucket[k + 1..].iter().map(move |&b| (a, b)))
                })
                .collect();
            pairs.sort_unstable();
            pairs.dedup();
            let accepted: Vec<(usize, usize)> = pairs
                .into_par_iter()
                .filter(|&(a, b)| exact_jaccard(&shingles[order[a]], &shingles[order[b]]) >= threshold)
                .collect();
            for (a, b) in accepted {
                uf.union(a, b);
            }
        }
    }

    let mut clusters = Vec::new();
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for comp in uf.components() {
        let docs: Vec<u64> = comp.iter().map(|&i| sigs[i].doc).collect();
        kept.push(docs[0]);
        if docs.len() > 1 {
            discarded.extend_from_slice(&docs[1..]);
            clusters.push(docs);
        }
    }
    kept.sort_unstable();
    discarded.sort_unstable();

    DedupReport {
        num_docs: sigs.len() as u64,
        clusters,
        kept,
        discarded,
        threshold_estimate: lsh_threshold(BANDS, ROWS),
        params: DedupParams { verify_threshold: verify.map(|(_, t)| t), ..DedupParams::default() },
    }
}

/// Shingle and sketch a batch of texts; document ids are their positions.
pub fn sketch_texts<S: AsRef<str> + Sync>(texts: &[S]) -> (Vec<Vec<u64>>, Vec<MinHashSignature>) {
    let shingles: Vec<Vec<u64>> = texts.par_iter().map(|t| shingle(t.as_ref())).collect();
    let sigs = shingles.par_iter().enumerate().map(|(i, s)| minhash(i as u64, s)).collect();
    (shingles, sigs)
}

/// Shingle and sketch every document of a token corpus through `codec`.
pub fn sketch_dataset(dataset: &TokenDataset, codec: &dyn TextCodec) -> (Vec<Vec<u64>>, Vec<MinHashSignature>) {
    let shingles: Vec<Vec<u64>> = (0..dataset.doc_count())
        .into_par_iter()
        .map(|i| shingle(&codec.decode(&dataset.document(i).to_vec())))
        .collect();
    let sigs = shingles.par_iter().enumerate().map(|(i, s)| minhash(i as u64, s)).collect();
    (shingles, sigs)
}

/// Full pipeline over in-memory texts.
pub fn dedup_texts<S: AsRef<str> + Sync>(texts: &[S], verify_threshold: Option<f64>) -> DedupReport {
    let (shingles, sigs) = sketch_texts(texts);
    match verify_threshold {
        Some(t) => lsh_cluster_verified(&sigs, &shingles, t),
        None => lsh_cluster(&sigs),
    }
}
