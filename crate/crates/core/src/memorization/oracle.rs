//! Greedy-continuation oracles standing in for a trained model.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A scan prompt: the first `k` tokens of the sequence at training ordinal
/// `ordinal`.
#[derive(Debug, Clone, Copy)]
pub struct Prompt<'a> {
    pub ordinal: u64,
    pub tokens: &'a [u32],
}

/// Greedy decoding of a model. Implementations must be deterministic: the
/// same prompt always yields the same continuation.
pub trait ContinuationOracle: Sync {
    /// The next `len` tokens the model would greedily emit after `prompt`.
    fn greedy_continue(&self, prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>>;
}

/// Oracle that cannot be called concurrently.
pub trait SequentialOracle: Send {
    fn greedy_continue(&mut self, prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>>;
}

/// Serializes calls to a [`SequentialOracle`] so it can be used by the
/// parallel scan.
pub struct Serialized<O>(Mutex<O>);

impl<O: SequentialOracle> Serialized<O> {
    pub fn new(oracle: O) -> Self {
        Self(Mutex::new(oracle))
    }
}

impl<O: SequentialOracle> ContinuationOracle for Serialized<O> {
    fn greedy_continue(&self, prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>> {
        self.0.lock().expect("oracle mutex poisoned").greedy_continue(prompt, len)
    }
}

/// Always emits the same token.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOracle(pub u32);

impl ContinuationOracle for ConstantOracle {
    fn greedy_continue(&self, _prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>> {
        Ok(vec![self.0; len])
    }
}

/// Perfect memorizer of a fixed set of strings: a prompt equal to the first
/// `k` tokens of a stored string is continued with the rest of that string.
/// Unknown prompts get `miss_token` repeated.
#[derive(Debug, Clone)]
pub struct LookupOracle {
    k: usize,
    table: HashMap<Vec<u32>, Vec<u32>>,
    miss_token: u32,
}

impl LookupOracle {
    /// When two strings share a prompt, the first one wins.
    pub fn new<S: AsRef<[u32]>>(k: usize, strings: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut table = HashMap::new();
        for (i, s) in strings.into_iter().enumerate() {
            let s = s.as_ref();
            if s.len() <= k {
                return Err(Error::Input(format!("string {i} has {} tokens, need more than k = {k}", s.len())));
            }
            table.entry(s[..k].to_vec()).or_insert_with(|| s[k..].to_vec());
        }
        Ok(Self { k, table, miss_token: u32::MAX })
    }

    pub fn with_miss_token(mut self, token: u32) -> Self {
        self.miss_token = token;
        self
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl ContinuationOracle for LookupOracle {
    fn greedy_continue(&self, prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>> {
        if prompt.tokens.len() != self.k {
            return Err(Error::Contract(format!(
                "lookup oracle built for k = {} got a {}-token prompt",
                self.k,
                prompt.tokens.len()
            )));
        }
        let mut out: Vec<u32> = match self.table.get(prompt.tokens) {
            Some(cont) => cont.iter().take(len).copied().collect(),
            None => Vec::new(),
        };
        out.resize(len, self.miss_token);
        Ok(out)
    }
}

const SEPARATOR_BASE: u64 = 1 << 32;

/// Order-`n` greedy n-gram model over a token corpus.
///
/// The next token is the most frequent follower of the last `n - 1` tokens
/// (or all of them, if fewer), ties broken by lowest token id. A history
/// never seen with a follower is shortened from the left until one is; the
/// empty history falls back to the most frequent token overall.
///
/// Lookups go through a suffix array of the concatenated sequences, which
/// are separated by unique sentinels so no n-gram spans two sequences.
#[derive(Debug, Clone)]
pub struct NgramOracle {
    order: usize,
    text: Vec<u64>,
    suffixes: Vec<u32>,
    unigram_best: u32,
}

impl NgramOracle {
    pub fn new<S: AsRef<[u32]>>(order: usize, sequences: impl IntoIterator<Item = S>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        let mut text = Vec::new();
        for (i, seq) in sequences.into_iter().enumerate() {
            text.extend(seq.as_ref().iter().map(|&t| t as u64));
            text.push(SEPARATOR_BASE + i as u64);
        }
        if text.len() > u32::MAX as usize {
            return Err(Error::Config("n-gram corpus exceeds 2^32 positions".into()));
        }
        let suffixes = suffix_array(&text);

        let mut counts: HashMap<u32, u64> = HashMap::new();
        for &t in text.iter().filter(|&&t| t < SEPARATOR_BASE) {
            *counts.entry(t as u32).or_default() += 1;
        }
        let unigram_best = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(t, _)| t);
        Ok(Self { order, text, suffixes, unigram_best })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Suffix-array range of suffixes starting with `pattern`.
    fn find(&self, pattern: &[u64]) -> std::ops::Range<usize> {
        let prefix = |pos: u32| {
            let p = pos as usize;
            &self.text[p..(p + pattern.len()).min(self.text.len())]
        };
        let lo = self.suffixes.partition_point(|&s| prefix(s) < pattern);
        let hi = lo + self.suffixes[lo..].partition_point(|&s| prefix(s) == pattern);
        lo..hi
    }

    fn best_follower(&self, history: &[u64]) -> Option<u32> {
        let range = self.find(history);
        let mut counts: HashMap<u32, u64> = HashMap::new();
        for &s in &self.suffixes[range] {
            let next = s as usize + history.len();
            if let Some(&t) = self.text.get(next) {
                if t < SEPARATOR_BASE {
                    *counts.entry(t as u32).or_default() += 1;
                }
            }
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(t, _)| t)
    }

    pub fn next_token(&self, context: &[u32]) -> u32 {
        let keep = context.len().min(self.order - 1);
        let history: Vec<u64> = context[context.len() - keep..].iter().map(|&t| t as u64).collect();
        (0..history.len())
            .find_map(|skip| self.best_follower(&history[skip..]))
            .unwrap_or(self.unigram_best)
    }
}

impl ContinuationOracle for NgramOracle {
    fn greedy_continue(&self, prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>> {
        let mut ctx = prompt.tokens.to_vec();
        for _ in 0..len {
            let t = self.next_token(&ctx);
            ctx.push(t);
        }
        Ok(ctx.split_off(prompt.tokens.len()))
    }
}

/// Suffix array by prefix doubling.
fn suffix_array(text: &[u64]) -> Vec<u32> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sa: Vec<u32> = (0..n as u32).collect();
    sa.par_sort_unstable_by_key(|&i| text[i as usize]);
    let mut rank = vec![0u64; n];
    for w in 1..n {
        let (a, b) = (sa[w - 1] as usize, sa[w] as usize);
        rank[b] = rank[a] + u64::from(text[a] != text[b]);
    }
    let mut k = 1usize;
    let mut next_rank = vec![0u64; n];
    while (rank[sa[n - 1] as usize] as usize) < n - 1 {
        // Ranks are < n, so shift by one to leave 0 for "past the end".
        let key = |i: u32| {
            let i = i as usize;
            (rank[i], rank.get(i + k).map_or(0, |r| r + 1))
        };
        sa.par_sort_unstable_by_key(|&i| key(i));
        next_rank[sa[0] as usize] = 0;
        for w in 1..n {
            let bump = u64::from(key(sa[w - 1]) != key(sa[w]));
            next_rank[sa[w] as usize] = next_rank[sa[w - 1] as usize] + bump;
        }
        std::mem::swap(&mut rank, &mut next_rank);
        k *= 2;
    }
    sa
}

/// Continuations precomputed by an external model run.
///
/// File layout: a flat sequence of records, each an ordinal (u64 LE)
/// followed by `len` tokens (u32 LE).
#[derive(Debug, Clone)]
pub struct FileOracle {
    len: usize,
    records: HashMap<u64, Vec<u32>>,
}

impl FileOracle {
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        let rec = 8 + 4 * len;
        if len == 0 || !bytes.len().is_multiple_of(rec) {
            return Err(Error::Format(format!(
                "oracle file of {} bytes is not a whole number of {rec}-byte records",
                bytes.len()
            )));
        }
        let mut records = HashMap::with_capacity(bytes.len() / rec);
        for chunk in bytes.chunks_exact(rec) {
            let ordinal = u64::from_le_bytes(chunk[..8].try_into().unwrap());
            let tokens = chunk[8..].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
            if records.insert(ordinal, tokens).is_some() {
                return Err(Error::Format(format!("duplicate record for ordinal {ordinal}")));
            }
        }
        Ok(Self { len, records })
    }

    pub fn load(path: &Path, len: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, len)
    }

    /// Write records in the layout [`FileOracle::load`] reads.
    pub fn write<'a>(path: &Path, records: impl IntoIterator<Item = (u64, &'a [u32])>) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for (ordinal, tokens) in records {
            let mut buf = ordinal.to_le_bytes().to_vec();
            buf.extend(tokens.iter().flat_map(|t| t.to_le_bytes()));
            w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl ContinuationOracle for FileOracle {
    fn greedy_continue(&self, prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>> {
        if len != self.len {
            return Err(Error::Contract(format!("oracle file holds {}-token continuations, scan asked for {len}", self.len)));
        }
        self.records
            .get(&prompt.ordinal)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("oracle file has no continuation for ordinal {}", prompt.ordinal)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_suffix_array(text: &[u64]) -> Vec<u32> {
        let mut sa: Vec<u32> = (0..text.len() as u32).collect();
        sa.sort_by(|&a, &b| text[a as usize..].cmp(&text[b as usize..]));
        sa
    }

    #[test]
    fn suffix_array_matches_brute_force() {
        let cases: [&[u64]; 4] = [&[3, 1, 2, 1, 2, 1, 0], &[5, 5, 5, 5, 5], &[1], &[2, 1, 2, 1, 2, 9, 2, 1]];
        for text in cases {
            assert_eq!(suffix_array(text), brute_suffix_array(text), "{text:?}");
        }
    }

    #[test]
    fn ngram_reproduces_training_text() {
        let seqs = [vec![1, 2, 3, 4, 5, 6], vec![9, 8, 7, 6, 5, 4]];
        let oracle = NgramOracle::new(8, &seqs).unwrap();
        let out = oracle.greedy_continue(Prompt { ordinal: 0, tokens: &[1, 2] }, 4).unwrap();
        assert_eq!(out, [3, 4, 5, 6]);
        let out = oracle.greedy_continue(Prompt { ordinal: 0, tokens: &[9, 8, 7] }, 3).unwrap();
        assert_eq!(out, [6, 5, 4]);
    }

    #[test]
    fn ngram_tie_breaks_on_lowest_id() {
        let seqs = [vec![1, 7], vec![1, 3]];
        let oracle = NgramOracle::new(2, &seqs).unwrap();
        assert_eq!(oracle.next_token(&[1]), 3);
    }

    #[test]
    fn ngram_backs_off_to_shorter_history() {
        // [4, 1] never occurs, but [1] is followed by 2.
        let oracle = NgramOracle::new(3, [vec![1, 2], vec![4, 5]]).unwrap();
        assert_eq!(oracle.next_token(&[4, 1]), 2);
        // 2 is only followed by a sequence end: back off to the unigram.
        let oracle = NgramOracle::new(3, [vec![1, 2, 2, 2]]).unwrap();
        assert_eq!(oracle.next_token(&[1]), 2);
    }

    #[test]
    fn lookup_prompt_length_is_checked() {
        let oracle = LookupOracle::new(2, [vec![1, 2, 3]]).unwrap();
        assert_eq!(oracle.greedy_continue(Prompt { ordinal: 0, tokens: &[1, 2] }, 1).unwrap(), [3]);
        assert_eq!(oracle.greedy_continue(Prompt { ordinal: 0, tokens: &[1, 2] }, 2).unwrap(), [3, u32::MAX]);
        assert!(oracle.greedy_continue(Prompt { ordinal: 0, tokens: &[1] }, 1).is_err());
    }

    #[test]
    fn file_oracle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cont.bin");
        FileOracle::write(&path, [(7u64, &[1u32, 2][..]), (3, &[5, 6][..])]).unwrap();
        let oracle = FileOracle::load(&path, 2).unwrap();
        assert_eq!(oracle.greedy_continue(Prompt { ordinal: 3, tokens: &[] }, 2).unwrap(), [5, 6]);
        assert!(matches!(oracle.greedy_continue(Prompt { ordinal: 4, tokens: &[] }, 2), Err(Error::Contract(_))));
        assert!(matches!(FileOracle::load(&path, 3), Err(Error::Format(_))));
    }
}
