//! Deterministic reconstruction of the training stream.
//!
//! The stream is built in four fixed stages:
//!
//! 1. documents are concatenated in corpus order, with the optional EOD token
//!    appended after each one;
//! 2. the joined stream is cut into contexts of `seq_len + 1` tokens and the
//!    trailing partial chunk is dropped;
//! 3. each epoch shuffles all context ids with Fisher–Yates driven by a
//!    splitmix64 generator seeded from `(seed, epoch)`;
//! 4. epoch permutations are concatenated and truncated to
//!    `train_iters × batch_size` entries.
//!
//! Batch `b` is entries `[b × batch_size, (b + 1) × batch_size)` of that index.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TokenDataset;
use crate::error::{Error, Result};
use crate::rng::{epoch_seed, fisher_yates, SplitMix64};

pub const DEFAULT_BATCH_SIZE: u64 = 1024;
pub const DEFAULT_SEQ_LEN: u64 = 2048;
pub const DEFAULT_TRAIN_ITERS: u64 = 143_000;
pub const DEFAULT_SAVE_INTERVAL: u64 = 1000;
pub const DEFAULT_SEED: u64 = 1234;

/// Log-spaced early checkpoints.
pub const EARLY_CHECKPOINTS: [u64; 10] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512];

/// Everything that determines sample order, batch contents and checkpoint steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataOrderPlan {
    pub seed: u64,
    /// Sequences per optimizer step.
    pub batch_size: u64,
    /// Tokens per sequence; contexts carry one extra target token.
    pub seq_len: u64,
    pub train_iters: u64,
    pub eod_token: Option<u32>,
    #[serde(default = "default_save_interval")]
    pub save_interval: u64,
}

fn default_save_interval() -> u64 {
    DEFAULT_SAVE_INTERVAL
}

impl Default for DataOrderPlan {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            batch_size: DEFAULT_BATCH_SIZE,
            seq_len: DEFAULT_SEQ_LEN,
            train_iters: DEFAULT_TRAIN_ITERS,
            eod_token: None,
            save_interval: DEFAULT_SAVE_INTERVAL,
        }
    }
}

impl DataOrderPlan {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.seq_len == 0 || self.train_iters == 0 || self.save_interval == 0 {
            return Err(Error::Config(format!(
                "batch_size, seq_len, train_iters and save_interval must all be positive: {self:?}"
            )));
        }
        self.total_samples()
            .and_then(|_| self.batch_size.checked_mul(self.seq_len)?.checked_mul(self.train_iters))
            .ok_or_else(|| Error::Config("plan size overflows u64".into()))?;
        Ok(())
    }

    /// Tokens per context.
    pub fn context_len(&self) -> u64 {
        self.seq_len + 1
    }

    /// Number of sample-index entries the run consumes.
    pub fn total_samples(&self) -> Option<u64> {
        self.train_iters.checked_mul(self.batch_size)
    }

    /// Fraction of passes over `num_contexts` contexts the run consumes.
    pub fn epochs_covered(&self, num_contexts: u64) -> f64 {
        self.train_iters as f64 * self.batch_size as f64 / num_contexts as f64
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Tokens consumed after `step` optimizer steps.
pub fn tokens_seen(plan: &DataOrderPlan, step: u64) -> u64 {
    step * plan.batch_size * plan.seq_len
}

/// Sorted set of steps at which model state is saved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointSchedule {
    pub steps: Vec<u64>,
}

impl CheckpointSchedule {
    pub fn contains(&self, step: u64) -> bool {
        self.steps.binary_search(&step).is_ok()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Initialization, the log-spaced early steps, and every `save_interval`
/// steps up to `train_iters`.
pub fn checkpoint_schedule(plan: &DataOrderPlan) -> CheckpointSchedule {
    let interval = plan.save_interval.max(1);
    let mut steps = BTreeSet::from([0]);
    steps.extend(EARLY_CHECKPOINTS.iter().copied().filter(|&s| s <= plan.train_iters));
    steps.extend((1..=plan.train_iters / interval).map(|k| k * interval));
    CheckpointSchedule { steps: steps.into_iter().collect() }
}

/// Random access into the EOD-joined, chunked context stream (stages 1–2).
#[derive(Debug, Clone, Copy)]
pub struct ContextStream<'a> {
    dataset: &'a TokenDataset,
    eod: Option<u32>,
    context_len: u64,
    stream_len: u64,
}

impl<'a> ContextStream<'a> {
    pub fn new(dataset: &'a TokenDataset, plan: &DataOrderPlan) -> Self {
        let eod_count = if plan.eod_token.is_some() { dataset.doc_count() as u64 } else { 0 };
        Self {
            dataset,
            eod: plan.eod_token,
            context_len: plan.context_len(),
            stream_len: dataset.total_tokens() + eod_count,
        }
    }

    /// Length of the joined stream, including EOD tokens.
    pub fn stream_len(&self) -> u64 {
        self.stream_len
    }

    pub fn num_contexts(&self) -> u64 {
        self.stream_len / self.context_len
    }

    pub fn context_len(&self) -> u64 {
        self.context_len
    }

    pub fn dataset(&self) -> &'a TokenDataset {
        self.dataset
    }

    /// Tokens of context `id`.
    pub fn context(&self, id: u64) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.context_len as usize);
        self.read_context(id, &mut out);
        out
    }

    /// Append the first `len` tokens of context `id` to `out`.
    pub fn read_prefix(&self, id: u64, len: u64, out: &mut Vec<u32>) {
        assert!(id < self.num_contexts(), "context {id} out of range");
        let start = id * self.context_len;
        self.read_stream(start..start + len.min(self.context_len), out);
    }

    pub fn read_context(&self, id: u64, out: &mut Vec<u32>) {
        self.read_prefix(id, self.context_len, out)
    }

    fn read_stream(&self, range: std::ops::Range<u64>, out: &mut Vec<u32>) {
        let Some(eod) = self.eod else {
            self.dataset.read_range(range, out);
            return;
        };
        // Document d occupies stream positions [offset(d) + d, offset(d + 1) + d)
        // and is followed by one EOD token.
        let ds = self.dataset;
        let mut pos = range.start;
        let mut doc = self.doc_at_stream_pos(pos);
        while pos < range.end {
            let doc_start = ds.offset(doc) + doc as u64;
            let doc_end = ds.offset(doc + 1) + doc as u64;
            if pos < doc_end {
                let take_end = doc_end.min(range.end);
                let token_start = pos - doc as u64;
                ds.read_range(token_start..take_end - doc as u64, out);
                pos = take_end;
            }
            if pos == doc_end && pos < range.end {
                out.push(eod);
                pos += 1;
                doc += 1;
            }
            debug_assert!(pos >= doc_start);
        }
    }

    /// Document whose tokens or trailing EOD cover stream position `pos`.
    fn doc_at_stream_pos(&self, pos: u64) -> usize {
        let ds = self.dataset;
        // Smallest d with offset(d + 1) + d >= pos, i.e. pos <= end of doc d's EOD slot.
        let (mut lo, mut hi) = (0usize, ds.doc_count().saturating_sub(1));
        while lo < hi {
            let mid = (lo + hi) / 2;
            if ds.offset(mid + 1) + mid as u64 >= pos {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

/// Ordered list of context ids for the whole run (stages 3–4).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleIndex {
    num_contexts: u64,
    entries: Vec<u64>,
}

impl SampleIndex {
    /// Build the index for `num_contexts` contexts. Epoch permutations are
    /// computed in parallel and concatenated in epoch order.
    pub fn build(num_contexts: u64, plan: &DataOrderPlan) -> Result<Self> {
        plan.validate()?;
        if num_contexts == 0 {
            return Err(Error::Config(format!(
                "the corpus yields no complete context of {} tokens",
                plan.context_len()
            )));
        }
        let total = plan.total_samples().expect("validated") as usize;
        let n = num_contexts as usize;
        let epochs = total.div_ceil(n);
        let mut entries = vec![0u64; total];
        entries.par_chunks_mut(n).enumerate().for_each(|(epoch, chunk)| {
            let perm = epoch_permutation(num_contexts, plan.seed, epoch as u64);
            chunk.copy_from_slice(&perm[..chunk.len()]);
        });
        debug_assert_eq!(entries.len().div_ceil(n), epochs);
        Ok(Self { num_contexts, entries })
    }

    pub fn num_contexts(&self) -> u64 {
        self.num_contexts
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Context id seen at training ordinal `ordinal`.
    pub fn get(&self, ordinal: u64) -> Option<u64> {
        self.entries.get(ordinal as usize).copied()
    }

    /// Entries belonging to epoch `epoch` (possibly partial for the last one).
    pub fn epoch(&self, epoch: u64) -> &[u64] {
        let n = self.num_contexts as usize;
        let start = (epoch as usize * n).min(self.entries.len());
        let end = (start + n).min(self.entries.len());
        &self.entries[start..end]
    }

    /// Write the index as a flat little-endian u64 array.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for e in &self.entries {
            w.write_all(&e.to_le_bytes()).map_err(|err| Error::io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_entries(path: &Path) -> Result<Vec<u64>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format(format!("{}: length is not a multiple of 8", path.display())));
        }
        Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// The Fisher–Yates permutation of `0..num_contexts` for one epoch.
pub fn epoch_permutation(num_contexts: u64, seed: u64, epoch: u64) -> Vec<u64> {
    let mut perm: Vec<u64> = (0..num_contexts).collect();
    fisher_yates(&mut perm, &mut SplitMix64::new(epoch_seed(seed, epoch)));
    perm
}

/// Sample order over a concrete dataset.
pub fn build_sample_index(dataset: &TokenDataset, plan: &DataOrderPlan) -> Result<SampleIndex> {
    SampleIndex::build(ContextStream::new(dataset, plan).num_contexts(), plan)
}

/// One optimizer step's worth of contexts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub step: u64,
    pub context_ids: Vec<u64>,
    /// `context_ids.len()` rows of `seq_len + 1` tokens, row-major.
    pub tokens: Vec<u32>,
}

impl Batch {
    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        let width = self.tokens.len() / self.context_ids.len().max(1);
        self.tokens.chunks(width.max(1))
    }
}

/// A dataset together with its reconstructed sample order.
#[derive(Debug)]
pub struct TrainingStream<'a> {
    plan: DataOrderPlan,
    contexts: ContextStream<'a>,
    index: SampleIndex,
}

impl<'a> TrainingStream<'a> {
    pub fn new(dataset: &'a TokenDataset, plan: &DataOrderPlan) -> Result<Self> {
        let contexts = ContextStream::new(dataset, plan);
        let index = SampleIndex::build(contexts.num_contexts(), plan)?;
        Ok(Self { plan: plan.clone(), contexts, index })
    }

    pub fn plan(&self) -> &DataOrderPlan {
        &self.plan
    }

    pub fn contexts(&self) -> &ContextStream<'a> {
        &self.contexts
    }

    pub fn index(&self) -> &SampleIndex {
        &self.index
    }

    /// Number of sequences in the run.
    pub fn len(&self) -> u64 {
        self.index.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Tokens of the sequence at training ordinal `ordinal`.
    pub fn sequence(&self, ordinal: u64) -> Vec<u32> {
        let id = self.index.get(ordinal).expect("ordinal out of range");
        self.contexts.context(id)
    }

    pub fn batch_at(&self, step: u64) -> Result<Batch> {
        if step >= self.plan.train_iters {
            return Err(Error::Contract(format!(
                "step {step} is outside [0, {})",
                self.plan.train_iters
            )));
        }
        let bs = self.plan.batch_size as usize;
        let start = step as usize * bs;
        let context_ids = self.index.entries()[start..start + bs].to_vec();
        let mut tokens = Vec::with_capacity(bs * self.contexts.context_len() as usize);
        for &id in &context_ids {
            self.contexts.read_context(id, &mut tokens);
        }
        Ok(Batch { step, context_ids, tokens })
    }
}

pub fn batch_at(dataset: &TokenDataset, plan: &DataOrderPlan, step: u64) -> Result<Batch> {
    TrainingStream::new(dataset, plan)?.batch_at(step)
}
