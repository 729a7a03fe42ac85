use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{ContinuationOracle, Prompt};
use super::poisson::{fit_poisson, PoissonFit};
use crate::dataloader::TrainingStream;
use crate::error::{Error, Result};

/// Leading tokens of each context that a scan looks at.
pub const EVAL_WINDOW: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Prompt length.
    pub k: usize,
    /// Continuation length.
    pub l: usize,
    /// Sequences per time slice.
    pub slice_size: usize,
    /// Scan only the first `limit` training ordinals.
    pub limit: Option<u64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { k: 32, l: 32, slice_size: 512, limit: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub ordinal: u64,
    /// Length of the common prefix of the greedy continuation and the truth.
    pub matched: u32,
    pub memorized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationScan {
    pub config: ScanConfig,
    /// One record per scanned sequence, in training order.
    pub records: Vec<MatchRecord>,
    /// Memorized count per consecutive `slice_size` sequences. The last
    /// slice is partial when the scan length is not a multiple.
    pub slice_counts: Vec<u64>,
}

impl MemorizationScan {
    pub fn memorized(&self) -> u64 {
        self.records.iter().filter(|r| r.memorized).count() as u64
    }

    pub fn rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.memorized() as f64 / self.records.len() as f64
        }
    }

    /// Slice counts with a trailing partial slice removed, so every slice
    /// covers the same exposure.
    pub fn full_slices(&self) -> &[u64] {
        let full = self.records.len() / self.config.slice_size;
        &self.slice_counts[..full]
    }

    pub fn summarize(&self) -> Result<ScanSummary> {
        Ok(ScanSummary {
            sequences: self.records.len() as u64,
            memorized: self.memorized(),
            rate: self.rate(),
            k: self.config.k,
            l: self.config.l,
            slice_size: self.config.slice_size,
            fit: fit_poisson(self.full_slices())?,
        })
    }

    /// `ordinal,matched,memorized` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "ordinal,matched,memorized").map_err(io)?;
        for r in &self.records {
            writeln!(w, "{},{},{}", r.ordinal, r.matched, u8::from(r.memorized)).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Vec<MatchRecord>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("ordinal,matched,memorized") {
            return Err(Error::Format(format!("{}: unexpected header", path.display())));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || Error::Format(format!("{}: bad row {}: {line:?}", path.display(), i + 2));
                let mut f = line.split(',');
                let ordinal = f.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
                let matched = f.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
                let memorized = match f.next() {
                    Some("1") => true,
                    Some("0") => false,
                    _ => return Err(bad()),
                };
                Ok(MatchRecord { ordinal, matched, memorized })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub sequences: u64,
    pub memorized: u64,
    pub rate: f64,
    pub k: usize,
    pub l: usize,
    pub slice_size: usize,
    pub fit: PoissonFit,
}

/// Prompt the oracle with the first `k` tokens of every sequence in training
/// order and compare its continuation against the next `l` tokens.
pub fn scan(stream: &TrainingStream<'_>, oracle: &dyn ContinuationOracle, config: &ScanConfig) -> Result<MemorizationScan> {
    let (k, l) = (config.k, config.l);
    if k == 0 || l == 0 || (k + l) as u64 > EVAL_WINDOW {
        return Err(Error::Config(format!("need 1 <= k, 1 <= l and k + l <= {EVAL_WINDOW}, got k = {k}, l = {l}")));
    }
    if stream.plan().seq_len < EVAL_WINDOW {
        return Err(Error::Config(format!("seq_len {} is shorter than the {EVAL_WINDOW}-token window", stream.plan().seq_len)));
    }
    if config.slice_size == 0 {
        return Err(Error::Config("slice_size must be positive".into()));
    }
    let total = config.limit.map_or(stream.len(), |n| n.min(stream.len()));
    let contexts = stream.contexts();
    let index = stream.index();

    let records = (0..total)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(k + l),
            |buf, ordinal| {
                buf.clear();
                let id = index.get(ordinal).expect("ordinal below stream length");
                contexts.read_prefix(id, (k + l) as u64, buf);
                let (prompt, truth) = buf.split_at(k);
                let generated = oracle.greedy_continue(Prompt { ordinal, tokens: prompt }, l)?;
                if generated.len() != l {
                    return Err(Error::Contract(format!(
                        "oracle returned {} tokens for ordinal {ordinal}, expected {l}",
                        generated.len()
                    )));
                }
                let matched = generated.iter().zip(truth).take_while(|(a, b)| a == b).count();
                Ok(MatchRecord { ordinal, matched: matched as u32, memorized: matched == l })
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let slice_counts = records
        .chunks(config.slice_size)
        .map(|c| c.iter().filter(|r| r.memorized).count() as u64)
        .collect();
    Ok(MemorizationScan { config: config.clone(), records, slice_counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataloader::DataOrderPlan;
    use crate::dataset::{DType, TokenDataset};
    use crate::memorization::oracle::{ConstantOracle, LookupOracle, NgramOracle};

    fn corpus(contexts: u32) -> TokenDataset {
        // Each document is one 65-token context with distinct tokens.
        let docs = (0..contexts).map(|c| (0..65).map(|i| c * 65 + i).collect::<Vec<u32>>());
        TokenDataset::from_docs(docs, DType::U32).unwrap()
    }

    fn plan(contexts: u64) -> DataOrderPlan {
        DataOrderPlan { seed: 7, batch_size: 1, seq_len: 64, train_iters: contexts, eod_token: None, save_interval: 1000 }
    }

    #[test]
    fn perfect_and_never_oracles() {
        let ds = corpus(50);
        let stream = TrainingStream::new(&ds, &plan(50)).unwrap();
        let cfg = ScanConfig { slice_size: 10, ..ScanConfig::default() };

        let strings: Vec<Vec<u32>> = ds.documents().map(|d| d.to_vec()[..64].to_vec()).collect();
        let perfect = LookupOracle::new(32, &strings).unwrap();
        let s = scan(&stream, &perfect, &cfg).unwrap();
        assert_eq!(s.rate(), 1.0);
        assert_eq!(s.slice_counts, [10; 5]);
        assert!(s.records.windows(2).all(|w| w[0].ordinal + 1 == w[1].ordinal));

        let never = scan(&stream, &ConstantOracle(u32::MAX), &cfg).unwrap();
        assert_eq!(never.rate(), 0.0);
        assert!(never.records.iter().all(|r| r.matched == 0));
    }

    #[test]
    fn ngram_on_own_corpus_memorizes_everything() {
        let ds = corpus(20);
        let stream = TrainingStream::new(&ds, &plan(20)).unwrap();
        let seqs: Vec<Vec<u32>> = ds.documents().map(|d| d.to_vec()).collect();
        let oracle = NgramOracle::new(64, &seqs).unwrap();
        let s = scan(&stream, &oracle, &ScanConfig { slice_size: 4, ..ScanConfig::default() }).unwrap();
        assert_eq!(s.rate(), 1.0);
    }

    #[test]
    fn partial_match_counts_prefix() {
        struct HalfRight;
        impl ContinuationOracle for HalfRight {
            fn greedy_continue(&self, prompt: Prompt<'_>, len: usize) -> Result<Vec<u32>> {
                // Corpus tokens are consecutive, so the truth continues the prompt.
                let last = *prompt.tokens.last().unwrap();
                Ok((1..=len as u32).map(|i| if i <= 5 { last + i } else { u32::MAX }).collect())
            }
        }
        let ds = corpus(3);
        let stream = TrainingStream::new(&ds, &plan(3)).unwrap();
        let s = scan(&stream, &HalfRight, &ScanConfig { slice_size: 2, ..ScanConfig::default() }).unwrap();
        assert!(s.records.iter().all(|r| r.matched == 5 && !r.memorized));
        assert_eq!(s.slice_counts, [0, 0]);
        assert_eq!(s.full_slices(), [0]);
    }

    #[test]
    fn wrong_length_is_contract_error() {
        struct Short;
        impl ContinuationOracle for Short {
            fn greedy_continue(&self, _: Prompt<'_>, _: usize) -> Result<Vec<u32>> {
                Ok(vec![1])
            }
        }
        let ds = corpus(2);
        let stream = TrainingStream::new(&ds, &plan(2)).unwrap();
        assert!(matches!(scan(&stream, &Short, &ScanConfig::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn window_constraints() {
        let ds = corpus(2);
        let stream = TrainingStream::new(&ds, &plan(2)).unwrap();
        let cfg = ScanConfig { k: 40, l: 32, ..ScanConfig::default() };
        assert!(matches!(scan(&stream, &ConstantOracle(0), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn csv_round_trip() {
        let ds = corpus(4);
        let stream = TrainingStream::new(&ds, &plan(4)).unwrap();
        let s = scan(&stream, &ConstantOracle(0), &ScanConfig { slice_size: 2, ..ScanConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.csv");
        s.write_csv(&path).unwrap();
        assert_eq!(MemorizationScan::read_csv(&path).unwrap(), s.records);
    }
}
