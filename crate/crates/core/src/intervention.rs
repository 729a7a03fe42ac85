//! Counterfactual training stream with masculine pronouns swapped to
//! feminine ones over the final fraction of training.
//!
//! Sequences before the intervention boundary are copied bit-for-bit; the
//! boundary is snapped to a whole optimizer step.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::TextCodec;
use crate::dataloader::{tokens_seen, DataOrderPlan, TrainingStream};
use crate::dataset::{DType, DatasetWriter};
use crate::error::{Error, Result};
use crate::text::word_runs;

/// Case-sensitive word replacement table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PronounMap {
    pairs: Vec<(String, String)>,
    lookup: HashMap<String, usize>,
}

impl Default for PronounMap {
    /// he/him/his/himself to she/her/her/herself, in lower, Title and UPPER case.
    fn default() -> Self {
        let base = [("he", "she"), ("him", "her"), ("his", "her"), ("himself", "herself")];
        let mut pairs = Vec::new();
        for (m, f) in base {
            pairs.push((m.to_string(), f.to_string()));
            pairs.push((title_case(m), title_case(f)));
            pairs.push((m.to_uppercase(), f.to_uppercase()));
        }
        Self::new(pairs).expect("default table is a function")
    }
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

impl PronounMap {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut lookup = HashMap::new();
        for (i, (src, _)) in pairs.iter().enumerate() {
            if lookup.insert(src.clone(), i).is_some() {
                return Err(Error::Input(format!("{src:?} is mapped twice")));
            }
        }
        Ok(Self { pairs, lookup })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.lookup.get(word).map(|&i| self.pairs[i].1.as_str())
    }

    fn empty_counts(&self) -> BTreeMap<String, u64> {
        self.pairs.iter().map(|(s, _)| (s.clone(), 0)).collect()
    }
}

/// Replace every word-bounded table match in one left-to-right pass,
/// tallying replacements by source form.
pub fn swap_pronouns_counted(text: &str, map: &PronounMap, counts: &mut BTreeMap<String, u64>) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut last = 0;
    for (start, run) in word_runs(text) {
        if let Some(target) = map.get(run) {
            out.push_str(&text[last..start]);
            out.push_str(target);
            last = start + run.len();
            *counts.entry(run.to_string()).or_default() += 1;
        }
    }
    out.push_str(&text[last..]);
    out
}

pub fn swap_pronouns_text(text: &str, map: &PronounMap) -> String {
    swap_pronouns_counted(text, map, &mut BTreeMap::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionMode {
    /// Detokenize, rewrite text, retokenize. Lengths may change.
    Text,
    /// Swap token ids one-for-one. Lengths are preserved.
    Token,
}

impl std::str::FromStr for InterventionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "token" => Ok(Self::Token),
            other => Err(Error::Config(format!("unknown intervention mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    /// Share of training steps, counted from the end, that are rewritten.
    pub fraction: f64,
    pub mode: InterventionMode,
}

impl InterventionPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction {} is outside (0, 1]", self.fraction)));
        }
        Ok(())
    }

    /// `ceil((1 − fraction) × train_iters)`, treating values within 1e-9 of
    /// an integer as that integer so decimal fractions do not round up a
    /// whole step.
    pub fn start_step(&self, train_iters: u64) -> u64 {
        let x = (1.0 - self.fraction) * train_iters as f64;
        let r = x.round();
        let s = if (x - r).abs() <= 1e-9 * (1.0 + x.abs()) { r } else { x.ceil() };
        (s.max(0.0) as u64).min(train_iters)
    }

    /// Training tokens in the rewritten steps of `data`.
    pub fn tokens_transformed(&self, data: &DataOrderPlan) -> u64 {
        tokens_seen(data, data.train_iters) - tokens_seen(data, self.start_step(data.train_iters))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionManifest {
    pub mode: InterventionMode,
    pub fraction: f64,
    pub train_iters: u64,
    pub batch_size: u64,
    pub start_step: u64,
    /// First training ordinal that was rewritten.
    pub start_ordinal: u64,
    pub sequences: u64,
    pub sequences_transformed: u64,
    /// Training tokens in the rewritten steps.
    pub tokens_transformed: u64,
    /// Replacements made, keyed by the source form.
    pub replacements: BTreeMap<String, u64>,
}

/// One-for-one token id swap derived from a pronoun table and a codec.
#[derive(Debug, Clone)]
pub struct TokenSwap {
    ids: HashMap<u32, (u32, usize)>,
}

impl TokenSwap {
    /// Fails if any source or target form the codec can encode is not a
    /// single token. Forms absent from the vocabulary are skipped.
    pub fn new(map: &PronounMap, codec: &dyn TextCodec) -> Result<Self> {
        let mut ids = HashMap::new();
        for (i, (src, dst)) in map.pairs().iter().enumerate() {
            if !codec.can_encode(src) {
                continue;
            }
            let s = codec
                .single_token(src)
                .ok_or_else(|| Error::UnsupportedCorpus(format!("{src:?} does not encode to a single token")))?;
            let d = codec
                .single_token(dst)
                .ok_or_else(|| Error::UnsupportedCorpus(format!("{dst:?} does not encode to a single token")))?;
            ids.insert(s, (d, i));
        }
        Ok(Self { ids })
    }

    pub fn apply(&self, tokens: &[u32], map: &PronounMap, counts: &mut BTreeMap<String, u64>) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| match self.ids.get(t) {
                Some(&(d, i)) => {
                    *counts.entry(map.pairs()[i].0.clone()).or_default() += 1;
                    d
                }
                None => *t,
            })
            .collect()
    }
}

enum Rewriter<'a> {
    Text(&'a dyn TextCodec),
    Token(TokenSwap),
}

impl Rewriter<'_> {
    fn rewrite(&self, tokens: Vec<u32>, map: &PronounMap) -> Result<(Vec<u32>, BTreeMap<String, u64>)> {
        let mut counts = BTreeMap::new();
        let out = match self {
            Rewriter::Token(swap) => swap.apply(&tokens, map, &mut counts),
            Rewriter::Text(codec) => {
                let new = codec.map_text(&tokens, &mut |s| swap_pronouns_counted(s, map, &mut counts));
                // Untouched sequences keep their original tokens even if the
                // codec would not round-trip them.
                if counts.is_empty() {
                    tokens
                } else {
                    new?
                }
            }
        };
        Ok((out, counts))
    }
}

/// Receives the rewritten stream in training order.
pub trait SequenceSink {
    fn push(&mut self, tokens: &[u32]) -> Result<()>;
}

impl SequenceSink for Vec<Vec<u32>> {
    fn push(&mut self, tokens: &[u32]) -> Result<()> {
        Vec::push(self, tokens.to_vec());
        Ok(())
    }
}

impl SequenceSink for DatasetWriter {
    fn push(&mut self, tokens: &[u32]) -> Result<()> {
        DatasetWriter::push(self, tokens)
    }
}

const CHUNK: u64 = 4096;

/// Emit every training sequence in order to `sink`, rewriting those at or
/// after the intervention boundary.
pub fn apply_intervention_to(
    stream: &TrainingStream<'_>,
    plan: &InterventionPlan,
    map: &PronounMap,
    codec: &dyn TextCodec,
    sink: &mut dyn SequenceSink,
) -> Result<InterventionManifest> {
    plan.validate()?;
    let dp = stream.plan();
    let start_step = plan.start_step(dp.train_iters);
    let start_ordinal = start_step * dp.batch_size;
    let rewriter = match plan.mode {
        InterventionMode::Text => Rewriter::Text(codec),
        InterventionMode::Token => Rewriter::Token(TokenSwap::new(map, codec)?),
    };

    let mut replacements = map.empty_counts();
    let total = stream.len();
    let mut chunk_start = 0;
    while chunk_start < total {
        let chunk_end = (chunk_start + CHUNK).min(total);
        let rows: Vec<(Vec<u32>, BTreeMap<String, u64>)> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|ordinal| {
                let tokens = stream.sequence(ordinal);
                if ordinal < start_ordinal {
                    Ok((tokens, BTreeMap::new()))
                } else {
                    rewriter.rewrite(tokens, map)
                }
            })
            .collect::<Result<_>>()?;
        for (tokens, counts) in rows {
            sink.push(&tokens)?;
            for (k, v) in counts {
                *replacements.entry(k).or_default() += v;
            }
        }
        chunk_start = chunk_end;
    }

    Ok(InterventionManifest {
        mode: plan.mode,
        fraction: plan.fraction,
        train_iters: dp.train_iters,
        batch_size: dp.batch_size,
        start_step,
        start_ordinal,
        sequences: total,
        sequences_transformed: total - start_ordinal.min(total),
        tokens_transformed: plan.tokens_transformed(dp),
        replacements,
    })
}

/// Write the rewritten stream as a dataset (one document per training
/// sequence) at `out`, plus return the manifest.
pub fn apply_intervention(
    stream: &TrainingStream<'_>,
    plan: &InterventionPlan,
    map: &PronounMap,
    codec: &dyn TextCodec,
    out: &Path,
    dtype: DType,
) -> Result<InterventionManifest> {
    let mut writer = DatasetWriter::create(out, dtype)?;
    let manifest = apply_intervention_to(stream, plan, map, codec, &mut writer)?;
    writer.finish()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{ByteCodec, WordCodec};
    use crate::dataset::TokenDataset;

    #[test]
    fn swaps_table_forms() {
        let map = PronounMap::default();
        assert_eq!(
            swap_pronouns_text("He said his dog bit him himself.", &map),
            "She said her dog bit her herself."
        );
        assert_eq!(swap_pronouns_text("HE HIS Himself", &map), "SHE HER Herself");
        assert_eq!(swap_pronouns_text("hertz history", &map), "hertz history");
        assert_eq!(swap_pronouns_text("the hE and he's", &map), "the hE and she's");
    }

    #[test]
    fn idempotent() {
        let map = PronounMap::default();
        let once = swap_pronouns_text("he told him that his own self, himself, was HE.", &map);
        assert_eq!(swap_pronouns_text(&once, &map), once);
    }

    #[test]
    fn table_is_a_function() {
        assert_eq!(PronounMap::default().pairs().len(), 12);
        assert!(PronounMap::new(vec![("a".into(), "b".into()), ("a".into(), "c".into())]).is_err());
    }

    #[test]
    fn start_step_arithmetic() {
        let p = InterventionPlan { fraction: 0.07, mode: InterventionMode::Text };
        assert_eq!(p.start_step(143_000), 132_990);
        let p = InterventionPlan { fraction: 0.21, mode: InterventionMode::Text };
        assert_eq!(p.start_step(143_000), 112_970);
        let p = InterventionPlan { fraction: 1.0, mode: InterventionMode::Text };
        assert_eq!(p.start_step(143_000), 0);
        let p = InterventionPlan { fraction: 0.5, mode: InterventionMode::Text };
        assert_eq!(p.start_step(3), 2);
        assert!(InterventionPlan { fraction: 0.0, mode: InterventionMode::Text }.validate().is_err());
    }

    #[test]
    fn token_mode_rejects_multi_token_pronouns() {
        let err = TokenSwap::new(&PronounMap::default(), &ByteCodec).unwrap_err();
        assert!(matches!(err, Error::UnsupportedCorpus(_)));
    }

    #[test]
    fn token_mode_preserves_length() {
        let mut codec = WordCodec::from_texts(["he saw him and his dog"]);
        for w in ["she", "her"] {
            codec.intern(w);
        }
        let docs: Vec<Vec<u32>> = (0..8).map(|_| codec.encode("he saw him and his dog").unwrap()).collect();
        let ds = TokenDataset::from_docs(&docs, DType::U16).unwrap();
        let dp = DataOrderPlan { seed: 1, batch_size: 2, seq_len: 5, train_iters: 4, eod_token: None, save_interval: 1000 };
        let stream = TrainingStream::new(&ds, &dp).unwrap();
        let plan = InterventionPlan { fraction: 0.5, mode: InterventionMode::Token };
        let mut out: Vec<Vec<u32>> = Vec::new();
        let m = apply_intervention_to(&stream, &plan, &PronounMap::default(), &codec, &mut out).unwrap();
        assert_eq!(m.start_step, 2);
        assert_eq!(m.replacements["he"], 4);
        assert_eq!(m.replacements["his"], 4);
        for (i, seq) in out.iter().enumerate() {
            assert_eq!(seq.len(), 6);
            let text = codec.decode(seq);
            if i < 4 {
                assert_eq!(text, "he saw him and his dog");
            } else {
                assert_eq!(text, "she saw her and her dog");
            }
        }
    }
}
