//! Term occurrence counts over exactly the data seen up to a checkpoint, and
//! their relation to per-term task accuracy.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::TextCodec;
use crate::dataloader::{checkpoint_schedule, TrainingStream};
use crate::error::{Error, Result};
use crate::text::{contains_bounded, word_runs};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TermSpec {
    /// A decimal operand; counts every word-bounded occurrence.
    NumericOperand { value: String },
    /// Named entities that must all appear in the same training sequence;
    /// counts sequences, not mentions.
    EntitySet { entities: Vec<String> },
}

impl TermSpec {
    pub fn numeric(value: impl ToString) -> Self {
        TermSpec::NumericOperand { value: value.to_string() }
    }

    pub fn entities<S: Into<String>>(entities: impl IntoIterator<Item = S>) -> Self {
        TermSpec::EntitySet { entities: entities.into_iter().map(Into::into).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TermSpec::NumericOperand { value } => {
                let digits = !value.is_empty() && value.bytes().all(|b| b.is_ascii_digit());
                if !digits || (value.len() > 1 && value.starts_with('0')) {
                    return Err(Error::Input(format!("{value:?} is not a canonical decimal operand")));
                }
            }
            TermSpec::EntitySet { entities } => {
                if entities.is_empty() || entities.iter().any(|e| e.trim().is_empty()) {
                    return Err(Error::Input("entity sets need at least one non-blank entity".into()));
                }
            }
        }
        Ok(())
    }

    /// Key used in CSV files: the operand itself, or the entities joined by `|`.
    pub fn label(&self) -> String {
        match self {
            TermSpec::NumericOperand { value } => value.clone(),
            TermSpec::EntitySet { entities } => entities.join("|"),
        }
    }
}

pub fn load_terms(path: &Path) -> Result<Vec<TermSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let terms: Vec<TermSpec> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    terms.iter().try_for_each(TermSpec::validate)?;
    Ok(terms)
}

/// Pre-processed term list that counts matches in one piece of text.
#[derive(Debug, Clone)]
pub struct TermCounter {
    numeric: HashMap<String, Vec<usize>>,
    entity_sets: Vec<(usize, Vec<String>)>,
    len: usize,
}

impl TermCounter {
    pub fn new(terms: &[TermSpec]) -> Result<Self> {
        let mut numeric: HashMap<String, Vec<usize>> = HashMap::new();
        let mut entity_sets = Vec::new();
        for (i, t) in terms.iter().enumerate() {
            t.validate()?;
            match t {
                TermSpec::NumericOperand { value } => numeric.entry(value.clone()).or_default().push(i),
                TermSpec::EntitySet { entities } => {
                    entity_sets.push((i, entities.iter().map(|e| e.to_lowercase()).collect()))
                }
            }
        }
        Ok(Self { numeric, entity_sets, len: terms.len() })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Add this text's matches to `counts`.
    pub fn count(&self, text: &str, counts: &mut [u64]) {
        // An operand is made only of word characters, so a word-bounded match
        // is exactly a maximal word run equal to it.
        if !self.numeric.is_empty() {
            for (_, run) in word_runs(text) {
                if let Some(ids) = self.numeric.get(run) {
                    for &i in ids {
                        counts[i] += 1;
                    }
                }
            }
        }
        if !self.entity_sets.is_empty() {
            let lower = text.to_lowercase();
            for (i, entities) in &self.entity_sets {
                if entities.iter().all(|e| contains_bounded(&lower, e)) {
                    counts[*i] += 1;
                }
            }
        }
    }
}

/// Counts over training ordinals in `ordinals`, each sequence detokenized on
/// its own.
pub fn count_ordinals(
    stream: &TrainingStream<'_>,
    codec: &dyn TextCodec,
    counter: &TermCounter,
    ordinals: Range<u64>,
) -> Vec<u64> {
    let contexts = stream.contexts();
    let index = stream.index();
    ordinals
        .into_par_iter()
        .fold(
            || (vec![0u64; counter.len()], Vec::new()),
            |(mut counts, mut buf), ordinal| {
                buf.clear();
                contexts.read_context(index.get(ordinal).expect("ordinal in range"), &mut buf);
                counter.count(&codec.decode(&buf), &mut counts);
                (counts, buf)
            },
        )
        .map(|(counts, _)| counts)
        .reduce(
            || vec![0u64; counter.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

fn check_step(stream: &TrainingStream<'_>, step: u64) -> Result<()> {
    if !checkpoint_schedule(stream.plan()).contains(step) {
        return Err(Error::Contract(format!("step {step} is not a checkpoint of this plan")));
    }
    Ok(())
}

/// Per-term counts over every sequence in batches `[0, step)`. `step` must
/// be a checkpoint step.
pub fn count_up_to(
    stream: &TrainingStream<'_>,
    codec: &dyn TextCodec,
    step: u64,
    terms: &[TermSpec],
) -> Result<Vec<u64>> {
    check_step(stream, step)?;
    let counter = TermCounter::new(terms)?;
    Ok(count_ordinals(stream, codec, &counter, 0..step * stream.plan().batch_size))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub step: u64,
    pub counts: Vec<u64>,
}

/// Cumulative counts at each of `steps`, scanning the stream once.
pub fn count_at_steps(
    stream: &TrainingStream<'_>,
    codec: &dyn TextCodec,
    terms: &[TermSpec],
    steps: &[u64],
) -> Result<Vec<StepCounts>> {
    let mut steps = steps.to_vec();
    steps.sort_unstable();
    steps.dedup();
    for &s in &steps {
        check_step(stream, s)?;
    }
    let counter = TermCounter::new(terms)?;
    let bs = stream.plan().batch_size;
    let mut running = vec![0u64; terms.len()];
    let mut prev = 0;
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let delta = count_ordinals(stream, codec, &counter, prev * bs..step * bs);
        running.iter_mut().zip(delta).for_each(|(r, d)| *r += d);
        out.push(StepCounts { step, counts: running.clone() });
        prev = step;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub term: String,
    pub step: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub term: String,
    pub accuracy: f64,
    pub shots: u32,
}

fn read_csv_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_csv_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_counts(path: &Path) -> Result<Vec<CountRecord>> {
    read_csv_records(path)
}

pub fn load_accuracy(path: &Path) -> Result<Vec<AccuracyRecord>> {
    let recs: Vec<AccuracyRecord> = read_csv_records(path)?;
    if let Some(r) = recs.iter().find(|r| !r.accuracy.is_finite()) {
        return Err(Error::Input(format!("accuracy for {:?} is not finite", r.term)));
    }
    Ok(recs)
}

/// Mean accuracy of the terms whose count falls in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBin {
    pub lo: u64,
    pub hi: u64,
    pub terms: usize,
    pub mean_accuracy: f64,
}

/// Base-2 log bins: `{0}`, `[1,2)`, `[2,4)`, `[4,8)`, … Empty bins are omitted.
pub fn binned_accuracy(counts: &[u64], accuracy: &[f64]) -> Result<Vec<AccuracyBin>> {
    check_lengths(counts, accuracy)?;
    let mut sums: std::collections::BTreeMap<u32, (f64, usize)> = Default::default();
    for (&c, &a) in counts.iter().zip(accuracy) {
        let bin = if c == 0 { 0 } else { 64 - c.leading_zeros() };
        let e = sums.entry(bin).or_default();
        e.0 += a;
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(bin, (sum, n))| {
            let (lo, hi) = if bin == 0 { (0, 1) } else { (1u64 << (bin - 1), 1u64.checked_shl(bin).unwrap_or(u64::MAX)) };
            AccuracyBin { lo, hi, terms: n, mean_accuracy: sum / n as f64 }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceGap {
    /// Percentage points: 100 × (top-decile mean − bottom-decile mean).
    pub delta: f64,
    pub top_mean: f64,
    pub bottom_mean: f64,
    pub decile_size: usize,
    pub n_terms: usize,
    /// Fewer than ten terms; deciles were clamped to one term each.
    pub small_sample: bool,
}

/// Accuracy gap between the most and least frequent tenth of terms. Terms
/// are ranked by count, descending, with ties kept in input order.
pub fn performance_gap(counts: &[u64], accuracy: &[f64]) -> Result<PerformanceGap> {
    check_lengths(counts, accuracy)?;
    let n = counts.len();
    if n == 0 {
        return Err(Error::Input("performance gap needs at least one term".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(counts[i]));
    let d = (n / 10).max(1);
    let mean = |ids: &[usize]| ids.iter().map(|&i| accuracy[i]).sum::<f64>() / ids.len() as f64;
    let top_mean = mean(&order[..d]);
    let bottom_mean = mean(&order[n - d..]);
    Ok(PerformanceGap {
        delta: 100.0 * (top_mean - bottom_mean),
        top_mean,
        bottom_mean,
        decile_size: d,
        n_terms: n,
        small_sample: n < 10,
    })
}

fn check_lengths(counts: &[u64], accuracy: &[f64]) -> Result<()> {
    if counts.len() != accuracy.len() {
        return Err(Error::Input(format!("{} counts but {} accuracies", counts.len(), accuracy.len())));
    }
    Ok(())
}

/// Counts and accuracies at one checkpoint, joined by term label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub checkpoint_step: u64,
    pub shots: u32,
    pub terms: Vec<String>,
    pub counts: Vec<u64>,
    pub accuracy: Vec<f64>,
    pub bins: Vec<AccuracyBin>,
    pub gap: PerformanceGap,
}

impl FrequencyReport {
    /// Join `counts` rows at `step` with `accuracy` rows at `shots`. Term
    /// order follows the counts file. Every term needs exactly one accuracy.
    pub fn build(step: u64, shots: u32, counts: &[CountRecord], accuracy: &[AccuracyRecord]) -> Result<Self> {
        let mut acc: HashMap<&str, f64> = HashMap::new();
        for r in accuracy.iter().filter(|r| r.shots == shots) {
            if acc.insert(&r.term, r.accuracy).is_some() {
                return Err(Error::Input(format!("duplicate accuracy for term {:?} at {shots} shots", r.term)));
            }
        }
        let rows: Vec<&CountRecord> = counts.iter().filter(|r| r.step == step).collect();
        if rows.is_empty() {
            return Err(Error::Input(format!("no counts recorded at step {step}")));
        }
        let mut terms = Vec::with_capacity(rows.len());
        let mut c = Vec::with_capacity(rows.len());
        let mut a = Vec::with_capacity(rows.len());
        for r in rows {
            let acc = acc
                .get(r.term.as_str())
                .ok_or_else(|| Error::Input(format!("no accuracy for term {:?} at {shots} shots", r.term)))?;
            terms.push(r.term.clone());
            c.push(r.count);
            a.push(*acc);
        }
        let bins = binned_accuracy(&c, &a)?;
        let gap = performance_gap(&c, &a)?;
        Ok(Self { checkpoint_step: step, shots, terms, counts: c, accuracy: a, bins, gap })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_one(text: &str, terms: &[TermSpec]) -> Vec<u64> {
        let counter = TermCounter::new(terms).unwrap();
        let mut counts = vec![0; terms.len()];
        counter.count(text, &mut counts);
        counts
    }

    #[test]
    fn numeric_word_boundaries() {
        assert_eq!(count_one("24 plus 24", &[TermSpec::numeric(24)]), [2]);
        assert_eq!(count_one("24", &[TermSpec::numeric(4)]), [0]);
        assert_eq!(count_one("(24), 24.", &[TermSpec::numeric(24)]), [2]);
    }

    #[test]
    fn entity_sets_count_sequences() {
        let t = [TermSpec::entities(["Paris", "France"])];
        assert_eq!(count_one("paris, paris and FRANCE", &t), [1]);
        assert_eq!(count_one("Paris only", &t), [0]);
        assert_eq!(count_one("Parisian France", &t), [0]);
    }

    #[test]
    fn term_validation() {
        assert!(TermSpec::numeric("07").validate().is_err());
        assert!(TermSpec::numeric("0").validate().is_ok());
        assert!(TermSpec::numeric("1a").validate().is_err());
        assert!(TermSpec::entities(Vec::<String>::new()).validate().is_err());
    }

    #[test]
    fn terms_json_format() {
        let json = r#"[{"kind":"numeric-operand","value":"24"},{"kind":"entity-set","entities":["a","b"]}]"#;
        let terms: Vec<TermSpec> = serde_json::from_str(json).unwrap();
        assert_eq!(terms, [TermSpec::numeric(24), TermSpec::entities(["a", "b"])]);
        assert_eq!(terms[1].label(), "a|b");
    }

    #[test]
    fn bins() {
        assert_eq!(
            binned_accuracy(&[0, 0, 0], &[0.1, 0.2, 0.3]).unwrap(),
            [AccuracyBin { lo: 0, hi: 1, terms: 3, mean_accuracy: (0.1 + 0.2 + 0.3) / 3.0 }]
        );
        let b = binned_accuracy(&[1, 3], &[0.2, 0.4]).unwrap();
        assert_eq!(
            b,
            [
                AccuracyBin { lo: 1, hi: 2, terms: 1, mean_accuracy: 0.2 },
                AccuracyBin { lo: 2, hi: 4, terms: 1, mean_accuracy: 0.4 }
            ]
        );
        let b = binned_accuracy(&[u64::MAX], &[1.0]).unwrap();
        assert_eq!((b[0].lo, b[0].hi), (1 << 63, u64::MAX));
    }

    #[test]
    fn gap_equal_accuracies_is_zero() {
        let counts: Vec<u64> = (0..30).collect();
        assert_eq!(performance_gap(&counts, &[0.37; 30]).unwrap().delta, 0.0);
    }

    #[test]
    fn gap_small_sample_flag() {
        let g = performance_gap(&[5, 1, 3], &[0.9, 0.1, 0.5]).unwrap();
        assert!(g.small_sample);
        assert_eq!(g.decile_size, 1);
        assert!((g.delta - 80.0).abs() < 1e-9);
    }

    #[test]
    fn gap_ties_keep_term_order() {
        // All counts equal: top decile is the first term, bottom the last.
        let acc: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let g = performance_gap(&[4; 10], &acc).unwrap();
        assert!((g.delta - (0.0 - 0.9) * 100.0).abs() < 1e-9);
    }

    #[test]
    fn report_requires_accuracy_for_every_term() {
        let counts = vec![CountRecord { term: "1".into(), step: 0, count: 2 }];
        let acc = vec![AccuracyRecord { term: "1".into(), accuracy: 0.5, shots: 4 }];
        assert!(FrequencyReport::build(0, 4, &counts, &acc).is_ok());
        assert!(FrequencyReport::build(0, 0, &counts, &acc).is_err());
        assert!(FrequencyReport::build(1, 4, &counts, &acc).is_err());
    }
}
