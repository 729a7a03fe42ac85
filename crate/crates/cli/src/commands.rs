//! One function per subcommand. Each resolves its config, writes
//! `run.json`, then delegates to the core library.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use pvk_core::dataloader::checkpoint_schedule;
use pvk_core::dedup::{lsh_cluster, lsh_cluster_verified, sketch_dataset, sketch_texts};
use pvk_core::memorization::{chi_square_binned, fit_poisson as fit, scan, BinnedChiSquare, ScanConfig};
use pvk_core::term_frequency::{count_at_steps, load_accuracy, load_counts, load_terms, write_csv_records, CountRecord};
use pvk_core::{
    bias, tokens_seen, ByteCodec, DType, DataOrderPlan, DatasetWriter, Error, FrequencyReport, InterventionMode,
    InterventionPlan, PronounMap, TextCodec, TokenDataset, TrainingStream, WordCodec,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{resolve, RunRecord};
use crate::{specs, CliError, OutArgs, PlanArgs};

type Result<T> = std::result::Result<T, CliError>;

fn default_out() -> PathBuf {
    PathBuf::from("pvk-out")
}

fn plan_flags(p: &PlanArgs) -> Value {
    json!({
        "seed": p.seed,
        "batch_size": p.batch_size,
        "seq_len": p.seq_len,
        "train_iters": p.train_iters,
        "eod_token": p.eod_token,
        "save_interval": p.interval,
    })
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| CliError::Usage(format!("--{flag} is required (flag or config)")))
}

/// Create the output directory and record the effective config.
fn start<T: Serialize>(command: &str, out: &Path, config: &T) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let record = RunRecord { command, version: pvk_core::VERSION, config };
    write_json(&out.join("run.json"), &record)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn open_dataset(path: &Path) -> Result<TokenDataset> {
    Ok(TokenDataset::open(path)?)
}

/// One text per line, or the `text` field of each JSON line.
fn read_texts(path: &Path, format: Option<&str>) -> Result<Vec<String>> {
    let jsonl = match format {
        Some("jsonl") => true,
        Some("lines") => false,
        Some(other) => return Err(CliError::Usage(format!("unknown input format {other:?}; use lines or jsonl"))),
        None => path.extension().is_some_and(|e| e == "jsonl"),
    };
    #[derive(Deserialize)]
    struct Line {
        text: String,
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut texts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if jsonl {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
            texts.push(parsed.text);
        } else {
            texts.push(line);
        }
    }
    Ok(texts)
}

// ---------------------------------------------------------------- build-dataset

#[derive(Args)]
pub struct BuildDatasetArgs {
    /// Text file: one document per line, or JSON lines with a `text` field.
    #[arg(long)]
    input: Option<PathBuf>,
    /// `lines` or `jsonl`; inferred from the extension by default.
    #[arg(long)]
    format: Option<String>,
    /// `bytes`, `vocab:PATH`, or `words` to build a vocabulary from the input.
    #[arg(long)]
    codec: Option<String>,
    /// `u16` or `u32`; the narrowest that fits the vocabulary by default.
    #[arg(long)]
    dtype: Option<String>,
    /// Dataset base path; defaults to `<out>/dataset`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildDatasetConfig {
    input: Option<PathBuf>,
    format: Option<String>,
    codec: String,
    dtype: Option<String>,
    output: Option<PathBuf>,
    out: PathBuf,
}

impl Default for BuildDatasetConfig {
    fn default() -> Self {
        Self { input: None, format: None, codec: "bytes".into(), dtype: None, output: None, out: default_out() }
    }
}

pub fn build_dataset(cfg: Option<&Path>, a: BuildDatasetArgs) -> Result<()> {
    let c: BuildDatasetConfig = resolve(
        "build-dataset",
        cfg,
        json!({"input": a.input, "format": a.format, "codec": a.codec, "dtype": a.dtype, "output": a.output, "out": a.out.out}),
    )?;
    start("build-dataset", &c.out, &c)?;
    let texts = read_texts(required(&c.input, "input")?, c.format.as_deref())?;
    let (codec, vocab_size): (Box<dyn TextCodec>, u64) = if c.codec == "words" {
        let words = WordCodec::from_texts(texts.iter().map(String::as_str));
        specs::write_vocab(&c.out.join("vocab.txt"), &words)?;
        let n = words.len() as u64;
        (Box::new(words), n)
    } else if let Some(path) = c.codec.strip_prefix("vocab:") {
        let words = WordCodec::load(Path::new(path))?;
        let n = words.len() as u64;
        (Box::new(words), n)
    } else if c.codec == "bytes" {
        (Box::new(ByteCodec), 256)
    } else {
        return Err(CliError::Usage(format!("unknown codec {:?}; use bytes, words or vocab:PATH", c.codec)));
    };
    let dtype = match &c.dtype {
        Some(s) => s.parse::<DType>()?,
        None => DType::for_vocab(vocab_size),
    };
    let base = c.output.clone().unwrap_or_else(|| c.out.join("dataset"));
    let mut writer = DatasetWriter::create(&base, dtype)?.with_vocab_size(vocab_size);
    let mut tokens = 0u64;
    for t in &texts {
        let doc = codec.encode(t)?;
        tokens += doc.len() as u64;
        writer.push(&doc)?;
    }
    let (bin, idx) = writer.finish()?;
    write_json(
        &c.out.join("summary.json"),
        &json!({"documents": texts.len(), "tokens": tokens, "dtype": dtype.name(), "vocab_size": vocab_size, "bin": bin, "idx": idx}),
    )
}

// ---------------------------------------------------------------- reconstruct

#[derive(Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// First step to dump.
    #[arg(long)]
    step: Option<u64>,
    /// Number of consecutive steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Also write the full sample index (u64 LE context ids).
    #[arg(long)]
    write_index: bool,
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconstructConfig {
    dataset: Option<PathBuf>,
    plan: DataOrderPlan,
    step: u64,
    steps: u64,
    write_index: bool,
    out: PathBuf,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { dataset: None, plan: DataOrderPlan::default(), step: 0, steps: 1, write_index: false, out: default_out() }
    }
}

#[derive(Serialize)]
struct BatchRow {
    step: u64,
    row: u64,
    ordinal: u64,
    context_id: u64,
}

pub fn reconstruct(cfg: Option<&Path>, a: ReconstructArgs) -> Result<()> {
    let c: ReconstructConfig = resolve(
        "reconstruct",
        cfg,
        json!({
            "dataset": a.dataset, "plan": plan_flags(&a.plan), "step": a.step, "steps": a.steps,
            "write_index": a.write_index.then_some(true), "out": a.out.out,
        }),
    )?;
    start("reconstruct", &c.out, &c)?;
    let ds = open_dataset(required(&c.dataset, "dataset")?)?;
    let stream = TrainingStream::new(&ds, &c.plan)?;
    let end = c.step.checked_add(c.steps).filter(|&e| e <= c.plan.train_iters).ok_or_else(|| {
        Error::Contract(format!("steps {}..{}+{} exceed train_iters {}", c.step, c.step, c.steps, c.plan.train_iters))
    })?;
    let bin_path = c.out.join("batches.bin");
    let mut bin = BufWriter::new(File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?);
    let mut rows = Vec::new();
    for step in c.step..end {
        let batch = stream.batch_at(step)?;
        for t in &batch.tokens {
            bin.write_all(&t.to_le_bytes()).map_err(|e| Error::io(&bin_path, e))?;
        }
        for (row, &id) in batch.context_ids.iter().enumerate() {
            let row = row as u64;
            rows.push(BatchRow { step, row, ordinal: step * c.plan.batch_size + row, context_id: id });
        }
    }
    bin.flush().map_err(|e| Error::io(&bin_path, e))?;
    write_csv_records(&c.out.join("batches.csv"), &rows)?;
    if c.write_index {
        stream.index().write_to(&c.out.join("sample_index.bin"))?;
    }
    let contexts = stream.contexts().num_contexts();
    write_json(
        &c.out.join("summary.json"),
        &json!({
            "first_step": c.step, "steps": c.steps, "batch_size": c.plan.batch_size,
            "context_len": c.plan.context_len(), "num_contexts": contexts,
            "epochs_covered": c.plan.epochs_covered(contexts),
            "tokens_seen_at_end": tokens_seen(&c.plan, end),
        }),
    )
}

// ---------------------------------------------------------------- schedule

#[derive(Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleConfig {
    plan: DataOrderPlan,
    out: PathBuf,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { plan: DataOrderPlan::default(), out: default_out() }
    }
}

pub fn schedule(cfg: Option<&Path>, a: ScheduleArgs) -> Result<()> {
    let c: ScheduleConfig = resolve("schedule", cfg, json!({"plan": plan_flags(&a.plan), "out": a.out.out}))?;
    c.plan.validate()?;
    start("schedule", &c.out, &c)?;
    let s = checkpoint_schedule(&c.plan);
    #[derive(Serialize)]
    struct Row {
        step: u64,
        tokens_seen: u64,
    }
    let rows: Vec<Row> = s.steps.iter().map(|&step| Row { step, tokens_seen: tokens_seen(&c.plan, step) }).collect();
    write_csv_records(&c.out.join("schedule.csv"), &rows)?;
    let mut stdout = std::io::stdout().lock();
    for step in &s.steps {
        writeln!(stdout, "{step}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- dedup

#[derive(Args)]
pub struct DedupArgs {
    /// Token corpus to deduplicate (decoded with --codec).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Alternatively, a text file (lines or JSON lines).
    #[arg(long)]
    texts: Option<PathBuf>,
    #[arg(long)]
    codec: Option<String>,
    /// Join LSH candidates only if their exact Jaccard reaches this.
    #[arg(long)]
    verify: Option<f64>,
    /// Write the kept documents of --dataset as a new corpus at this base path.
    #[arg(long)]
    deduped: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DedupConfig {
    dataset: Option<PathBuf>,
    texts: Option<PathBuf>,
    codec: String,
    verify: Option<f64>,
    deduped: Option<PathBuf>,
    out: PathBuf,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self { dataset: None, texts: None, codec: "bytes".into(), verify: None, deduped: None, out: default_out() }
    }
}

pub fn dedup(cfg: Option<&Path>, a: DedupArgs) -> Result<()> {
    let c: DedupConfig = resolve(
        "dedup",
        cfg,
        json!({"dataset": a.dataset, "texts": a.texts, "codec": a.codec, "verify": a.verify, "deduped": a.deduped, "out": a.out.out}),
    )?;
    start("dedup", &c.out, &c)?;
    let (report, weights, ds) = match (&c.dataset, &c.texts) {
        (Some(path), None) => {
            let ds = open_dataset(path)?;
            let codec = specs::codec(&c.codec)?;
            let (shingles, sigs) = sketch_dataset(&ds, codec.as_ref());
            let report = match c.verify {
                Some(t) => lsh_cluster_verified(&sigs, &shingles, t),
                None => lsh_cluster(&sigs),
            };
            let weights: Vec<u64> = ds.documents().map(|d| d.len() as u64).collect();
            (report, weights, Some(ds))
        }
        (None, Some(path)) => {
            let texts = read_texts(path, None)?;
            let (shingles, sigs) = sketch_texts(&texts);
            let report = match c.verify {
                Some(t) => lsh_cluster_verified(&sigs, &shingles, t),
                None => lsh_cluster(&sigs),
            };
            let weights = texts.iter().map(|t| t.split_whitespace().count() as u64).collect();
            (report, weights, None)
        }
        _ => return Err(CliError::Usage("give exactly one of --dataset or --texts".into())),
    };
    #[derive(Serialize)]
    struct Row {
        cluster: usize,
        doc: u64,
        kept: bool,
    }
    let rows: Vec<Row> = report
        .clusters
        .iter()
        .enumerate()
        .flat_map(|(i, docs)| docs.iter().enumerate().map(move |(j, &doc)| Row { cluster: i, doc, kept: j == 0 }))
        .collect();
    write_csv_records(&c.out.join("clusters.csv"), &rows)?;
    if let Some(base) = &c.deduped {
        let ds = ds.as_ref().ok_or_else(|| CliError::Usage("--deduped needs --dataset".into()))?;
        let mut writer = DatasetWriter::create(base, ds.dtype())?;
        if let Some(v) = ds.vocab_size() {
            writer = writer.with_vocab_size(v);
        }
        for &d in &report.kept {
            writer.push(&ds.document(d as usize).to_vec())?;
        }
        writer.finish()?;
    }
    let kept_fraction = report.kept_fraction(|d| weights[d as usize]);
    write_json(
        &c.out.join("summary.json"),
        &json!({
            "num_docs": report.num_docs, "clusters": report.clusters.len(), "kept": report.kept.len(),
            "discarded": report.discarded.len(), "kept_weight_fraction": kept_fraction,
            "weight": if c.dataset.is_some() { "tokens" } else { "words" },
            "threshold_estimate": report.threshold_estimate, "params": report.params,
        }),
    )
}

// ---------------------------------------------------------------- scan-mem

#[derive(Args)]
pub struct ScanMemArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// `lookup:DATASET`, `ngram:N`, `file:PATH` or `constant:TOKEN`.
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    slice_size: Option<usize>,
    /// Scan only the first N training sequences.
    #[arg(long)]
    limit: Option<u64>,
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanMemConfig {
    dataset: Option<PathBuf>,
    oracle: Option<String>,
    plan: DataOrderPlan,
    scan: ScanConfig,
    out: PathBuf,
}

impl Default for ScanMemConfig {
    fn default() -> Self {
        Self { dataset: None, oracle: None, plan: DataOrderPlan::default(), scan: ScanConfig::default(), out: default_out() }
    }
}

pub fn scan_mem(cfg: Option<&Path>, a: ScanMemArgs) -> Result<()> {
    let c: ScanMemConfig = resolve(
        "scan-mem",
        cfg,
        json!({
            "dataset": a.dataset, "oracle": a.oracle, "plan": plan_flags(&a.plan),
            "scan": {"k": a.k, "l": a.l, "slice_size": a.slice_size, "limit": a.limit}, "out": a.out.out,
        }),
    )?;
    start("scan-mem", &c.out, &c)?;
    let ds = open_dataset(required(&c.dataset, "dataset")?)?;
    let stream = TrainingStream::new(&ds, &c.plan)?;
    let oracle = specs::oracle(required(&c.oracle, "oracle")?, c.scan.k, c.scan.l, &ds)?;
    let res = scan(&stream, oracle.as_ref(), &c.scan)?;
    res.write_csv(&c.out.join("records.csv"))?;
    #[derive(Serialize)]
    struct Slice {
        slice: usize,
        start_ordinal: u64,
        sequences: u64,
        count: u64,
    }
    let n = res.records.len() as u64;
    let size = c.scan.slice_size as u64;
    let slices: Vec<Slice> = res
        .slice_counts
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let start = i as u64 * size;
            Slice { slice: i, start_ordinal: start, sequences: size.min(n - start), count }
        })
        .collect();
    write_csv_records(&c.out.join("slices.csv"), &slices)?;
    let fit = (res.full_slices().len() >= 2).then(|| fit(res.full_slices())).transpose()?;
    write_json(
        &c.out.join("summary.json"),
        &json!({
            "sequences": n, "memorized": res.memorized(), "rate": res.rate(), "k": c.scan.k, "l": c.scan.l,
            "slice_size": c.scan.slice_size, "full_slices": res.full_slices().len(), "fit": fit,
        }),
    )
}

// ---------------------------------------------------------------- fit-poisson

#[derive(Args)]
pub struct FitPoissonArgs {
    /// CSV with a `count` column (e.g. slices.csv from scan-mem).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitPoissonConfig {
    input: Option<PathBuf>,
    alpha: f64,
    out: PathBuf,
}

impl Default for FitPoissonConfig {
    fn default() -> Self {
        Self { input: None, alpha: 0.01, out: default_out() }
    }
}

fn read_count_column(path: &Path) -> Result<Vec<u64>> {
    let fmt = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(fmt)?;
    let col = rdr
        .headers()
        .map_err(fmt)?
        .iter()
        .position(|h| h == "count")
        .ok_or_else(|| Error::Format(format!("{}: no `count` column", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(fmt)?;
        let v = rec.get(col).unwrap_or("");
        out.push(v.trim().parse().map_err(|_| Error::Format(format!("{} row {}: bad count {v:?}", path.display(), i + 1)))?);
    }
    Ok(out)
}

pub fn fit_poisson(cfg: Option<&Path>, a: FitPoissonArgs) -> Result<()> {
    let c: FitPoissonConfig =
        resolve("fit-poisson", cfg, json!({"input": a.input, "alpha": a.alpha, "out": a.out.out}))?;
    start("fit-poisson", &c.out, &c)?;
    let counts = read_count_column(required(&c.input, "input")?)?;
    let f = fit(&counts)?;
    let binned: Option<BinnedChiSquare> = chi_square_binned(&counts, f.lambda_hat);
    write_csv_records(&c.out.join("qq.csv"), &f.qq_points)?;
    let summary = json!({
        "n": f.n, "lambda_hat": f.lambda_hat, "dispersion": f.dispersion, "dispersion_index": f.dispersion_index(),
        "df": f.df, "p_value": f.p_value, "alpha": c.alpha, "passes": f.passes(c.alpha), "binned": binned,
    });
    write_json(&c.out.join("fit.json"), &summary)?;
    println!("p_value={} passes={}", f.p_value, f.passes(c.alpha));
    Ok(())
}

// ---------------------------------------------------------------- count-freq

#[derive(Args)]
pub struct CountFreqArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    codec: Option<String>,
    /// JSON array of term specs.
    #[arg(long)]
    terms: Option<PathBuf>,
    /// Checkpoint steps to report; every checkpoint by default.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<u64>>,
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountFreqConfig {
    dataset: Option<PathBuf>,
    codec: String,
    terms: Option<PathBuf>,
    steps: Option<Vec<u64>>,
    plan: DataOrderPlan,
    out: PathBuf,
}

impl Default for CountFreqConfig {
    fn default() -> Self {
        Self { dataset: None, codec: "bytes".into(), terms: None, steps: None, plan: DataOrderPlan::default(), out: default_out() }
    }
}

pub fn count_freq(cfg: Option<&Path>, a: CountFreqArgs) -> Result<()> {
    let c: CountFreqConfig = resolve(
        "count-freq",
        cfg,
        json!({
            "dataset": a.dataset, "codec": a.codec, "terms": a.terms, "steps": a.steps,
            "plan": plan_flags(&a.plan), "out": a.out.out,
        }),
    )?;
    start("count-freq", &c.out, &c)?;
    let ds = open_dataset(required(&c.dataset, "dataset")?)?;
    let codec = specs::codec(&c.codec)?;
    let terms = load_terms(required(&c.terms, "terms")?)?;
    let stream = TrainingStream::new(&ds, &c.plan)?;
    let steps = c.steps.clone().unwrap_or_else(|| checkpoint_schedule(&c.plan).steps);
    let by_step = count_at_steps(&stream, codec.as_ref(), &terms, &steps)?;
    let labels: Vec<String> = terms.iter().map(|t| t.label()).collect();
    let rows: Vec<CountRecord> = by_step
        .iter()
        .flat_map(|sc| {
            labels.iter().zip(&sc.counts).map(|(term, &count)| CountRecord { term: term.clone(), step: sc.step, count })
        })
        .collect();
    write_csv_records(&c.out.join("counts.csv"), &rows)?;
    Ok(())
}

// ---------------------------------------------------------------- gap-report

#[derive(Args)]
pub struct GapReportArgs {
    /// counts.csv (term,step,count).
    #[arg(long)]
    counts: Option<PathBuf>,
    /// accuracy.csv (term,accuracy,shots).
    #[arg(long)]
    accuracy: Option<PathBuf>,
    /// Checkpoint to report; the largest step in the counts by default.
    #[arg(long)]
    step: Option<u64>,
    #[arg(long)]
    shots: Option<u32>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GapReportConfig {
    counts: Option<PathBuf>,
    accuracy: Option<PathBuf>,
    step: Option<u64>,
    shots: u32,
    out: PathBuf,
}

impl Default for GapReportConfig {
    fn default() -> Self {
        Self { counts: None, accuracy: None, step: None, shots: 0, out: default_out() }
    }
}

pub fn gap_report(cfg: Option<&Path>, a: GapReportArgs) -> Result<()> {
    let c: GapReportConfig = resolve(
        "gap-report",
        cfg,
        json!({"counts": a.counts, "accuracy": a.accuracy, "step": a.step, "shots": a.shots, "out": a.out.out}),
    )?;
    start("gap-report", &c.out, &c)?;
    let counts = load_counts(required(&c.counts, "counts")?)?;
    let accuracy = load_accuracy(required(&c.accuracy, "accuracy")?)?;
    let step = match c.step {
        Some(s) => s,
        None => counts.iter().map(|r| r.step).max().ok_or_else(|| Error::Input("counts file is empty".into()))?,
    };
    let report = FrequencyReport::build(step, c.shots, &counts, &accuracy)?;
    write_json(&c.out.join("report.json"), &report)?;
    write_csv_records(&c.out.join("bins.csv"), &report.bins)?;
    println!("delta={}", report.gap.delta);
    Ok(())
}

// ---------------------------------------------------------------- swap-pronouns

#[derive(Args)]
pub struct SwapPronounsArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    codec: Option<String>,
    /// Share of training steps, from the end, to rewrite.
    #[arg(long)]
    fraction: Option<f64>,
    /// `text` (detokenize and retokenize) or `token` (one-for-one id swap).
    #[arg(long)]
    mode: Option<InterventionMode>,
    /// Output corpus base path; defaults to `<out>/counterfactual`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    dtype: Option<String>,
    #[command(flatten)]
    plan: PlanArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwapPronounsConfig {
    dataset: Option<PathBuf>,
    codec: String,
    intervention: InterventionPlan,
    output: Option<PathBuf>,
    dtype: Option<String>,
    plan: DataOrderPlan,
    out: PathBuf,
}

impl Default for SwapPronounsConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            codec: "bytes".into(),
            intervention: InterventionPlan { fraction: 0.07, mode: InterventionMode::Text },
            output: None,
            dtype: None,
            plan: DataOrderPlan::default(),
            out: default_out(),
        }
    }
}

pub fn swap_pronouns(cfg: Option<&Path>, a: SwapPronounsArgs) -> Result<()> {
    let c: SwapPronounsConfig = resolve(
        "swap-pronouns",
        cfg,
        json!({
            "dataset": a.dataset, "codec": a.codec, "intervention": {"fraction": a.fraction, "mode": a.mode},
            "output": a.output, "dtype": a.dtype, "plan": plan_flags(&a.plan), "out": a.out.out,
        }),
    )?;
    start("swap-pronouns", &c.out, &c)?;
    let ds = open_dataset(required(&c.dataset, "dataset")?)?;
    let codec = specs::codec(&c.codec)?;
    let stream = TrainingStream::new(&ds, &c.plan)?;
    let dtype = match &c.dtype {
        Some(s) => s.parse::<DType>()?,
        None => ds.dtype(),
    };
    let base = c.output.clone().unwrap_or_else(|| c.out.join("counterfactual"));
    let manifest = pvk_core::apply_intervention(&stream, &c.intervention, &PronounMap::default(), codec.as_ref(), &base, dtype)?;
    write_json(&c.out.join("manifest.json"), &manifest)
}

// ---------------------------------------------------------------- score-bias

#[derive(Args)]
pub struct ScoreBiasArgs {
    /// CSV with columns id,value_stereo,value_anti,metric.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreBiasConfig {
    input: Option<PathBuf>,
    out: PathBuf,
}

impl Default for ScoreBiasConfig {
    fn default() -> Self {
        Self { input: None, out: default_out() }
    }
}

pub fn score_bias(cfg: Option<&Path>, a: ScoreBiasArgs) -> Result<()> {
    let c: ScoreBiasConfig = resolve("score-bias", cfg, json!({"input": a.input, "out": a.out.out}))?;
    start("score-bias", &c.out, &c)?;
    let rows = bias::load_bias_rows(required(&c.input, "input")?)?;
    let scores = bias::score_rows(&rows)?;
    let named: BTreeMap<String, &bias::BiasScore> = scores
        .iter()
        .map(|(m, s)| (serde_json::to_value(m).unwrap().as_str().unwrap().to_string(), s))
        .collect();
    write_json(&c.out.join("scores.json"), &named)?;
    for (m, s) in &named {
        println!("{m}={}", s.score);
    }
    Ok(())
}
