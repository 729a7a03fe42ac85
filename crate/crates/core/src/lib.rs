//! Training-data provenance toolkit.
//!
//! Rebuilds the exact sequence of training batches a language model saw from
//! a token corpus, a seed and the run's batch geometry, then runs analyses
//! over that ordered stream: near-duplicate detection, (k, ℓ)-memorization
//! scans with a Poisson point-process fit, term-frequency counts per
//! checkpoint, a pronoun-swap intervention on the tail of training, and
//! gender-bias scoring.

pub mod bias;
pub mod codec;
pub mod dataloader;
pub mod dataset;
pub mod dedup;
pub mod error;
pub mod intervention;
pub mod memorization;
pub mod rng;
pub mod term_frequency;
pub mod text;
pub mod union_find;

pub use codec::{ByteCodec, TextCodec, WordCodec};
pub use dataloader::{
    batch_at, build_sample_index, checkpoint_schedule, tokens_seen, Batch, CheckpointSchedule, ContextStream,
    DataOrderPlan, SampleIndex, TrainingStream,
};
pub use dataset::{write_dataset, DType, DatasetWriter, Document, TokenDataset};
pub use dedup::{lsh_cluster, minhash, shingle, DedupReport, MinHashSignature};
pub use error::{Error, ErrorClass, Result};
pub use intervention::{apply_intervention, swap_pronouns_text, InterventionManifest, InterventionMode, InterventionPlan, PronounMap};
pub use memorization::{fit_poisson, qq_points, scan, ContinuationOracle, MemorizationScan, PoissonFit, ScanConfig};
pub use term_frequency::{binned_accuracy, count_up_to, performance_gap, FrequencyReport, TermSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
