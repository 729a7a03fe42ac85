//! (k, ℓ)-memorization scans over the training stream and a Poisson
//! point-process fit of where memorized sequences occur.

pub mod oracle;
pub mod poisson;
mod scan;

pub use oracle::{
    ConstantOracle, ContinuationOracle, FileOracle, LookupOracle, NgramOracle, Prompt, SequentialOracle, Serialized,
};
pub use poisson::{chi_square_binned, fit_poisson, poisson_cdf, poisson_quantile, qq_points, BinnedChiSquare, PoissonFit, QqPoint};
pub use scan::{scan, MatchRecord, MemorizationScan, ScanConfig, ScanSummary, EVAL_WINDOW};
