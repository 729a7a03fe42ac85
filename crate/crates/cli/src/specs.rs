//! String forms for codecs and continuation oracles.

use std::path::{Path, PathBuf};

use pvk_core::memorization::{ConstantOracle, ContinuationOracle, FileOracle, LookupOracle, NgramOracle};
use pvk_core::{ByteCodec, Error, TextCodec, TokenDataset, WordCodec};

use crate::CliError;

/// `bytes` or `vocab:PATH` (one word per line, id = line number).
pub fn codec(spec: &str) -> Result<Box<dyn TextCodec>, CliError> {
    match spec.split_once(':') {
        None if spec == "bytes" => Ok(Box::new(ByteCodec)),
        Some(("vocab", path)) => Ok(Box::new(WordCodec::load(Path::new(path))?)),
        _ => Err(CliError::Usage(format!("unknown codec {spec:?}; use bytes or vocab:PATH"))),
    }
}

pub fn write_vocab(path: &Path, codec: &WordCodec) -> Result<(), CliError> {
    let mut text = codec.words().join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `lookup:DATASET`, `ngram:N`, `file:PATH` or `constant:TOKEN`.
///
/// `lookup` memorizes every document of DATASET that is longer than `k`.
/// `ngram` is trained on the documents of the corpus being scanned.
pub fn oracle(spec: &str, k: usize, l: usize, corpus: &TokenDataset) -> Result<Box<dyn ContinuationOracle>, CliError> {
    let bad = || CliError::Usage(format!("unknown oracle {spec:?}; use lookup:DATASET, ngram:N, file:PATH or constant:TOKEN"));
    let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
    Ok(match kind {
        "lookup" => {
            let ds = TokenDataset::open(&PathBuf::from(arg))?;
            let strings: Vec<Vec<u32>> = ds.documents().filter(|d| d.len() > k).map(|d| d.to_vec()).collect();
            Box::new(LookupOracle::new(k, strings)?)
        }
        "ngram" => {
            let n: usize = arg.parse().map_err(|_| bad())?;
            Box::new(NgramOracle::new(n, corpus.documents().map(|d| d.to_vec()))?)
        }
        "file" => Box::new(FileOracle::load(Path::new(arg), l)?),
        "constant" => Box::new(ConstantOracle(arg.parse().map_err(|_| bad())?)),
        _ => return Err(bad()),
    })
}
