use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file or record did not match its declared layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("token {token} in document {doc} does not fit in {dtype}")]
    TokenOverflow { token: u64, doc: usize, dtype: &'static str },

    #[error("configuration error: {0}")]
    Config(String),

    /// A caller or plug-in broke an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unsupported corpus: {0}")]
    UnsupportedCorpus(String),
}

/// Coarse error class, used by the command line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Format,
    Contract,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Format(_) | Error::TokenOverflow { .. } => ErrorClass::Format,
            Error::Config(_)
            | Error::Contract(_)
            | Error::Input(_)
            | Error::UnsupportedCorpus(_) => ErrorClass::Contract,
        }
    }
}
