use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while decoding a stroke bitstream.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic: expected \"VSKC\", found {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported bitstream version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("truncated bitstream: missing {field}")]
    Truncated { field: String },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),
    /// Weights, shapes or configuration do not fit together.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value in {block}: {detail}")]
    NonFinite { block: String, detail: String },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    /// A required weights file is unset or absent.
    #[error("missing weights: {0}")]
    MissingWeights(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
