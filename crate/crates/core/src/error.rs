use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] uem_autodiff::Error),
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"SCUB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported .scube version {0}")]
    VersionMismatch(u8),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("wavelengths must be strictly ascending (row {row})")]
    NonAscending { row: usize },
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("negative response weight {value} at channel {channel}, band {band}")]
    ConstraintViolation {
        channel: usize,
        band: usize,
        value: f64,
    },
    #[error("band mismatch: {0} vs {1}")]
    BandMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown encoder variant {0:?}")]
    UnknownVariant(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("image encoding: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
