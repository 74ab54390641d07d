use thiserror::Error;

/// Crate-wide error type. Variants are grouped by what the caller can do
/// about them: `Config` means the requested run is ill-formed, everything
/// else means the inputs (files, samples, alignments) are bad.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("validation: {0}")]
    Validation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no active samples: every training sample has zero cost")]
    NoActiveSamples,

    #[error("dataset must contain at least one positive and one negative bag")]
    SingleClassDataset,

    #[error("dense oracle limited to {limit} samples, got {n}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("misaligned inputs: {0}")]
    Alignment(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Error {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Validation(format!("csv: {other:?}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
