use std::path::PathBuf;

/// Errors raised by trellis construction, simulation, decoding and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid trellis specification: {0}")]
    InvalidTrellis(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("degenerate lattice at step {step}: {reason}")]
    DegenerateLattice { step: usize, reason: &'static str },
    #[error("enumeration over {steps} steps exceeds the bound of {max}")]
    EnumerationTooLarge { steps: usize, max: usize },
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("model file version mismatch: expected {expected}, found {found}")]
    ModelVersion { expected: u32, found: u32 },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error("model dimension mismatch: {0}")]
    ModelDimension(String),
    #[error("curve '{0}' does not bracket the target BER")]
    NotBracketed(String),
    #[error("missing model for decoder {0}")]
    MissingModel(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
