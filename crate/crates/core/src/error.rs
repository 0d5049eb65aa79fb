use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("prediction order {order} must be smaller than the frame length {len}")]
    OrderTooHigh { order: usize, len: usize },
    #[error("degenerate frame: zero-lag autocorrelation is not positive")]
    DegenerateFrame,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unstable all-pole filter")]
    UnstableFilter,
    #[error("frame of {len} samples does not fit a {size}-point DFT")]
    FrameTooLong { len: usize, size: usize },
    #[error("line spectral root search found {found} roots, expected {expected}")]
    RootCountError { found: usize, expected: usize },
    #[error("line spectral frequencies are not strictly increasing inside (0, pi)")]
    NotOrdered,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("unknown phone symbol {0:?}")]
    UnknownPhone(String),
    #[error("model was trained with analysis fingerprint {model}, current configuration is {current}")]
    ConfigMismatch { model: String, current: String },
    #[error("bad filter bank geometry: {0}")]
    BadGeometry(String),
    #[error("unsupported audio format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("TM and AM frame counts differ too much ({tm} vs {am})")]
    AlignmentError { tm: usize, am: usize },
    #[error("phone labels required but missing for: {}", .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error("the test split is empty")]
    NoTestData,
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
