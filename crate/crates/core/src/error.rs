use thiserror::Error;

/// Errors produced by the signal, DSP and classification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no sync events")]
    NoSyncEvents,
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data at byte offset {offset}: {reason}")]
    Corruption { offset: u64, reason: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("spec error: {0}")]
    Spec(String),
    #[error("cutoff {cutoff} Hz violates the Nyquist limit fs/2 = {nyquist} Hz")]
    Nyquist { cutoff: f64, nyquist: f64 },
    #[error("degenerate labels")]
    DegenerateLabels,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sampling rate mismatch: {expected} Hz vs {got} Hz")]
    SamplingRateMismatch { expected: f64, got: f64 },
    #[error("matrix is not symmetric positive-definite")]
    NotSpd,
    #[error("rank-deficient reference matrix")]
    RankDeficient,
    #[error("zero variance input")]
    ZeroVariance,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
