use thiserror::Error;

/// Errors raised by the analysis and modelling routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("invalid length {got}: {reason}")]
    InvalidLength { got: usize, reason: &'static str },
    #[error("smoothing width must be odd and >= 1, got {0}")]
    InvalidWidth(usize),
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("segment has {got} samples, expected {expected}")]
    InvalidSegment { got: usize, expected: usize },
    #[error("region [{start}, {end}) too short: need at least {needed} samples")]
    RegionTooShort { start: usize, end: usize, needed: usize },
    #[error("region [{start}, {end}) outside a signal of {len} samples")]
    RegionOutOfBounds { start: usize, end: usize, len: usize },
    #[error("cannot normalize a matrix with {0} frames")]
    Unnormalizable(usize),
    #[error("frame grids differ: {left} vs {right} frames")]
    FrameGridMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("layout {layout} does not allow {dims} dimensions")]
    LayoutMismatch { layout: &'static str, dims: usize },
    #[error("class {0} has no data")]
    MissingClass(String),
    #[error("label {label} out of range 0..{classes}")]
    InvalidLabel { label: usize, classes: usize },
    #[error("frame {0} is undecodable (all states -inf)")]
    UndecodableFrame(usize),
    #[error("empty utterance")]
    EmptyUtterance,
    #[error("need at least 2 speakers, got {0}")]
    InsufficientSpeakers(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
