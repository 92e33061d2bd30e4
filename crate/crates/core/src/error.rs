use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by tensor operations and network modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("channel mismatch: expected {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("kernel parity: kernel size {0} is not odd")]
    KernelParity(usize),

    #[error("divisibility: {op} needs {what} divisible by {factor}, got {value}")]
    Divisibility {
        op: &'static str,
        what: &'static str,
        value: usize,
        factor: usize,
    },

    #[error("psa divisibility: factor {factor} does not divide {height}x{width}")]
    PsaDivisibility {
        factor: usize,
        height: usize,
        width: usize,
    },

    #[error("channel grid: {channels} channels is not {grid}x{grid}")]
    ChannelGrid { channels: usize, grid: usize },

    #[error("channel grid: factor {factor} does not divide grid side {grid}")]
    GridFactor { factor: usize, grid: usize },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument to {op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("loss batch is empty")]
    EmptyBatch,

    #[error("divisibility: input size {height}x{width} rejected at level {level}: {reason}")]
    Precondition {
        level: usize,
        height: usize,
        width: usize,
        reason: String,
    },

    #[error(transparent)]
    Weights(#[from] WeightError),

    #[error(transparent)]
    Image(#[from] ImageError),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}

/// Failures reading, writing or binding a weight file.
///
/// Every variant carries a stable numeric [`code`](WeightError::code).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("bad magic: expected \"G2HF\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("version mismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("malformed entry: {0}")]
    Malformed(String),

    #[error("unknown parameter name: {0}")]
    UnknownName(String),

    #[error("missing parameter: {0}")]
    MissingName(String),

    #[error("shape mismatch for {name}: model expects {expected:?}, file has {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("i/o error on {path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

impl WeightError {
    /// Stable error code; documented in the README.
    pub fn code(&self) -> u32 {
        match self {
            WeightError::BadMagic(_) => 10,
            WeightError::VersionMismatch { .. } => 11,
            WeightError::Truncated(_) => 12,
            WeightError::Malformed(_) => 13,
            WeightError::UnknownName(_) => 14,
            WeightError::MissingName(_) => 15,
            WeightError::ShapeMismatch { .. } => 16,
            WeightError::Io { .. } => 17,
        }
    }
}

/// Failures reading or writing binary PGM/PPM files.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("malformed image: {0}")]
    Malformed(String),

    #[error("unsupported image: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {msg}")]
    Io { path: PathBuf, msg: String },
}
