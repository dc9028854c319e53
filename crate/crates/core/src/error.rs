use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while decoding an RFC bank.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("hot code has {hot} set bits but packed lanes hold {packed} non-zero values")]
    PopcountMismatch { hot: u32, packed: u32 },
    #[error("packed lane {lane} violates the high-end gather layout")]
    MisplacedLane { lane: usize },
    #[error("packed lane {lane} holds non-positive value {raw} after ReLU encoding")]
    NonPositive { lane: usize, raw: i16 },
    #[error("mini-bank-hot code {found:04b} does not match {expected:04b} for popcount {popcount}")]
    MbhotMismatch { expected: u8, found: u8, popcount: u32 },
}

/// A write into a mini-bank whose depth is exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("mini-bank {minibank} overflowed at line {line} (depth {depth})")]
pub struct OverflowError {
    /// 1-based mini-bank index, head first.
    pub minibank: usize,
    pub line: usize,
    pub depth: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("value {value} out of range for {what}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("cavity pattern `{name}` is unbalanced: tap rows kept between {min} and {max} times")]
    BalanceViolation { name: String, min: usize, max: usize },
    #[error("cavity pattern `{name}` keeps no taps in kernel phase {phase}")]
    DegeneratePattern { name: String, phase: usize },
    #[error("unknown cavity pattern `{0}`")]
    UnknownPattern(String),
    #[error("mask inconsistency in block {block}: {reason}")]
    Mask { block: usize, reason: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Overflow(#[from] OverflowError),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    /// Attaches a block index to a mask error raised without one.
    pub(crate) fn in_block(self, block: usize) -> Self {
        match self {
            Error::Mask { reason, .. } => Error::Mask { block, reason },
            other => other,
        }
    }
}

pub(crate) fn ensure_dims(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dims(context, expected, found))
    }
}
