use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("{op} needs at least {needed} rows, got {got}")]
    SequenceTooShort {
        op: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("computation is not deterministic: two forward passes gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("degenerate context vector norm {0:e} under strict length adjustment")]
    DegenerateNorm(f64),

    #[error("vocabulary is empty after applying min_count")]
    EmptyVocabulary,

    #[error("no eligible negative sentences outside document {0}")]
    NoEligibleNegatives(usize),

    #[error("document with {sentences} sentences has no valid context targets for k={k}")]
    NoValidTargets { sentences: usize, k: usize },

    #[error("target index {t} out of range [{lo}, {hi}]")]
    TargetOutOfRange { t: usize, lo: usize, hi: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("only one class present in training labels")]
    SingleClass,

    #[error("bad magic: not a checkpoint file")]
    BadMagic,

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated checkpoint: {0}")]
    Truncated(String),

    #[error("malformed checkpoint: {0}")]
    Malformed(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("sentence {index}: {source}")]
    InSentence {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
