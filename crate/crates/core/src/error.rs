use std::fmt;

use crate::data::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong while decoding an embedding file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    UnsupportedVersion(u32),
    BadStage(u8),
    Truncated { needed: usize, available: usize },
    TrailingBytes(usize),
    InvalidLabel(i64),
    NonFinite,
    Header(String),
    Row(String),
}

impl fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatErrorKind::BadMagic => write!(f, "bad magic"),
            FormatErrorKind::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
            FormatErrorKind::BadStage(s) => write!(f, "bad stage byte {s}"),
            FormatErrorKind::Truncated { needed, available } => {
                write!(f, "truncated: needed {needed} bytes, {available} available")
            }
            FormatErrorKind::TrailingBytes(n) => write!(f, "{n} trailing bytes after payload"),
            FormatErrorKind::InvalidLabel(l) => write!(f, "invalid label {l}"),
            FormatErrorKind::NonFinite => write!(f, "non-finite feature value"),
            FormatErrorKind::Header(msg) => write!(f, "bad header: {msg}"),
            FormatErrorKind::Row(msg) => write!(f, "bad row: {msg}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector has no direction under cosine distance")]
    ZeroVector,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("parse error at byte offset {offset}: {kind}")]
    Format {
        offset: usize,
        kind: FormatErrorKind,
    },

    #[error("granular ball needs at least one member")]
    EmptyBall,

    #[error("cannot split a ball whose members all carry label {0}")]
    SingleLabelSplit(Label),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class {0} has no samples or sub-centroids")]
    EmptyClass(Label),

    #[error("no decision boundaries available")]
    NoBoundaries,

    #[error("label {label} outside the valid range 1..={max}")]
    LabelOutOfRange { label: Label, max: Label },

    #[error("length mismatch: {left} predictions vs {right} gold labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("clustering exceeded its iteration cap of {0} splits")]
    IterationCap(usize),

    #[error("unknown synthetic generator '{0}'")]
    UnknownGenerator(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(offset: usize, kind: FormatErrorKind) -> Self {
        Error::Format { offset, kind }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
