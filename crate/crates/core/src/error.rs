use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateSixD(&'static str),
    #[error("zero-length vector")]
    ZeroVector,

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported channel layout for joint `{joint}`: {channels}")]
    UnsupportedChannel { joint: String, channels: String },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("clip is missing its {0} cache")]
    MissingCache(&'static str),
    #[error("too short: {0}")]
    TooShort(String),
    #[error("skeleton has no joint named `{0}`")]
    MissingFootJoint(String),
    #[error("left/right pairing table incomplete: {0}")]
    IncompletePairing(String),
    #[error("invalid synthetic style spec: {0}")]
    InvalidSpec(String),

    #[error("embedding dimension {0} must be even")]
    OddDimension(usize),
    #[error("unknown style id {id} (table has {count} rows)")]
    UnknownStyle { id: usize, count: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("guidance too short: {0}")]
    GuidanceTooShort(String),

    #[error("empty trajectory sequence")]
    EmptySequence,
    #[error("trajectory has zero displacement")]
    ZeroDisplacement,
    #[error("need at least 3 candidates with 3 distinct durations, got {0}")]
    TooFewCandidates(usize),

    #[error("length mismatch: {0} vs {1} frames")]
    LengthMismatch(usize, usize),

    #[error("container format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
