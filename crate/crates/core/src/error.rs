use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} of size {size}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid label scheme: {0}")]
    Scheme(String),

    #[error("unknown label class {0:?}")]
    UnknownLabel(String),

    #[error("chunk capacity {capacity} too small (overlap {overlap})")]
    CapacityTooSmall { capacity: usize, overlap: usize },

    #[error("invalid overlap policy: {0}")]
    Policy(String),

    #[error("malformed chunk {chunk}: {detail}")]
    MalformedChunk { chunk: usize, detail: String },

    #[error("document {doc}: record {record}: {detail}")]
    Validation {
        doc: String,
        record: usize,
        detail: String,
    },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("invalid template: {0}")]
    Template(String),

    #[error("documents differ: {0}")]
    TextMismatch(String),

    #[error("missing gold view: {0}")]
    MissingGold(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
