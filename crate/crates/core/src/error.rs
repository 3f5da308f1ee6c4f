use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parameter vector has {actual} entries, architecture {arch} needs {expected}")]
    ParamCount {
        arch: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("length mismatch: {what} has {actual} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("stream exhausted after {served} points")]
    Exhausted { served: usize },

    #[error("act called for batch {got}, but the pending batch is {pending:?}")]
    StaleBatch { got: u64, pending: Option<u64> },

    #[error("label present for rejected index {index}")]
    LabelForRejected { index: usize },

    #[error("label missing for accepted index {index}")]
    MissingLabel { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rejection sampler gave up after {0} draws")]
    SamplerExhausted(usize),

    #[error("{path}: parse error at row {row}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("{path}: schema mismatch: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("{path}: bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    IdxMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
