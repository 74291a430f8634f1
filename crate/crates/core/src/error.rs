use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("duplicate record id {id:?} at index {index}")]
    DuplicateId { id: String, index: usize },

    #[error("view {view:?}: {rows} rows but corpus has {records} records")]
    RowCountMismatch {
        view: String,
        rows: usize,
        records: usize,
    },

    #[error("view {view:?}: non-finite value at record {index}")]
    NonFinite { view: String, index: usize },

    #[error("record {index}: attribute {attribute:?} has unknown value {value:?}")]
    UnknownAttributeValue {
        index: usize,
        attribute: String,
        value: String,
    },

    #[error("record {index}: missing attribute {attribute:?}")]
    MissingAttribute { index: usize, attribute: String },

    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),

    #[error("unknown view {0:?}")]
    UnknownView(String),

    #[error("unknown record id {0:?}")]
    UnknownId(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("batch too small: need at least {need_similar} similar and {need_dissimilar} dissimilar, got {similar} and {dissimilar}")]
    BatchTooSmall {
        similar: usize,
        dissimilar: usize,
        need_similar: usize,
        need_dissimilar: usize,
    },

    #[error("no records match the constraints")]
    NoMatches,

    #[error("session is {0}, not active")]
    SessionClosed(&'static str),

    #[error("ids not in the current batch: {0:?}")]
    NotInBatch(Vec<String>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed embedding file {path:?}: {reason}")]
    BadEmbeddingFile { path: PathBuf, reason: String },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
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
