use std::path::PathBuf;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),

    #[error("attribute {attribute:?} has no value {value:?}")]
    UnknownAttributeValue { attribute: String, value: String },

    #[error("no records match the constraints")]
    NoMatches,

    #[error("unknown session {0:?}")]
    UnknownSession(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("session is {0}")]
    Conflict(String),

    #[error("feedback was for iteration {sent} but the session is at iteration {current}")]
    StaleIteration { sent: usize, current: usize },

    #[error("ids not in the current batch: {0:?}")]
    NotInBatch(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {0:?}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("corrupt session store: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Engine(relfeed::Error),
}

impl From<relfeed::Error> for ServiceError {
    fn from(e: relfeed::Error) -> Self {
        use relfeed::Error as E;
        match e {
            E::UnknownAttribute(a) => ServiceError::UnknownAttribute(a),
            E::UnknownAttributeValue { attribute, value, .. } => ServiceError::UnknownAttributeValue { attribute, value },
            E::NoMatches => ServiceError::NoMatches,
            E::SessionClosed(s) => ServiceError::Conflict(s.to_string()),
            E::NotInBatch(ids) => ServiceError::NotInBatch(ids),
            E::InvalidConfig(m) => ServiceError::BadRequest(m),
            other => ServiceError::Engine(other),
        }
    }
}
