use std::path::PathBuf;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("user {user}: item {item} appears in both {first} and {second}")]
    SplitOverlap {
        user: usize,
        item: usize,
        first: &'static str,
        second: &'static str,
    },

    #[error("cold-start user {user} also appears in the {split} split")]
    ColdStartLeak { user: usize, split: &'static str },

    #[error("user ids are not dense: user {0} has no interactions in any split")]
    NonDenseUsers(usize),

    #[error("relation {relation} ≥ {limit}")]
    RelationOutOfRange { relation: usize, limit: usize },

    #[error("entity {entity} ≥ declared entity count {limit}")]
    EntityOutOfRange { entity: usize, limit: usize },

    #[error("item {item} ≥ item count {limit}")]
    ItemOutOfRange { item: usize, limit: usize },

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: String,
        expected: String,
        found: String,
    },

    #[error("embedding dim mismatch: file has dim {found}, model has dim {expected}")]
    DimMismatch { expected: usize, found: usize },

    #[error("non-finite gradient in tensor {0}")]
    NonFinite(String),

    #[error("{kind} {id} missing from embedding file")]
    MissingId { kind: &'static str, id: usize },

    #[error("duplicate {kind} id {id} in embedding file")]
    DuplicateId { kind: &'static str, id: usize },

    #[error("split absent: {0}")]
    SplitAbsent(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
