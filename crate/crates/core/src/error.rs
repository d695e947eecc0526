use std::path::PathBuf;

use thiserror::Error;

use crate::scene::ObjectId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid push command: {0}")]
    InvalidPush(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("could not place object {placed} of {requested} after {attempts} attempts")]
    PlacementFailed {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("object {0:?} is not present in the scene")]
    MissingObject(ObjectId),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("non-finite value in layer {layer} ({kind})")]
    NonFinite { layer: usize, kind: &'static str },

    #[error("input shape mismatch: expected {expected} values, got {found}")]
    InputShape { expected: usize, found: usize },

    #[error("dataset must contain both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("bad magic bytes, not a {0} file")]
    Magic(&'static str),

    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("{policy} policy requires a network model")]
    MissingModel { policy: String },

    #[error("i/o error on {path} at offset {offset}: {source}")]
    Io {
        path: PathBuf,
        offset: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, offset: u64, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            offset,
            source,
        }
    }
}
