//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot normalize a zero-norm vector")]
    ZeroNorm,
    #[error("zero pre-normalization activation in row {row}")]
    ZeroActivation { row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("class id {id} out of range (n_clusters = {n})")]
    InvalidClass { id: usize, n: usize },
    #[error(
        "clustering produced no clusters (eps = {eps}, min_pts = {min_pts}); try a larger eps or a smaller min_pts"
    )]
    NoClusters { eps: f64, min_pts: usize },
    #[error("need {needed} clusters for a P x K batch, found {found}")]
    NotEnoughClusters { needed: usize, found: usize },
    #[error("query {query} has no matching identity in the gallery")]
    NoGalleryMatch { query: usize },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid dimension in header: {0}")]
    BadDim(u32),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
