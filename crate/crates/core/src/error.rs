use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NotFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("bad magic in {}", .0.display())]
    BadMagic(PathBuf),

    #[error("cannot parse header of {}: {reason}", path.display())]
    HeaderParse { path: PathBuf, reason: String },

    #[error("truncated payload in {}: expected {expected} bytes, found {found}", path.display())]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("normals are not unit length at pixel ({row}, {col}): norm {norm}")]
    NonUnitNormals { row: usize, col: usize, norm: f64 },

    #[error("patch side {side} exceeds image {height}x{width}")]
    SideTooLarge { side: usize, height: usize, width: usize },

    #[error("object {0} is not assigned to train or test")]
    UnassignedObject(String),

    #[error("object {0} appears in both train and test sets")]
    OverlappingSets(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("png error in {}: {reason}", path.display())]
    Png { path: PathBuf, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
