use std::path::PathBuf;

use thiserror::Error;

/// (layers, dim) pair used in error messages.
pub type Shape = (usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left:?} vs {right:?} (layers, dim)")]
    Dimension { left: Shape, right: Shape },

    #[error("invalid shape: data length {len} does not equal {layers}x{dim}")]
    Shape { layers: usize, dim: usize, len: usize },

    #[error("non-finite value at layer {layer}, index {index}")]
    NonFinite { layer: usize, index: usize },

    #[error("empty class: {0}")]
    EmptyClass(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 8], found: [u8; 8] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated file: {0}")]
    Truncated(&'static str),

    #[error("trailing data: {0} unexpected bytes after payload")]
    TrailingData(u64),

    #[error("invalid metadata: {0}")]
    Metadata(String),

    #[error("invalid centroid pair: {0}")]
    InvalidCentroids(String),

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error(
        "dimension disagreement: record {first:?} has {first_shape:?}, record {second:?} has {second_shape:?}"
    )]
    DimensionDisagreement {
        first: String,
        first_shape: Shape,
        second: String,
        second_shape: Shape,
    },

    #[error("manifest {path}:{line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("too few points for projection: need at least 3, got {0}")]
    TooFewPoints(usize),

    #[error("zero variance in layer {0}; projection is degenerate")]
    DegenerateVariance(usize),

    #[error("projection needs at least 2 dimensions, got {0}")]
    ProjectionDim(usize),

    #[error("layer {layer} out of range 1..={layers}")]
    LayerOutOfRange { layer: usize, layers: usize },

    #[error("candidate {0:?} has no rerank score")]
    MissingScore(String),

    #[error("plot data parse error: {0}")]
    PlotParse(String),

    #[error("{path}: {source}")]
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

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
