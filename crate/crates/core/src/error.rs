use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// Variants split into three broad families that the CLI maps onto exit
/// codes: usage mistakes (`Usage`), malformed or inconsistent input data,
/// and numerical failures (`RankExceeded`, `DegenerateData`,
/// `SingularCovariance`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}{}: {message}", line.map(|l| format!(", line {l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },

    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("duplicate image id `{0}`")]
    DuplicateId(String),

    #[error("geometry mismatch in {context}: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    GeometryMismatch {
        context: String,
        expected_rows: u32,
        expected_cols: u32,
        found_rows: u32,
        found_cols: u32,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("gaze timestamps not strictly increasing at sample {index}")]
    NonMonotonicTimestamps { index: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("attention weights undefined: all map entries are zero")]
    AllZeroMap,

    #[error("requested {requested} components but only {available} are available")]
    RankExceeded { requested: usize, available: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("singular covariance matrix (inversion failed)")]
    SingularCovariance,

    #[error("class `{label}` has {size} samples, need at least {required}")]
    ClassTooSmall {
        label: String,
        size: usize,
        required: usize,
    },

    #[error("unknown class label `{0}`")]
    UnknownLabel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("experiment cell {label} failed: {source}")]
    Cell {
        label: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (rank, degeneracy, singularity)
    /// as opposed to malformed input data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankExceeded { .. }
            | Error::DegenerateData(_)
            | Error::SingularCovariance => true,
            Error::Cell { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_usage(&self) -> bool {
        match self {
            Error::Usage(_) => true,
            Error::Cell { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
