use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid sparse vector: {0}")]
    InvalidSparse(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("vector is not unit-normalized (l2 norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("{name} = {value} is outside its domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("GMM undefined for two zero vectors")]
    GmmUndefined,

    #[error("cannot hash zero vector")]
    ZeroVector,

    #[error("all-zero features vector cannot be normalized")]
    DegenerateFeatures,

    #[error("sketch mismatch: {0}")]
    SketchMismatch(String),

    #[error("kernel entry ({row}, {col}): {source}")]
    KernelCell {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input")]
    Empty,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("zero rows cannot be hashed (rows {rows:?})")]
    ZeroRows { rows: Vec<usize> },

    #[error("training needs at least two distinct labels, found {0}")]
    SingleClass(usize),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("unknown figure '{0}' (expected 1, 2, 3 or 4)")]
    UnknownFigure(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_domain(name: &'static str, value: f64, ok: bool, domain: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfDomain { name, value, domain })
    }
}
