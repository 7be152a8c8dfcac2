use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix shape {rows}x{cols} does not match {len} values")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("embedding set must have at least one row and one column (got {rows}x{dim})")]
    EmptySet { rows: usize, dim: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },

    #[error("class id {id} out of range for {classes} classes")]
    LabelOutOfRange { id: usize, classes: usize },

    #[error("{labels} labels supplied for {rows} rows")]
    LabelCount { labels: usize, rows: usize },

    #[error("class name {0:?} is empty or duplicated")]
    BadClassName(String),

    #[error("class vocabularies differ")]
    VocabMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),

    #[error("class {class} has no support examples")]
    EmptyClass { class: usize },

    #[error("need {needed} classes but the dataset has {available}")]
    InsufficientClasses { needed: usize, available: usize },

    #[error(
        "only {eligible} classes have the {needed} examples needed per class, {classes} required"
    )]
    InsufficientExamples {
        needed: usize,
        eligible: usize,
        classes: usize,
    },

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
