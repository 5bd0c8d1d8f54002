use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("partition region {region} received no points")]
    EmptyRegion { region: usize },

    #[error("node {node} has no training examples")]
    EmptyNode { node: usize },

    #[error("node {node} has an empty validation set")]
    EmptyValidation { node: usize },

    #[error("class {class} has {count} examples, fewer than the {required} required")]
    ClassTooSmall { class: usize, count: usize, required: usize },

    #[error("class {class} is absent from the validation set")]
    ClassMissingFromValidation { class: usize },

    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("copula parameter {lambda} is outside ({lower}, 1) for arity {arity}")]
    InvalidLambda { lambda: f64, lower: f64, arity: usize },

    #[error("non-finite training loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("non-finite ensemble score for class {class} (classifier {classifier:?})")]
    NonFiniteScore { class: usize, classifier: Option<usize> },

    #[error("non-finite copula log-density")]
    NonFiniteDensity,

    #[error("malformed row at line {line}: expected {expected} fields, found {found}")]
    MalformedRow { line: u64, expected: usize, found: usize },

    #[error("non-numeric feature at line {line}, column {column}: {value:?}")]
    NonNumericFeature { line: u64, column: usize, value: String },

    #[error("non-numeric label at line {line}: {value:?}")]
    NonNumericLabel { line: u64, value: String },

    #[error("class index {class} never appears among the labels (labels must cover 0..{num_classes})")]
    UnseenLabel { class: usize, num_classes: usize },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("malformed model encoding: {0}")]
    Decode(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("repetition with seed {seed} failed: {source}")]
    Repetition {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
