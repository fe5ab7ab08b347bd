use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: field `{field}`: {message}")]
    Parse {
        row: usize,
        field: String,
        message: String,
    },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: `{field}` is set but promise_status is not Yes")]
    DependentLabel { id: String, field: &'static str },

    #[error("record `{0}` has empty text")]
    EmptyText(String),

    #[error("class `{class}` has {count} members, fewer than the {required} required")]
    InsufficientClass {
        class: String,
        count: usize,
        required: usize,
    },

    #[error("record `{id}` has no label for {subtask}")]
    MissingLabel { id: String, subtask: String },

    #[error("split requires at least two classes, found {0}")]
    SingleClass(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lexicon `{name}` line {line}: {message}")]
    Lexicon {
        name: String,
        line: usize,
        message: String,
    },

    #[error("annotation was generated from a different text")]
    MismatchedAnnotation,

    #[error("text already starts with a feature tag block")]
    AlreadyEnriched,

    #[error("annotation has an empty tag block")]
    EmptyTagBlock,

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("every position of the sequence is masked")]
    AllMasked,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite loss {value} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, value: f64 },

    #[error("loss component `{0}` is not finite")]
    NonFiniteComponent(&'static str),

    #[error("backbone `{0}` has no registered adapter")]
    BackboneUnavailable(String),

    #[error("predictions missing for ids: combined {missing_combined:?}, feature {missing_feature:?}")]
    MissingPredictions {
        missing_combined: Vec<String>,
        missing_feature: Vec<String>,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad input rather than an internal fault.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. }
                | Error::ShapeMismatch { .. }
                | Error::AllMasked
                | Error::NonFiniteLoss { .. }
                | Error::Checkpoint(_)
        )
    }
}
