use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, XmsError>;

#[derive(Debug, Error)]
pub enum XmsError {
    #[error("pair count mismatch: {detail}")]
    PairCountMismatch { detail: String },

    #[error("non-finite value in {context} at row {row}, column {col}")]
    NonFinite { context: String, row: usize, col: usize },

    #[error("label {label} outside 1..={num_classes}")]
    LabelOutOfRange { label: i64, num_classes: usize },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("malformed file {}: line {line}: {msg}", path.display())]
    Malformed { path: PathBuf, line: usize, msg: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is numerically singular ({context}); try a larger ridge")]
    Singular { context: String },

    #[error("no covariance structure between modalities")]
    NoCovarianceStructure,

    #[error("objective diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl XmsError {
    /// Stable machine-readable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            XmsError::PairCountMismatch { .. } => "pair_count_mismatch",
            XmsError::NonFinite { .. } => "non_finite",
            XmsError::LabelOutOfRange { .. } => "label_out_of_range",
            XmsError::EmptyClass { .. } => "empty_class",
            XmsError::Malformed { .. } => "malformed_file",
            XmsError::Io { .. } => "io",
            XmsError::DimensionMismatch { .. } => "dimension_mismatch",
            XmsError::IndexOutOfRange { .. } => "index_out_of_range",
            XmsError::InvalidArgument(_) => "invalid_argument",
            XmsError::Config(_) => "config",
            XmsError::Singular { .. } => "singular",
            XmsError::NoCovarianceStructure => "no_covariance_structure",
            XmsError::Diverged { .. } => "diverged",
            XmsError::Numerical(_) => "numerical",
        }
    }

    /// Process exit code used by the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            XmsError::Config(_) | XmsError::InvalidArgument(_) => 2,
            XmsError::PairCountMismatch { .. }
            | XmsError::NonFinite { .. }
            | XmsError::LabelOutOfRange { .. }
            | XmsError::EmptyClass { .. }
            | XmsError::Malformed { .. }
            | XmsError::Io { .. }
            | XmsError::DimensionMismatch { .. }
            | XmsError::IndexOutOfRange { .. } => 3,
            XmsError::Singular { .. }
            | XmsError::NoCovarianceStructure
            | XmsError::Diverged { .. }
            | XmsError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        XmsError::Io {
            path: path.into(),
            source,
        }
    }
}
