use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OdefsError>;

#[derive(Debug, Error)]
pub enum OdefsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: label '{value}' is not 0 or 1")]
    NonBinaryLabel { row: usize, value: String },

    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty feature set")]
    EmptyFeatureSet,

    #[error("feature index {index} out of range for {d} features")]
    FeatureOutOfRange { index: usize, d: usize },

    #[error(
        "no outlier candidates exceed mean + {a} * std of the initial scores; lower the thresholding rate a"
    )]
    EmptyCandidates { a: f64 },

    #[error("all feature weights are zero")]
    ZeroWeights,

    #[error("all scores are zero")]
    ZeroScores,

    #[error("every ensemble component degenerated (zero weights or zero scores)")]
    AllComponentsDegenerate,

    #[error("non-finite gradient encountered during weight optimization")]
    NonFiniteGradient,

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

impl OdefsError {
    /// Stable machine-readable code, printed by the CLI on failure.
    pub fn code(&self) -> &'static str {
        match self {
            OdefsError::Io { .. } => "E_IO",
            OdefsError::Csv(_) => "E_CSV",
            OdefsError::RaggedRow { .. } => "E_RAGGED_ROW",
            OdefsError::NonNumeric { .. } => "E_NON_NUMERIC",
            OdefsError::NonBinaryLabel { .. } => "E_NON_BINARY_LABEL",
            OdefsError::MissingLabelColumn(_) => "E_MISSING_LABEL_COLUMN",
            OdefsError::InvalidDataset(_) => "E_INVALID_DATASET",
            OdefsError::InvalidParameter(_) => "E_INVALID_PARAMETER",
            OdefsError::DimensionMismatch { .. } => "E_DIMENSION_MISMATCH",
            OdefsError::EmptyFeatureSet => "E_EMPTY_FEATURE_SET",
            OdefsError::FeatureOutOfRange { .. } => "E_FEATURE_OUT_OF_RANGE",
            OdefsError::EmptyCandidates { .. } => "E_EMPTY_CANDIDATES",
            OdefsError::ZeroWeights => "E_ZERO_WEIGHTS",
            OdefsError::ZeroScores => "E_ZERO_SCORES",
            OdefsError::AllComponentsDegenerate => "E_ALL_COMPONENTS_DEGENERATE",
            OdefsError::NonFiniteGradient => "E_NON_FINITE_GRADIENT",
            OdefsError::Metric(_) => "E_METRIC",
            OdefsError::Json(_) => "E_JSON",
            OdefsError::Plot(_) => "E_PLOT",
        }
    }

    /// Process exit status used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            OdefsError::Io { .. }
            | OdefsError::Csv(_)
            | OdefsError::RaggedRow { .. }
            | OdefsError::NonNumeric { .. }
            | OdefsError::NonBinaryLabel { .. }
            | OdefsError::MissingLabelColumn(_)
            | OdefsError::InvalidDataset(_)
            | OdefsError::Json(_) => 3,
            OdefsError::InvalidParameter(_) => 2,
            OdefsError::EmptyCandidates { .. }
            | OdefsError::AllComponentsDegenerate
            | OdefsError::ZeroWeights
            | OdefsError::ZeroScores => 4,
            _ => 1,
        }
    }
}
