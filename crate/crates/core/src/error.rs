use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum BdarError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-positive conditional variance h = {h} at index {index}")]
    NonPositiveVariance { index: usize, h: f64 },

    #[error("simulated path exploded at step {step}")]
    Explosion { step: usize },

    #[error("regime too small for cell: n1 = {n1}, n2 = {n2}, required {required}")]
    CellRejected { n1: usize, n2: usize, required: usize },

    #[error("threshold search failed: {0}")]
    SearchFailed(String),

    #[error("singular information block {block} (condition number {condition:.3e})")]
    Singular { block: String, condition: f64 },

    #[error("undefined BIC penalty: {0}")]
    EmptyRegime(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("study failed: {failures} of {replications} replications failed at n = {n}")]
    StudyFailed {
        n: usize,
        failures: usize,
        replications: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes and machine-readable errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    Numerical,
}

impl BdarError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            BdarError::InsufficientData(_)
            | BdarError::InvalidData(_)
            | BdarError::InvalidParams(_)
            | BdarError::Domain(_)
            | BdarError::DegenerateSeries(_)
            | BdarError::Parse { .. }
            | BdarError::Io(_)
            | BdarError::Json(_) => ErrorCategory::Data,
            BdarError::NonPositiveVariance { .. }
            | BdarError::Explosion { .. }
            | BdarError::CellRejected { .. }
            | BdarError::SearchFailed(_)
            | BdarError::Singular { .. }
            | BdarError::EmptyRegime(_)
            | BdarError::StudyFailed { .. } => ErrorCategory::Numerical,
        }
    }

    /// Short stable tag, e.g. `insufficient_data`.
    pub fn tag(&self) -> &'static str {
        match self {
            BdarError::InsufficientData(_) => "insufficient_data",
            BdarError::InvalidData(_) => "invalid_data",
            BdarError::InvalidParams(_) => "invalid_params",
            BdarError::Domain(_) => "domain",
            BdarError::NonPositiveVariance { .. } => "non_positive_variance",
            BdarError::Explosion { .. } => "explosion",
            BdarError::CellRejected { .. } => "cell_rejected",
            BdarError::SearchFailed(_) => "search_failed",
            BdarError::Singular { .. } => "singular",
            BdarError::EmptyRegime(_) => "empty_regime",
            BdarError::DegenerateSeries(_) => "degenerate_series",
            BdarError::StudyFailed { .. } => "study_failed",
            BdarError::Parse { .. } => "parse",
            BdarError::Io(_) => "io",
            BdarError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, BdarError>;
