use thiserror::Error;

/// Errors produced by the fitting and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("predictor {index} has zero total variation")]
    DegeneratePredictor { index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fusion solver did not converge at lambda = {lambda} after {iterations} iterations")]
    Convergence {
        lambda: f64,
        iterations: usize,
        objective_trace: Vec<f64>,
        last_iterate: Box<crate::fusionpath::FusedCoefficients>,
    },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("unsupported artifact version: expected major {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::DegeneratePredictor { .. } => "degenerate_predictor",
            Error::InvalidInput(_) => "invalid_input",
            Error::Convergence { .. } => "convergence",
            Error::Evaluation(_) => "evaluation",
            Error::Csv { .. } => "csv",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
