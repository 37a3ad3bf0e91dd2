use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("timestep ordering violated: t_prev={t_prev} must be < t={t}")]
    Ordering { t: usize, t_prev: usize },

    #[error("timestep {t} out of bounds (valid range {min}..={max})")]
    Bounds { t: usize, min: usize, max: usize },

    #[error("stochastic step (eta > 0) requires a noise sample")]
    MissingNoise,

    #[error("diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("training failed at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid condition: {0}")]
    Condition(String),

    #[error("model file format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used by the command line error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Dimension { .. } => "dimension",
            Error::Ordering { .. } => "ordering",
            Error::Bounds { .. } => "bounds",
            Error::MissingNoise => "missing_noise",
            Error::Divergence { .. } => "divergence",
            Error::Training { .. } => "training_failure",
            Error::InvalidInput(_) => "invalid_input",
            Error::Fit(_) => "fit",
            Error::NonFinite(_) => "non_finite",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Condition(_) => "condition",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
