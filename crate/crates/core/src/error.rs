use thiserror::Error;

/// Errors produced by the estimation, resampling and experiment routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("risk set is empty at t = {t}")]
    EmptyRiskSet { t: f64 },

    #[error("dataset contains no observed events")]
    NoEvents,

    #[error("Newton iteration failed to converge: {0}")]
    NonConvergence(String),

    #[error("covariates are not categorical: {0}")]
    NonCategorical(String),

    #[error("no censoring stratum for covariate level {0:?}")]
    UnknownStratum(Vec<f64>),

    #[error("base fit failed: {0}")]
    FitFailed(String),

    #[error("{failures} of {replicates} bootstrap replicates failed (cap is 5%)")]
    TooManyFailures { failures: usize, replicates: usize },

    #[error("no bootstrap draws available")]
    EmptyDraws,

    #[error("limit law requires a discrete covariate law: {0}")]
    NonDiscreteCovariates(String),

    #[error("limit-law window exhausted after {doublings} doublings (H = {half_width})")]
    WindowExhausted { doublings: u32, half_width: f64 },

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::EmptyRiskSet { .. } => "empty_risk_set",
            Error::NoEvents => "no_events",
            Error::NonConvergence(_) => "non_convergence",
            Error::NonCategorical(_) => "non_categorical",
            Error::UnknownStratum(_) => "unknown_stratum",
            Error::FitFailed(_) => "fit_failed",
            Error::TooManyFailures { .. } => "too_many_failures",
            Error::EmptyDraws => "empty_draws",
            Error::NonDiscreteCovariates(_) => "non_discrete_covariates",
            Error::WindowExhausted { .. } => "window_exhausted",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
