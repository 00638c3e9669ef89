use thiserror::Error;

/// Errors raised by model construction, likelihood evaluation and I/O.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("degenerate covariate: column has fewer than two distinct values")]
    DegenerateCovariate,

    #[error("too few distinct values ({distinct}) to place {knots} knots")]
    TooFewDistinct { distinct: usize, knots: usize },

    #[error("tied quantiles while placing knots: level {level} repeats value {value}")]
    TiedKnots { level: usize, value: f64 },

    #[error("column index {index} out of range ({available} columns)")]
    ColumnOutOfRange { index: usize, available: usize },

    #[error("invalid term: {0}")]
    InvalidTerm(String),

    #[error("correlation not positive definite")]
    NotPositiveDefinite,

    #[error("rank-deficient Gram matrix for inclusion pattern {pattern}")]
    RankDeficient { pattern: String },

    #[error("non-positive variance")]
    NonPositiveVariance,

    #[error("correlation {0} outside (-1, 1)")]
    CorrelationDomain(f64),

    #[error("grid value {value} outside observed covariate range [{lo}, {hi}]")]
    Extrapolation { value: f64, lo: f64, hi: f64 },

    #[error("no posterior draws")]
    EmptySamples,

    #[error("signal-to-noise ratio undefined: error sum of squares is zero")]
    ZeroSse,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
