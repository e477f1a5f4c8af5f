//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong across simulation, estimation, inference and IO.
///
/// Variant names are stable: the CLI maps them to machine-readable error codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Mildly integrated regime with k_n out of the feasible range [2, n).
    #[error("infeasible regime: k_n = {kn:.6} must satisfy 2 <= k_n < n = {n}")]
    RegimeInfeasible { kn: f64, n: usize },

    /// Marginal mean requested for a non-stationary configuration (alpha_n >= 1).
    #[error("no stationary marginal mean: alpha_n = {alpha} >= 1")]
    NotStationary { alpha: f64 },

    /// Regression design with (weighted) lagged values numerically constant.
    #[error("degenerate regression design: centered second moment below threshold")]
    DegenerateDesign,

    /// Residual-variance ratio with a zero denominator (all lagged values zero).
    #[error("zero denominator: sum of lagged values is zero")]
    ZeroDenominator,

    /// Iterative fit did not reach the gradient tolerance.
    #[error(
        "no convergence after {iterations} iterations: gradient sup-norm {grad_norm:.3e} \
         at (alpha = {alpha}, mu = {mu})"
    )]
    NoConvergence {
        iterations: usize,
        grad_norm: f64,
        alpha: f64,
        mu: f64,
    },

    /// Iterates pinned at the mu floor; the optimum lies on the boundary.
    #[error("boundary hit: mu pinned at floor {mu_floor:.1e} (alpha = {alpha})")]
    BoundaryHit { alpha: f64, mu_floor: f64 },

    /// Too few usable observations for the requested fit.
    #[error("insufficient data: {got} usable observations, need at least {need}")]
    InsufficientData { got: usize, need: usize },

    /// Plug-in inference needs alpha_hat < 1 to map to a horizon k_hat.
    #[error("alpha_hat = {alpha} is at or above one; plug-in inference undefined")]
    AlphaAtOrAboveOne { alpha: f64 },

    /// Moment matrix not invertible.
    #[error("singular moment matrix")]
    SingularOmega,

    /// Simulated design stayed singular after the retry budget.
    #[error("singular design persisted through {retries} resampling retries")]
    SingularDesign { retries: usize },

    /// Estimation window with fewer than two transitions.
    #[error("window [{start}, {end}) too short for estimation")]
    WindowTooShort { start: usize, end: usize },

    /// Negative value in an ingested series.
    #[error("negative value {value} at data row {row}")]
    NegativeValue { row: usize, value: f64 },

    /// Missing value in an ingested series under the strict policy.
    #[error("missing value at data row {row}")]
    MissingValue { row: usize },

    /// Malformed numeric field or CSV structure.
    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Malformed key=value configuration text.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for this error, used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::RegimeInfeasible { .. } => "RegimeInfeasible",
            Error::NotStationary { .. } => "NotStationary",
            Error::DegenerateDesign => "DegenerateDesign",
            Error::ZeroDenominator => "ZeroDenominator",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::BoundaryHit { .. } => "BoundaryHit",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::AlphaAtOrAboveOne { .. } => "AlphaAtOrAboveOne",
            Error::SingularOmega => "SingularOmega",
            Error::SingularDesign { .. } => "SingularDesign",
            Error::WindowTooShort { .. } => "WindowTooShort",
            Error::NegativeValue { .. } => "NegativeValue",
            Error::MissingValue { .. } => "MissingValue",
            Error::Parse { .. } => "ParseError",
            Error::Config { .. } => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
