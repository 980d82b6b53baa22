use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (bad dimensions, out-of-range
    /// values, empty inputs, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A regularization grid could not be constructed.
    #[error("grid construction failed: {0}")]
    Grid(String),

    /// A tabular input file could not be ingested. `row` is the 1-based data
    /// row (0 refers to the header).
    #[error("{path}: row {row}, column {column}: {message}")]
    Ingestion {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    /// A requested per-family error-rate bound cannot be met by any
    /// admissible threshold. The minimum achievable bound (at pi_thr = 1)
    /// is `min_achievable = q^2 / p`.
    #[error(
        "PFER target {requested} is infeasible: the minimal achievable bound is \
         {min_achievable} (attained at pi_thr = 1)"
    )]
    InfeasiblePfer { requested: f64, min_achievable: f64 },

    /// An internal consistency guarantee failed.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
