//! Shared error type for the solver library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("data validation: {0}")]
    DataValidation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A measure-zero configuration the solver detects and reports rather
    /// than resolves (non-simple roots, identically singular pencils, ...).
    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("near-singular pencil matrix at lambda = {lambda}")]
    NearSingular { lambda: f64 },

    #[error("root isolation needs {needed} intervals, budget is {budget}")]
    IsolationBudgetExceeded { needed: u64, budget: u64 },

    #[error("only {clean} non-singular interpolation nodes found, {required} required")]
    TooManySingularNodes { clean: usize, required: usize },

    #[error("singular quadratic form: {0}")]
    SingularForm(String),

    #[error("no admissible candidate")]
    NoAdmissibleCandidate,

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("cost guard: {0}")]
    CostGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;
