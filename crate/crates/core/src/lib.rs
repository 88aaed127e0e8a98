//! Survival analysis toolkit built around a five-step stratified testing and
//! amalgamation routine (5-STAR) for two-arm randomized trials:
//!
//! 1. pre-specified baseline covariates ([`survdata`]),
//! 2. blinded covariate filtering with elastic-net Cox regression ([`coxnet`]),
//! 3. blinded risk stratification with a conditional inference tree ([`strata`]),
//! 4. per-stratum accelerated failure time fits with AIC model averaging ([`aftavg`]),
//! 5. amalgamation of stratum effects into overall tests and estimates ([`amalgam`]).
//!
//! Standard comparators (logrank, weighted logrank/MaxCombo, RMST, Cox PH) live in
//! [`nonparam`] and [`coxnet`]. [`pipeline`] orchestrates a full analysis with the
//! blinding discipline enforced by construction, and [`simlab`] reproduces a
//! four-scenario operating-characteristics study at configurable replication counts.

pub mod aftavg;
pub mod amalgam;
pub mod coxnet;
pub mod nonparam;
pub mod numeric;
pub mod pipeline;
pub mod simlab;
pub mod strata;
pub mod survdata;

use thiserror::Error;

/// Toolkit-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: negative time {value}")]
    NegativeTime { row: usize, value: f64 },
    #[error("row {row}, column `{column}`: unknown level `{value}`")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Unparseable {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

impl Error {
    /// Process exit code class: 2 for validation problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_)
            | Error::NonConvergence(_)
            | Error::RankDeficient(_)
            | Error::Degenerate(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
