use std::fmt;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Convergence,
    Data,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no sign change on the search interval [{lo:e}, {hi:e}] (residuals {f_lo:e}, {f_hi:e})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("infeasible regime: {0}")]
    InfeasibleRegime(String),
    #[error("linear index overflow: exp({0}) exceeds 1e12")]
    Overflow(f64),
    #[error("empty result: {0}")]
    Empty(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("all treated observations separated: {0}")]
    AllSeparated(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("demeaning tolerance not reached after {sweeps} sweeps (change {change:e})")]
    Demean { sweeps: usize, change: f64 },
    #[error("coefficient missing from fit: {0}")]
    CoefficientMissing(String),
    #[error("empty cell: {0}")]
    EmptyCell(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Assumption(_) | Error::Domain(_) => ErrorClass::Config,
            Error::NoConvergence { .. }
            | Error::Bracket { .. }
            | Error::Demean { .. }
            | Error::InfeasibleRegime(_)
            | Error::Singular(_) => ErrorClass::Convergence,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn domain(msg: impl fmt::Display) -> Self {
        Error::Domain(msg.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
