use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {msg} (achieved estimate {estimate:e})")]
    Numerical { msg: String, estimate: f64 },
    #[error("rank deficiency: requested {requested} terms but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("fit failure: {0}")]
    FitFailure(String),
    #[error("decomposition failure: {0}")]
    Decomposition(String),
    #[error("instability: {0}")]
    Instability(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
