use thiserror::Error;

/// Errors shared across the solver library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid signal structure: {0}")]
    InvalidStructure(String),
    #[error("invalid value function: {0}")]
    InvalidValueFunction(String),
    #[error("prior is outside the convex hull of the grid: {0}")]
    InfeasiblePrior(String),
    #[error("affine dependence detection failed at tolerance {tol}: {detail}")]
    NumericalRankFailure { tol: f64, detail: String },
    #[error("problem infeasible: {0}")]
    InfeasibleProblem(String),
    #[error("iteration limit {max_iters} reached (residual {residual:.3e})")]
    MaxIterations { max_iters: usize, residual: f64 },
    #[error("fixed-point iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("point is not a member of the possibility set: {0}")]
    NotInSet(String),
    #[error("membership indeterminate: sandwich gap {gap:.3e} exceeds tolerance {tol:.3e}")]
    Indeterminate { gap: f64, tol: f64 },
    #[error("participation equation has no root in ({lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("no coalition of {m} voters is persuadable")]
    Unpersuadable { m: usize },
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
