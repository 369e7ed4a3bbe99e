use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("unsupported case: problem={problem}, constraint={constraint}, norm={norm}")]
    UnsupportedCase {
        problem: String,
        constraint: String,
        norm: String,
    },
    #[error("no convergence after {iterations} iterations (fixed-point {fixed_point:.3e}, consensus {consensus:.3e})")]
    NonConvergence {
        iterations: usize,
        fixed_point: f64,
        consensus: f64,
    },
    #[error("step size rejected: {0}")]
    StepSizeRejected(String),
    #[error("degenerate dual: {0}")]
    DegenerateDual(String),
    #[error("trivial solution: ||b|| = {norm_b} <= sigma = {sigma}, x* = 0")]
    TrivialSolution { norm_b: f64, sigma: f64 },
    #[error("primal infeasible: dual objective {objective:.3e} after {iterations} iterations")]
    Infeasible { iterations: usize, objective: f64 },
    #[error("relative error undefined for a zero reference value")]
    ZeroDenominator,
    #[error("oracle failure: {0}")]
    Oracle(String),
}
