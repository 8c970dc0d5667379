//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid unfolding mode {0}; expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("zero input: {0}")]
    ZeroInput(String),

    #[error("requested rank {rank} exceeds limit {limit}: {context}")]
    RankTooLarge {
        rank: usize,
        limit: usize,
        context: &'static str,
    },

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("pencil matrix S2 is numerically singular (sigma_min/sigma_max = {ratio:.3e})")]
    SingularPencil { ratio: f64 },

    #[error("pencil eigenvalues have imaginary parts above tolerance (max |Im|/rho = {ratio:.3e})")]
    ComplexEigenvalues { ratio: f64 },

    #[error("flattening in mode {mode} has numerical rank below {rank} (sigma_r/sigma_1 = {ratio:.3e})")]
    DegenerateCompression { mode: usize, rank: usize, ratio: f64 },

    #[error("projection retries exhausted after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: usize, last: Box<Error> },

    #[error("subset enumeration needs {required} evaluations, over the {budget} budget")]
    CombinatorialBudgetExceeded { required: u128, budget: u128 },

    #[error("rank-1 extraction did not converge after {iters} iterations ({context})")]
    NonConvergence { iters: usize, context: String },

    #[error("infinite condition number: {0}")]
    InfiniteKappa(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    FileFormat {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
