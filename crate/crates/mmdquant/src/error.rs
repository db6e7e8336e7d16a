use thiserror::Error;

/// Errors surfaced by kernel evaluation, factorization and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("support points must be pairwise distinct (indices {0} and {1} coincide)")]
    DegeneratePoints(usize, usize),

    #[error("kernel matrix is numerically singular (jitter ceiling {ceiling:.3e} exceeded)")]
    IllConditioned { ceiling: f64 },

    #[error("active-set iteration exceeded the cap of {cap} iterations")]
    ActiveSetCycle { cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
