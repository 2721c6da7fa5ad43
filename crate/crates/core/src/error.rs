use thiserror::Error;

/// Errors raised by the linear-algebra layer, the solvers and the evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is rank deficient (smallest pivot {pivot:.3e}, largest {largest:.3e})")]
    RankDeficient { pivot: f64, largest: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("null space is empty")]
    EmptyNullSpace,

    #[error("channel vectors are nearly collinear")]
    NearlyCollinearChannels,

    #[error("zero-forcing filter needs at least 3 antennas, got {0}")]
    ZfInfeasible(usize),

    #[error("secondary rate is trivially zero at this splitting ratio")]
    TrivialZeroRate,

    #[error("degenerate channel configuration: {0}")]
    DegenerateChannels(String),

    #[error("error vector of norm {norm:.3e} lies outside its uncertainty ball of radius {radius:.3e}")]
    OutOfUncertaintyBall { norm: f64, radius: f64 },

    #[error("problem is infeasible")]
    Infeasible,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
