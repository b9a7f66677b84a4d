use thiserror::Error;

use crate::sparse::SolveError;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),

    #[error(
        "best response of follower {follower} hit the iteration cap ({iterations}) \
         with projected-gradient norm {residual:.3e}"
    )]
    BestResponseCap {
        follower: usize,
        iterations: usize,
        residual: f64,
        last: Box<crate::grid::GridFunction>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
