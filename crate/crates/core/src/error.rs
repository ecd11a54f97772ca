use alloc::string::String;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is numerically singular at pivot {pivot}")]
    SingularMatrix { pivot: usize },

    /// A reflection or psi series failed to reach its tolerance.
    #[error("series converges too slowly: {0}")]
    SeriesTooSlow(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// The requested point lies outside the window where the balanced
    /// arithmetic can deliver the result.
    #[error("precision window exceeded: {0}")]
    Precision(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
