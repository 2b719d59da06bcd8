use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical core.
///
/// The variants split into two families: invalid inputs (geometry, group
/// data, configuration) and numerical-signal failures (too few samples,
/// unresolved quadrature, truncated series). Callers such as the CLI map the
/// two families to different exit codes through [`Error::is_validation`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid isometry: {0}")]
    InvalidIsometry(String),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("orbit budget of {budget} elements exhausted at word length {length}")]
    Truncation { budget: usize, length: usize },
    #[error("fundamental-domain reduction did not terminate after {steps} steps")]
    Reduction { steps: usize },
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),
    #[error("extrapolation error: {0}")]
    Extrapolation(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("unresolved oscillation: {message} (need at least {required} points per dimension)")]
    Resolution { message: String, required: usize },
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidIsometry(_)
                | Error::InvalidGroup(_)
                | Error::Config(_)
                | Error::Unsupported(_)
        )
    }
}
