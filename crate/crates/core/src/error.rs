use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("solver error: {0}")]
    Solver(String),

    /// The extremal singular value iterations did not converge; the best
    /// bounds found so far are attached.
    #[error("condition estimate did not converge after {iterations} iterations (sigma_max ~ {sigma_max:e}, sigma_min ~ {sigma_min:e})")]
    Estimate {
        iterations: usize,
        sigma_max: f64,
        sigma_min: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
