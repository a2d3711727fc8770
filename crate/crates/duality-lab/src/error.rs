use thiserror::Error;

/// Errors surfaced by the simulation and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A size cap was exceeded (state spaces grow exponentially).
    #[error("size error: {0}")]
    Size(String),
    /// A query lies outside the simulated range (e.g. past the horizon).
    #[error("range error: {0}")]
    Range(String),
    /// The requested value is not defined at this point of the domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A declared runtime invariant was violated during a run.
    #[error("invariant violation: {0}")]
    Invariant(String),
    /// Experiment configuration problems (unknown names, missing keys).
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
