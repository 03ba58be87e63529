use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is outside the domain the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("event ({i}, {j}) outside [1, {n}]")]
    OutOfRange { i: usize, j: usize, n: usize },

    /// The empirical distributions are undefined for `m = 0`.
    #[error("empty stream: distributions undefined for m = 0")]
    EmptyStream,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
