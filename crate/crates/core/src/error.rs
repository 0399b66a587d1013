use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A Gram matrix could not be inverted; the caller usually drops the draw.
    #[error("singular precoder: {0}")]
    Singular(String),

    #[error("too many singular Monte-Carlo draws: {singular} of {attempted} (limit 10%)")]
    TooManySingular { singular: usize, attempted: usize },

    #[error("power solver failure: {0}")]
    Solver(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Whether the error comes from a degenerate random draw rather than from
    /// bad input. Trials failing this way are dropped and counted.
    pub fn is_degenerate_draw(&self) -> bool {
        matches!(self, Error::Singular(_) | Error::TooManySingular { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
