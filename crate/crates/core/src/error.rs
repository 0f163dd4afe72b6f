use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("decode error at offset {offset}: {reason}")]
    Decode { offset: usize, reason: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{module} failed in round {round}: {cause}")]
    InRound {
        module: &'static str,
        round: usize,
        cause: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    /// The underlying error with any round context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InRound { cause, .. } => cause.root(),
            e => e,
        }
    }

    /// Attach the module and round in which the error surfaced.
    pub fn in_round(self, module: &'static str, round: usize) -> Self {
        match self {
            e @ Error::InRound { .. } => e,
            e => Error::InRound {
                module,
                round,
                cause: Box::new(e),
            },
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
