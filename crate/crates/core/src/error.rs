use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("infeasible decision: adding {add} with {installed} of {max} installed")]
    Infeasible { add: usize, installed: usize, max: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("training diverged at episode {episode} (loss {loss:e})")]
    Diverged {
        episode: usize,
        loss: f64,
        /// Last network state before the abort, kept for post-mortem.
        snapshot: Box<crate::dqn::PolicyArtifact>,
    },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }

    /// Process exit status for this error: 2 for user or configuration
    /// problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::Diverged { .. } => 3,
            _ => 2,
        }
    }
}
