use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An operation's precondition on its input state does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The instance cannot be realized by the two-polarization optics.
    #[error("unsupported instance: {0}")]
    Unsupported(String),
    /// A requested dimension exceeds the dense-simulation cap.
    #[error("resource limit: {0}")]
    Resource(String),
    /// Malformed or unevaluable circuit graph.
    #[error("circuit graph error: {0}")]
    Graph(String),
    /// Invalid configuration (geometry, reference library, CLI flags).
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
