use thiserror::Error;

/// Errors raised by the engine.
///
/// Each variant maps onto one of the CLI exit-code classes through
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The pump reaches or exceeds the oscillation threshold (μ ≥ 1).
    #[error("pump at or above threshold (mu = {mu}); the sub-threshold model is singular")]
    Threshold { mu: f64 },

    /// A closed-form expression hit a pole.
    #[error("singular evaluation: {0}")]
    Singular(String),

    /// Correlation record whose trace vanishes, so it cannot be normalized.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A matrix failed a density-matrix invariant.
    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    /// Configuration or spec rejected before evaluation.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical routine could not reach the requested accuracy.
    #[error("accuracy failure: {0}")]
    Accuracy(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Prefixes the message with the pipeline stage that produced it,
    /// keeping the variant (and therefore the exit code).
    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            Error::Domain(m) => Error::Domain(format!("{stage}: {m}")),
            Error::Singular(m) => Error::Singular(format!("{stage}: {m}")),
            Error::Degenerate(m) => Error::Degenerate(format!("{stage}: {m}")),
            Error::InvalidState(m) => Error::InvalidState(format!("{stage}: {m}")),
            Error::Validation(m) => Error::Validation(format!("{stage}: {m}")),
            Error::Accuracy(m) => Error::Accuracy(format!("{stage}: {m}")),
            other => other,
        }
    }

    /// Process exit code used by the CLI: 2 for validation-class errors,
    /// 3 for numerical-accuracy failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Accuracy(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
