use thiserror::Error;

/// Errors produced by every stage of the model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{solver} did not converge after {iterations} iterations (final residual {residual:.3e})")]
    SolverFailure {
        solver: String,
        iterations: usize,
        residual: f64,
        /// Residual after each iteration, newest last.
        history: Vec<f64>,
    },

    #[error("computation failed: {0}")]
    ComputationFailure(String),

    #[error("missing upstream artifact from stage `{stage}`: {detail}")]
    Dependency { stage: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Attach a context prefix to solver and computation failures.
    pub fn context(self, what: &str) -> Self {
        match self {
            Error::SolverFailure {
                solver,
                iterations,
                residual,
                history,
            } => Error::SolverFailure {
                solver: format!("{what}: {solver}"),
                iterations,
                residual,
                history,
            },
            Error::ComputationFailure(m) => Error::ComputationFailure(format!("{what}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
