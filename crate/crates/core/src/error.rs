use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is invalid; `field` names the offending input.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Enumeration cutoff or similar capacity limit.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("coordinate overflow on axis {axis} at time {time}")]
    Overflow { axis: usize, time: u64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("merge refused: {0}")]
    Merge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Precondition(_)
            | Error::Unsupported(_)
            | Error::Merge(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Resource(_) | Error::Overflow { .. } => 3,
            Error::Invariant(_) => 4,
        }
    }
}
