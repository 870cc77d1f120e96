use std::path::PathBuf;

/// Errors raised anywhere in the search pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("insufficient class support: class {class} has {count} samples, needs at least {needed}")]
    InsufficientClassSupport {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error("empty population")]
    EmptyPopulation,

    #[error("objective is not finite at the starting point")]
    NonFiniteStart,

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("search interrupted after generation {generation}: {reason}")]
    Interrupted { generation: usize, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Short category tag used by the CLI on stderr.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => "config",
            Error::Parse { .. } | Error::InsufficientClassSupport { .. } | Error::Shape(_) => "data",
            Error::EmptyEvaluationSet | Error::EmptyPopulation | Error::NonFiniteStart => "search",
            Error::Interrupted { .. } => "search",
            Error::ModelFormat(_) | Error::Json(_) => "model",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
