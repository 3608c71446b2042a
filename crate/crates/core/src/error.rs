use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or inconsistent input data.
    Data,
    /// An optimiser or resampling stage failed numerically.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown user `{user_id}` referenced by tweet `{tweet_id}`")]
    UnknownUser { tweet_id: String, user_id: String },
    #[error("invalid url `{url}`: {reason}")]
    InvalidUrl { url: String, reason: String },
    #[error("registered_at {registered} is after reference date {reference}")]
    RegisteredAfterReference {
        registered: chrono::NaiveDate,
        reference: chrono::NaiveDate,
    },
    #[error("unknown reliability label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate domain `{0}` in registry")]
    DuplicateDomain(String),
    #[error("registry line {line}: {message}")]
    Registry { line: usize, message: String },
    #[error("score undefined: no matched links")]
    UndefinedScore,
    #[error("cannot form groups: {0}")]
    Grouping(String),
    #[error("unknown filter policy `{0}`")]
    UnknownPolicy(String),
    #[error("empty sample")]
    EmptySample,
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("invalid design: {0}")]
    Design(String),
    #[error("class {0} missing from labels")]
    MissingClass(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("model did not converge")]
    NotConverged,
    #[error("{dropped} of {total} resampling replicates failed")]
    TooManyDropped { dropped: usize, total: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    /// Where an inner error happened: a file path or a pipeline stage.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotConverged | Error::TooManyDropped { .. } => ErrorKind::Numerical,
            Error::Context { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn parse(line: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
