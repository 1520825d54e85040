use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("single-class labels: {0}")]
    SingleClass(String),

    #[error("stratification infeasible for target {target}: {detail}")]
    Stratification { target: String, detail: String },

    #[error("duplicate key: {0}")]
    Duplicate(String),

    #[error("unknown reference: {0}")]
    Reference(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("{stage} failed for {context}: {source}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Wraps the error with the pipeline stage and the session (or fold) it failed on.
    pub fn in_stage(self, stage: &'static str, context: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad configuration or usage rather than runtime failures.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config { .. } | Error::MissingKey(_) => true,
            Error::Stage { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
