use thiserror::Error;

/// Errors raised anywhere in the learning / control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("infeasible ({constraint}): {detail}")]
    Infeasible { constraint: String, detail: String },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("non-finite evaluation at iterate {iterate:?}: {detail}")]
    NonFinite { iterate: Vec<f64>, detail: String },

    #[error("sampling budget exhausted for cluster {cluster}: accepted {accepted} of {requested}")]
    SamplingExhausted {
        cluster: usize,
        accepted: usize,
        requested: usize,
    },

    #[error("error bound too large for horizon: {0}")]
    BoundTooLarge(String),

    #[error("step {step} failed in {problem}: {detail}")]
    StepFailed {
        step: usize,
        problem: String,
        detail: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with the name of the pipeline stage it surfaced in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error beneath any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
