use std::path::PathBuf;

/// Errors raised anywhere in the benchmark pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("conflicting settings: {0}")]
    Conflict(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("graph has no observed variables")]
    EmptyObserved,

    #[error("node {0} not found")]
    NodeNotFound(usize),

    #[error("mechanism table needs {required} entries, budget is {budget}")]
    Overflow { required: String, budget: u64 },

    #[error("infeasible space of interest: {0}")]
    Infeasible(String),

    #[error("no noise rows are consistent with the factual evidence")]
    EmptyPosterior,

    #[error("query needs at least {needed} observed variables, found {found}")]
    TooFewObserved { needed: usize, found: usize },

    #[error("axiom checks need at least 3 variables, found {0}")]
    TooFewNodes(usize),

    #[error("verification requires a discrete SCM")]
    NotDiscrete,

    #[error("verification requires a Markovian SCM")]
    NotMarkovian,

    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    #[error("mechanism grid of {required} points exceeds budget {budget}")]
    GridBudgetExceeded { required: u64, budget: u64 },

    #[error("query slot {slot} of SCM {scm_index} still undefined after {attempts} attempts")]
    RetryCapExceeded {
        scm_index: u64,
        slot: usize,
        attempts: usize,
    },

    #[error("estimator command not found: {0}")]
    EstimatorNotFound(String),

    #[error("estimator protocol violation: {0}")]
    Protocol(String),

    #[error("estimator timed out after {0} s")]
    Timeout(u64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a bad configuration rather than a runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax(_) | Error::Validation { .. } | Error::Conflict(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
