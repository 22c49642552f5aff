use thiserror::Error;

/// Failure of an experiment before or during its run.
#[derive(Debug, Error)]
pub enum ExperimentError {
    /// The experiment description is inconsistent. The CLI maps this to a
    /// usage error.
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("cannot read config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("{context}: {source}")]
    Simulation {
        context: String,
        #[source]
        source: orthochain_core::Error,
    },
    #[error("fit needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("log-log fit needs positive coordinates, got ({x}, {y})")]
    NonPositive { x: f64, y: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        ExperimentError::Spec(msg.into())
    }

    /// True for errors caused by the request rather than by the run.
    pub fn is_usage(&self) -> bool {
        matches!(self, ExperimentError::Spec(_) | ExperimentError::Config { .. })
    }
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// Attaches the parameter tuple of a run to a core error.
pub(crate) trait WithContext<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T>;
}

impl<T> WithContext<T> for orthochain_core::Result<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| ExperimentError::Simulation { context: f(), source })
    }
}
