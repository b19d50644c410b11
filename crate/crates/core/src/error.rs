use thiserror::Error;

/// Everything that can go wrong inside the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("only {found} common spectral peaks found, {requested} requested")]
    FewerThanKCommonPeaks { requested: usize, found: usize },

    #[error("symmetric eigen-solver did not converge")]
    EigenFailure,

    #[error("simulation diverged at step {step} (|state| = {magnitude:e})")]
    UnstableSimulation { step: usize, magnitude: f64 },

    #[error("normal equations are singular (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("input and target signals do not share the same frequencies")]
    FrequencyMismatch,

    #[error("target has zero norm")]
    ZeroReference,

    #[error("eigenvalues violate the stability/cut-off constraints")]
    InfeasibleLambdas,

    #[error("no optimizer restart converged ({restarts} attempted)")]
    AllRestartsFailed { restarts: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
