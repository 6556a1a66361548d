use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode already finished after {0} monitor intervals")]
    EpisodeFinished(usize),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "teacher did not converge: trained return {trained:.3} < {factor} x random return {random:.3}"
    )]
    NotConverged {
        trained: f64,
        random: f64,
        factor: f64,
        curve: Vec<f64>,
    },

    #[error("parse error at {line}:{column}: expected {expected}, found {found}")]
    Parse {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },

    #[error("type error: {0}")]
    Type(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("branch decider has not been fitted")]
    Unfitted,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EpisodeFinished(_) => "episode_finished",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotConverged { .. } => "not_converged",
            Error::Parse { .. } => "parse",
            Error::Type(_) => "type",
            Error::Empty(_) => "empty",
            Error::EmptyCluster(_) => "empty_cluster",
            Error::Unfitted => "unfitted",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
