use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot split experiment '{experiment}': it has {trials} trial(s), need at least 2")]
    Split { experiment: String, trials: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("all regression weights are zero")]
    DegenerateWeights,

    #[error(
        "SVT iteration diverged at iteration {iteration} (residual {residual:.3e}); \
         retry with a smaller step"
    )]
    Divergence { iteration: usize, residual: f64 },

    #[error("experiment '{id}': {source}")]
    Experiment {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable code, printed by the CLI next to the message.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::Dimension(_) => "E_DIMENSION",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::Split { .. } => "E_SPLIT",
            Error::Singular(_) => "E_SINGULAR",
            Error::DegenerateWeights => "E_DEGENERATE_WEIGHTS",
            Error::Divergence { .. } => "E_DIVERGENCE",
            Error::Experiment { source, .. } => source.code(),
            Error::Format(_) => "E_FORMAT",
            Error::Usage(_) => "E_USAGE",
            Error::Io(_) => "E_IO",
        }
    }

    pub(crate) fn in_experiment(self, id: &str) -> Error {
        Error::Experiment {
            id: id.to_owned(),
            source: Box::new(self),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
