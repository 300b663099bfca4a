use thiserror::Error;

/// Errors produced by the library. Each variant maps to a CLI exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    NonConvergence {
        solver: String,
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in the CLI error payload.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::Parameter(_) => "parameter",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Singular(_) => "singular",
            Error::Consistency(_) => "consistency",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
