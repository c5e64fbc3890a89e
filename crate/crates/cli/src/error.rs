use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] vqsolve::Error),
    #[error("gradient check failed: max deviation {deviation:e} exceeds {tolerance:e}")]
    GradcheckFailed { deviation: f64, tolerance: f64 },
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("malformed artifact {}: {message}", .path.display())]
    MalformedArtifact { path: PathBuf, message: String },
    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 config, 2 numerical failure, 3 missing or unreadable artifact.
    pub fn exit_code(&self) -> i32 {
        use vqsolve::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Config(_) => 1,
            CliError::Solver(E::NonFinite(_) | E::Shock(_)) => 2,
            CliError::Solver(E::InvalidConfig(_) | E::UnknownBenchmark(_)) => 1,
            CliError::Solver(_) => 2,
            CliError::GradcheckFailed { .. } => 2,
            CliError::MissingArtifact(_) | CliError::MalformedArtifact { .. } => 3,
            CliError::Io { .. } | CliError::Csv(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
