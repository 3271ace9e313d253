use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] fnl_core::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Process exit code: 1 for a violated contract, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(fnl_core::Error::WitnessGapViolated { .. })
            | Error::Core(fnl_core::Error::DriftIdentityMismatch { .. }) => 1,
            _ => 2,
        }
    }
}
