use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] fairbench_core::Error),
    #[error("{stage} stage of {approach} failed: {source}")]
    Stage {
        approach: String,
        stage: &'static str,
        #[source]
        source: fairbench_core::Error,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pairing error: {0}")]
    Pairing(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// Process exit code for this error class; 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        use fairbench_core::Error as E;
        let core = match self {
            Error::Core(e) | Error::Stage { source: e, .. } => e,
            Error::Io { .. } => return 11,
            Error::Csv { .. } => return 5,
            Error::Config { .. } | Error::Json(_) => return 12,
            Error::Pairing(_) => return 13,
        };
        match core {
            E::Schema(_) => 3,
            E::Encoding(_) => 4,
            E::Ingestion(_) => 5,
            E::Parameter(_) => 6,
            E::Numeric(_) => 7,
            E::Input(_) => 8,
            E::Fit(_) => 9,
            E::Contract(_) => 10,
        }
    }
}
