use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: rating {value} outside 0..=5")]
    RatingRange {
        path: PathBuf,
        line: usize,
        value: i64,
    },

    #[error("duplicate (user, item) pair ({user}, {item})")]
    DuplicateEntry { user: String, item: String },

    #[error("dataset is empty after filtering (min_user={min_user}, min_item={min_item})")]
    EmptyDataset { min_user: usize, min_item: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}; last finite state kept")]
    Diverged {
        epoch: usize,
        last_finite: Box<crate::models::TrainedModel>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad file format: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("missing artifact {path}; run `hashrec {producer}` first")]
    MissingArtifact {
        path: PathBuf,
        producer: &'static str,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than a bug or I/O fault.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::RatingRange { .. }
                | Error::DuplicateEntry { .. }
                | Error::EmptyDataset { .. }
                | Error::Config(_)
                | Error::MissingArtifact { .. }
                | Error::Format { .. }
                | Error::Io { .. }
        )
    }
}
