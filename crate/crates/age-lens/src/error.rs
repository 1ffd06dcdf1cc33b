use std::path::PathBuf;

/// Errors surfaced by the library.
///
/// `Config` maps to CLI exit code 1, everything else to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no parseable records in {path}")]
    EmptyCorpus { path: PathBuf },

    #[error("invalid configuration: {}", issues.join("; "))]
    Config { issues: Vec<String> },

    #[error("{0}")]
    Data(String),

    #[error("profile built from non-train review: mention in review {review_id} (user {user_id}, {date})")]
    Leakage {
        review_id: String,
        user_id: String,
        date: crate::date::Day,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(issue: impl Into<String>) -> Error {
        Error::Config {
            issues: vec![issue.into()],
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
