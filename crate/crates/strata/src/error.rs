use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A malformed or invalid row; `line` is 1-based and counts the header.
    #[error("{origin}: line {line}: {msg}")]
    Parse { origin: String, line: u64, msg: String },
    /// Missing columns, bad headers and similar whole-file problems.
    #[error("{origin}: {msg}")]
    Schema { origin: String, msg: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] canopy_strata_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(origin: &str, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn schema(origin: &str, msg: impl Into<String>) -> Self {
        Error::Schema {
            origin: origin.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 1 for bad input or configuration, 2 for I/O
    /// failures, 3 for internal invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Core(canopy_strata_core::Error::Invariant(_)) => 3,
            _ => 1,
        }
    }
}

/// Maps a csv error to a parse error carrying its line, or an I/O error.
pub(crate) fn from_csv(origin: &str, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(origin, e),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            Error::parse(origin, line, format!("expected {expected_len} fields, found {len}"))
        }
        csv::ErrorKind::Utf8 { err, .. } => Error::parse(origin, line, format!("invalid UTF-8: {err}")),
        other => Error::parse(origin, line, format!("{other:?}")),
    }
}
