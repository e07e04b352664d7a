use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset has no rows")]
    Empty,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("feature index {index} exceeds d = {d}")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("cannot split {rows} rows across {n} clients")]
    TooFewRows { rows: usize, n: usize },
    #[error("CSV {path}: {message}")]
    Csv { path: String, message: String },
    #[error("config: {0}")]
    Config(String),
}

impl DataError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Core(#[from] basiskit_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
