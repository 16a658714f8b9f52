use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported image format, expected binary PGM (P5) with maxval 255: {detail}")]
    UnsupportedImage { path: PathBuf, detail: String },
    #[error("{path}:{line}: malformed pts header: {detail}")]
    PtsHeader {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path}: pts point count mismatch: header says {expected}, found {actual}")]
    PtsCount {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}:{line}: non-numeric pts coordinate {token:?}")]
    PtsCoordinate {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: malformed manifest line: {detail}")]
    Manifest {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path}:{line}: {detail}")]
    Config {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("invalid setting {key}={value}: {detail}")]
    Setting {
        key: String,
        value: String,
        detail: String,
    },
    #[error("{path}: invalid model file: {detail}")]
    Model { path: PathBuf, detail: String },
    #[error(transparent)]
    Core(#[from] gnfalign_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
