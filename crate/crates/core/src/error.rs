use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("wrong control kind: expected {expected}, got {got}")]
    Kind {
        expected: &'static str,
        got: &'static str,
    },
    #[error("pitch {pitch:.6} rad entered the gimbal singularity band")]
    Singularity { pitch: f64 },
    #[error("outside model domain: {0}")]
    ModelDomain(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{path}: row {row} (line {line}): {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("at t = {time:.6} s: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the simulation time it occurred at.
    pub fn at(self, time: f64) -> Self {
        Error::AtTime {
            time,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
