use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed dataset header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("payload of {path} does not match header dimensions: expected {expected} bytes, found {actual}")]
    DimensionMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("carrier {carrier_hz} Hz lies outside the band [{start_hz}, {stop_hz}] Hz")]
    CarrierOutOfBand {
        carrier_hz: f64,
        start_hz: f64,
        stop_hz: f64,
    },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is indefinite: pivot {pivot:e} at index {index}")]
    Indefinite { index: usize, pivot: f64 },

    #[error("row {row} has zero variance")]
    DegenerateRow { row: usize },

    #[error("channel vector is zero")]
    DegenerateChannel,

    #[error("MA configuration {m}x{n} does not fit a {rows}x{cols} port grid")]
    Configuration {
        m: usize,
        n: usize,
        rows: usize,
        cols: usize,
    },

    #[error("movable region {index} contains no ports")]
    EmptyRegion { index: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
