use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("input contains non-finite values: {0}")]
    NonFinite(String),

    #[error("found {found} of {expected} resonance features")]
    FeatureCount { found: usize, expected: usize },

    #[error("no inversion start converged ({0})")]
    InversionFailed(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("tone at {f0} Hz is at or above the Nyquist frequency {nyquist} Hz; the signal is under-sampled and would alias")]
    Aliasing { f0: f64, nyquist: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate position (y={y_mm} mm, z={z_mm} mm) in {first} and {second}")]
    DuplicatePosition {
        y_mm: f64,
        z_mm: f64,
        first: String,
        second: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
