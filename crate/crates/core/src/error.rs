use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: value count mismatch (expected {1}, found {2})")]
    ValueCount(PathBuf, usize, usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("projection singularity at lon={lon}, lat={lat}")]
    ProjectionSingularity { lon: f64, lat: f64 },

    #[error("degenerate calibration fit: {0}")]
    DegenerateCalibration(String),

    #[error("unresolvable calibration graph: {0}")]
    UnresolvableCalibration(String),

    #[error("gap year {0}: no products")]
    GapYear(i32),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("power model domain violation: {0}")]
    PowerDomain(String),

    #[error("exponential model domain violation: {0}")]
    ExponentialDomain(String),

    #[error("unmapped province {0}")]
    UnmappedProvince(String),

    #[error("missing region {0}")]
    MissingRegion(u32),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn csv_error(path: &std::path::Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

