use thiserror::Error;

use crate::optimizer::FitReport;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV row could not be parsed. `row` is 1-based over data rows.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// Data violates a domain constraint (type id out of range, location outside S, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A selected intensity fell below the positivity floor.
    #[error("intensity {value:e} at event {event} is below the positivity floor")]
    IntensityFloor { event: usize, value: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The thinning bound was exceeded by the realized intensity.
    #[error("thinning bound violated at t={t}: intensity {intensity} > bound {bound}")]
    Soundness { t: f64, intensity: f64, bound: f64 },

    /// Training stopped on a non-finite or invalid objective; carries the last finite report.
    #[error("training diverged at epoch {epoch}: {msg}")]
    Training {
        epoch: usize,
        msg: String,
        report: Box<FitReport>,
    },

    #[error("finite-difference probe failed on {coordinate}: {source}")]
    Oracle {
        coordinate: String,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 1,
            Error::Parse { .. }
            | Error::Domain(_)
            | Error::Io { .. }
            | Error::Serde(_)
            | Error::Evaluation(_) => 2,
            Error::IntensityFloor { .. }
            | Error::Numerical(_)
            | Error::Degenerate(_)
            | Error::Soundness { .. }
            | Error::Training { .. }
            | Error::Oracle { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
