use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric fault{}: {what}", fmt_cell(.cell))]
    NumericFault {
        cell: Option<(usize, usize)>,
        what: String,
    },

    #[error("numeric fault in body dynamics: {0}")]
    BodyFault(String),

    /// A body marker left the fluid domain. The environment maps this onto a
    /// failed episode rather than an aborted one.
    #[error("marker {index} left the domain at ({x:.4}, {y:.4})")]
    OutOfDomain { index: usize, x: f64, y: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training halted: {0}")]
    TrainingHalted(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_cell(cell: &Option<(usize, usize)>) -> String {
    match cell {
        Some((x, y)) => format!(" at cell ({x}, {y})"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for faults raised by the numerical solvers (as opposed to
    /// configuration or episode-level conditions).
    pub fn is_numeric_fault(&self) -> bool {
        matches!(self, Error::NumericFault { .. } | Error::BodyFault(_))
    }
}
