use std::path::PathBuf;

use thiserror::Error;

use crate::training::TrainReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("window error: need at least {needed} rows, have {available}")]
    Window { needed: usize, available: usize },
    #[error("eda error: {0}")]
    Eda(String),
    #[error("decomposition error: {0}")]
    Decomp(String),
    #[error("normalization error: {0}")]
    Norm(String),
    #[error("numerical error: {0}")]
    Numerics(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training aborted after {} epochs: {reason}", report.epochs_run)]
    TrainingAborted {
        reason: String,
        report: Box<TrainReport>,
    },
    #[error("{path}: {source}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
