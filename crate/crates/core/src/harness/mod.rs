//! Metrics, shift audits, training runs and the tooling behind the CLI.

pub mod audit;
pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod tools;
pub mod train;

use thiserror::Error;

use crate::ctensor::TensorError;
use crate::cvnn::CvnnError;
use crate::dataio::DataError;
use crate::polsar::PolsarError;
use crate::select::SelectError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] CvnnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Polsar(#[from] PolsarError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("non-finite loss in epoch {epoch} (batch {batch})")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("metric: {0}")]
    Metric(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub use audit::{audit, crs_classify, crs_reconstruct, crs_segment, shift_set, AuditReport, Task};
pub use config::RunConfig;
pub use metrics::{macro_f1, mse, overall_accuracy};
pub use train::{train, EpochRecord, RunSummary};
