//! Experiment orchestration: training loops, the continual-learning
//! protocol, parameter sweeps, summary statistics and report output.

mod config;
mod experiment;
mod report;
mod stats;
mod sweep;
mod three_layer;
mod train;

pub use config::{load_task_data, AxisSpec, GridSpec, Method, RunConfig, Seeds};
pub use experiment::{run_experiment, run_experiment_with, RunRecord, RunStatus, RECORD_VERSION};
pub use report::{analyze, emit_report, format_float, load_records, metrics_csv, render_svg, CSV_COLUMNS};
pub use stats::{average_ranks, spearman};
pub use sweep::{sweep_grid, sweep_grid_with, SweepPoint, SweepRow, SweepTable};
pub use three_layer::{run_three_layer, synthetic_tasks, ToyTask};
pub use train::{epoch_order, evaluate, train_task, EpochLog, TrainMode};

use thiserror::Error;

use crate::data::{CacheError, DataError};
use crate::decomposition::DecompositionError;
use crate::ewc::EwcError;
use crate::linalg::LinalgError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{failed} of {total} sweep points failed")]
    Partial { failed: usize, total: usize },
    #[error("run failed during {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn at(self, stage: &'static str) -> Self {
        match self {
            e @ HarnessError::Stage { .. } => e,
            e => HarnessError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numerical, 5 partial
    /// sweep, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Numerical(_) => 4,
            HarnessError::Partial { .. } => 5,
            HarnessError::Stage { source, .. } => source.exit_code(),
            HarnessError::Io { .. } => 1,
        }
    }
}

impl From<CacheError> for HarnessError {
    fn from(e: CacheError) -> Self {
        HarnessError::Data(DataError::Cache(e))
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Label { .. } | ModelError::EmptyBatch => {
                HarnessError::Data(DataError::Inconsistent(e.to_string()))
            }
            ModelError::UnknownTask(_) | ModelError::FrozenReadout(_) | ModelError::Dims(_) => {
                HarnessError::Config(e.to_string())
            }
            ModelError::Linalg(e) => e.into(),
        }
    }
}

impl From<LinalgError> for HarnessError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Shape { .. } | LinalgError::Length { .. } => HarnessError::Config(e.to_string()),
            _ => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<DecompositionError> for HarnessError {
    fn from(e: DecompositionError) -> Self {
        match e {
            DecompositionError::Linalg(e) => e.into(),
            DecompositionError::Model(e) => e.into(),
            DecompositionError::Dims(_) | DecompositionError::Domain(_) => HarnessError::Config(e.to_string()),
            DecompositionError::Unavailable(_) => HarnessError::Numerical(e.to_string()),
        }
    }
}

impl From<EwcError> for HarnessError {
    fn from(e: EwcError) -> Self {
        match e {
            EwcError::Model(e) => e.into(),
            EwcError::Linalg(e) => e.into(),
            EwcError::EmptyDataset(_) => HarnessError::Data(DataError::Inconsistent(e.to_string())),
            EwcError::BatchSize | EwcError::Lambda(_) => HarnessError::Config(e.to_string()),
        }
    }
}
