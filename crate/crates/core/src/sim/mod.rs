//! Experiment plumbing: configuration, runs, snapshots, histories and crack
//! growth post-processing.

pub mod config;
pub mod crack;
pub mod history;
pub mod runner;
pub mod vtk;

use thiserror::Error;

use crate::microstructure::MicrostructureError;
use crate::solver::SolverError;

pub use config::{CrackGeometry, ExperimentConfig, Setup, SnapshotCadence, SnapshotField};
pub use crack::{dadn_dk, stress_intensity_range, CrackGauge, GrowthRow, EDGE_CRACK_FACTOR};
pub use history::{read_history, write_history, HistoryRecord, HISTORY_HEADER};
pub use runner::{generate, postprocess, run_experiment, RunSummary};
pub use vtk::{FieldData, Snapshot};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("missing required configuration keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("configuration: {0}")]
    Config(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Microstructure(#[from] MicrostructureError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
