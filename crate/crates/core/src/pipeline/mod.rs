//! Run configuration, offline simulation and the mine / eval drivers.

mod config;
mod run;
pub mod simulate;

pub use config::{
    JudgeMode, JudgeSettings, Parallelism, Paths, PipelineConfig, ScoutEntry, SelectionMode, ENV_PREFIX,
};
pub use run::{
    evaluate_paths, load_audit, predictions_from_index, run_eval, run_mine, select_keyframes, FrameAudit,
    FrameFailure, RunOptions, RunSummary, ScoutFailure,
};

use crate::eval::EvalError;
use crate::index::IndexError;
use crate::inventory::InventoryError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("required file not found: {0}")]
    MissingFile(String),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
