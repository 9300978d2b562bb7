//! Hyperparameter search: grid, random and TPE over a worker pool.

mod scheduler;
mod search;
mod space;
mod tpe;

use thiserror::Error;

pub use scheduler::{
    best_config, best_trial, run_tuning, trial_log, TrialRecord, TrialStatus, TuneStrategy,
    TunerSpec, TuningOutcome,
};
pub use search::{grid_search, random_search, sample_assignment};
pub use space::{Assignment, Domain, Param, ParamValue, SearchSpace};
pub use tpe::{tpe_suggest, TpeSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuneError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("parameter `{0}` has a continuous domain and cannot be gridded")]
    ContinuousDomainInGrid(String),
    #[error("invalid tuner settings: {0}")]
    InvalidSpec(String),
}
