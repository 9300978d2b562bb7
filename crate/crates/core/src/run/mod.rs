//! End-to-end runs: config, dataset preparation, training, evaluation,
//! tuning, and the manifest that replays them.

mod config;
mod data;
mod exec;
mod synthetic;

use std::fmt;

use serde::Serialize;

pub use config::{
    parse_overrides, DatasetConfig, EvalConfig, FeatureConfig, FilterConfig, LoaderConfig, PadSide,
    Reproducibility, RunConfig, TransformConfig, TuneConfig, TUNABLE,
};
pub use data::{
    cmd_stats, convert_delimited, filter_dataset, load_raw, Filtered, prepare, split_frames, DatasetStats,
    Prepared, RawDataset,
};
pub use exec::{cmd_evaluate, cmd_run, cmd_tune, RunManifest, RunOutcome, TuneSummary, MASK_TOKEN};
pub use synthetic::{generate_synthetic, write_synthetic, SyntheticData, SyntheticSpec};

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Filter,
    Features,
    Split,
    Loader,
    Train,
    Evaluate,
    Tune,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

/// A failed run, tagged with its stage and error class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl RunError {
    pub fn new(stage: Stage, kind: ErrorKind, message: impl Into<String>) -> Self {
        RunError {
            stage,
            kind,
            message: message.into(),
        }
    }

    pub fn config(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorKind::Config, message)
    }

    pub fn data(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Data, message.to_string())
    }

    pub fn runtime(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorKind::Runtime, message.to_string())
    }

    /// 2 for config errors, 3 for data errors, 4 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Runtime => 4,
        }
    }

    /// Single-line JSON record: `{"error": {...}}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stage = serde_json::to_value(self.stage).unwrap_or_default();
        write!(f, "[{}] {}", stage.as_str().unwrap_or("?"), self.message)
    }
}

impl std::error::Error for RunError {}
