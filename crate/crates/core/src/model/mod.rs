//! Pairwise matrix factorization, a popularity control, and full-ranking
//! top-K evaluation.
//!
//! Item and user indices here are dense from 0; callers shift remapped ids
//! (where 0 is the pad) down by one.

mod bpr;
mod checkpoint;
mod metrics;
mod popularity;

pub use bpr::{
    bpr_triple_gradient, bpr_triple_loss, train_bpr, MfModel, TrainConfig, TrainData, TrainError,
    TrainOutcome,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use metrics::{evaluate_topk, rank_top_k, user_metrics, EvalSet, MetricReport, METRIC_NAMES};
pub use popularity::PopularityModel;

/// Anything that can score every item for a user.
pub trait Scorer: Sync {
    fn item_count(&self) -> usize;

    /// Writes the score of every item into `out` (length `item_count`).
    fn score_items(&self, user: u32, out: &mut [f64]);
}
