//! Recommender benchmarking engine.
//!
//! Data flows from atomic files through k-core filtering and splitting into
//! a two-stage loader, then into a BPR matrix-factorization model that is
//! scored with full-ranking top-K metrics. A tuning harness drives grid,
//! random and TPE searches over a worker pool.

pub mod atomic;
pub mod feature;
pub mod filtering;
pub mod parallel;
pub mod seed;
pub mod sampling;
pub mod seq;
pub mod model;
pub mod pipeline;
pub mod tune;
pub mod run;
