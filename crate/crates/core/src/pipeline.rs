//! Split protocols and the two-stage epoch loader.
//!
//! Stage one samples index blocks from a seeded permutation; stage two
//! collates each block (gather rows, transform, attach negatives). Blocks can
//! be collated on a worker pool but are always delivered in block order.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{AtomicError, Frame};
use crate::parallel::ordered_map;
use crate::seed::{indexed_rng, stage_rng};

pub const TIMESTAMP_FIELD: &str = "timestamp";

/// Slack for ratio arithmetic (0.7 * 10 must give 7, not 8 after `ceil`).
const RATIO_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("split needs a `timestamp` field for temporal order")]
    MissingTimestamp,
    #[error("invalid split ratios {0:?}: need three positive values summing to 1")]
    InvalidRatios(Vec<f64>),
    #[error(transparent)]
    Atomic(#[from] AtomicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Ratio,
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOrder {
    Temporal,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub scheme: SplitScheme,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_order")]
    pub order: SplitOrder,
}

fn default_ratios() -> Vec<f64> {
    vec![0.8, 0.1, 0.1]
}

fn default_order() -> SplitOrder {
    SplitOrder::Temporal
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.scheme == SplitScheme::Ratio {
            check_ratios(&self.ratios)?;
        }
        Ok(())
    }

    pub fn apply(&self, inter: &Frame, seed: u64) -> Result<SplitResult, SplitError> {
        match self.scheme {
            SplitScheme::Ratio => ratio_split(inter, &self.ratios, self.order, seed),
            SplitScheme::LeaveOneOut => leave_one_out(inter),
        }
    }
}

fn check_ratios(ratios: &[f64]) -> Result<[f64; 3], SplitError> {
    let bad = || SplitError::InvalidRatios(ratios.to_vec());
    let r: [f64; 3] = ratios.try_into().map_err(|_| bad())?;
    if r.iter().any(|x| !(*x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > RATIO_EPS {
        return Err(bad());
    }
    Ok(r)
}

/// Row indices into the filtered interaction frame, each list ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitResult {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitResult {
    fn sorted(mut self) -> Self {
        self.train.sort_unstable();
        self.valid.sort_unstable();
        self.test.sort_unstable();
        self
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rows of each user, in first-appearance order of users.
fn rows_by_user(inter: &Frame) -> Result<Vec<Vec<usize>>, SplitError> {
    let keys = inter.row_keys("user_id")?;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: Vec<Option<usize>> = Vec::new();
    for (row, &k) in keys.iter().enumerate() {
        let k = k as usize;
        if slot.len() <= k {
            slot.resize(k + 1, None);
        }
        let g = *slot[k].get_or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(row);
    }
    Ok(groups)
}

fn timestamps(inter: &Frame) -> Result<&[f64], SplitError> {
    match inter.floats(TIMESTAMP_FIELD) {
        Ok(ts) => Ok(ts),
        Err(AtomicError::MissingField(_)) => Err(SplitError::MissingTimestamp),
        Err(e) => Err(e.into()),
    }
}

fn sort_temporal(rows: &mut [usize], ts: &[f64]) {
    // Stable: equal stamps keep file order.
    rows.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
}

fn ceil_share(ratio: f64, count: usize) -> usize {
    (ratio * count as f64 - RATIO_EPS).ceil().max(0.0) as usize
}

/// Per-user (train, valid, test) sizes: train gets `ceil(r0 * c)`, valid gets
/// `ceil(r1 * c)` of what remains, test the rest. Users with fewer than three
/// rows go entirely to train.
pub fn ratio_counts(ratios: [f64; 3], count: usize) -> (usize, usize, usize) {
    if count < 3 {
        return (count, 0, 0);
    }
    let train = ceil_share(ratios[0], count).min(count);
    let valid = ceil_share(ratios[1], count).min(count - train);
    (train, valid, count - train - valid)
}

pub fn ratio_split(
    inter: &Frame,
    ratios: &[f64],
    order: SplitOrder,
    seed: u64,
) -> Result<SplitResult, SplitError> {
    let ratios = check_ratios(ratios)?;
    let ts = match order {
        SplitOrder::Temporal => Some(timestamps(inter)?),
        SplitOrder::Random => None,
    };
    let mut rng = stage_rng(seed, "split");
    let mut out = SplitResult::default();
    for mut rows in rows_by_user(inter)? {
        match ts {
            Some(ts) => sort_temporal(&mut rows, ts),
            None => rows.shuffle(&mut rng),
        }
        let (train, valid, _) = ratio_counts(ratios, rows.len());
        out.train.extend_from_slice(&rows[..train]);
        out.valid.extend_from_slice(&rows[train..train + valid]);
        out.test.extend_from_slice(&rows[train + valid..]);
    }
    Ok(out.sorted())
}

/// Newest row per user to test, second newest to valid, the rest to train.
/// Two-row users get no valid row; one-row users are train only.
pub fn leave_one_out(inter: &Frame) -> Result<SplitResult, SplitError> {
    let ts = timestamps(inter)?;
    let mut out = SplitResult::default();
    for mut rows in rows_by_user(inter)? {
        sort_temporal(&mut rows, ts);
        let n = rows.len();
        match n {
            1 => out.train.push(rows[0]),
            2 => {
                out.train.push(rows[0]);
                out.test.push(rows[1]);
            }
            _ => {
                out.train.extend_from_slice(&rows[..n - 2]);
                out.valid.push(rows[n - 2]);
                out.test.push(rows[n - 1]);
            }
        }
    }
    Ok(out.sorted())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl BatchPlan {
    pub fn new(batch_size: usize, shuffle: bool, seed: u64) -> Self {
        assert!(batch_size >= 1, "batch_size must be at least 1");
        BatchPlan {
            batch_size,
            shuffle,
            seed,
        }
    }
}

/// Stage one: consecutive blocks of `batch_size` positions over `0..n`,
/// permuted first when shuffling. The last block may be short.
pub fn index_blocks(n: usize, plan: &BatchPlan) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if plan.shuffle {
        order.shuffle(&mut indexed_rng(plan.seed, "epoch", 0));
    }
    order
        .chunks(plan.batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Lazily collates each index block in order.
pub fn iterate_epoch<T, F>(n: usize, plan: &BatchPlan, mut collate: F) -> impl Iterator<Item = T>
where
    F: FnMut(usize, &[usize]) -> T,
{
    index_blocks(n, plan)
        .into_iter()
        .enumerate()
        .map(move |(b, block)| collate(b, &block))
}

/// Collates blocks on up to `workers` threads; results come back in block
/// order regardless of completion order.
pub fn collate_parallel<T, F>(blocks: &[Vec<usize>], workers: usize, collate: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[usize]) -> T + Sync,
{
    let numbered: Vec<(usize, &Vec<usize>)> = blocks.iter().enumerate().collect();
    ordered_map(&numbered, workers, |(b, block)| collate(*b, block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{parse_atomic_str, SourceKind};

    fn frame(rows: &[(&str, f64)]) -> Frame {
        let mut text = String::from("user_id:token\titem_id:token\ttimestamp:float\n");
        for (k, (u, t)) in rows.iter().enumerate() {
            text.push_str(&format!("{u}\ti{k}\t{t}\n"));
        }
        parse_atomic_str(&text, SourceKind::Inter).unwrap()
    }

    #[test]
    fn ratio_ten_rows() {
        let rows: Vec<(&str, f64)> = (0..10).map(|t| ("u", (10 - t) as f64)).collect();
        let f = frame(&rows);
        let s = ratio_split(&f, &[0.8, 0.1, 0.1], SplitOrder::Temporal, 0).unwrap();
        // Timestamps descend with row index, so the oldest rows are 2..=9.
        assert_eq!(s.train, (2..10).collect::<Vec<_>>());
        assert_eq!(s.valid, vec![1]);
        assert_eq!(s.test, vec![0]);
    }

    #[test]
    fn ratio_counts_rule() {
        assert_eq!(ratio_counts([0.8, 0.1, 0.1], 2), (2, 0, 0));
        assert_eq!(ratio_counts([0.8, 0.1, 0.1], 10), (8, 1, 1));
        assert_eq!(ratio_counts([0.8, 0.1, 0.1], 3), (3, 0, 0));
        assert_eq!(ratio_counts([0.8, 0.1, 0.1], 11), (9, 2, 0));
        assert_eq!(ratio_counts([0.7, 0.2, 0.1], 10), (7, 2, 1));
        assert_eq!(ratio_counts([0.6, 0.2, 0.2], 20), (12, 4, 4));
    }

    #[test]
    fn small_users_train_only() {
        let f = frame(&[("a", 1.0), ("a", 2.0), ("b", 1.0)]);
        let s = ratio_split(&f, &[0.8, 0.1, 0.1], SplitOrder::Random, 3).unwrap();
        assert_eq!(s.train, vec![0, 1, 2]);
        assert!(s.valid.is_empty() && s.test.is_empty());
    }

    #[test]
    fn ratio_validation() {
        let f = frame(&[("a", 1.0)]);
        assert!(matches!(
            ratio_split(&f, &[0.8, 0.1], SplitOrder::Random, 0),
            Err(SplitError::InvalidRatios(_))
        ));
        assert!(matches!(
            ratio_split(&f, &[0.8, 0.05, 0.05], SplitOrder::Random, 0),
            Err(SplitError::InvalidRatios(_))
        ));
        let no_ts = parse_atomic_str("user_id:token\titem_id:token\nu\ti\n", SourceKind::Inter)
            .unwrap();
        assert!(matches!(
            ratio_split(&no_ts, &[0.8, 0.1, 0.1], SplitOrder::Temporal, 0),
            Err(SplitError::MissingTimestamp)
        ));
        assert!(ratio_split(&no_ts, &[0.8, 0.1, 0.1], SplitOrder::Random, 0).is_ok());
        assert!(matches!(leave_one_out(&no_ts), Err(SplitError::MissingTimestamp)));
    }

    #[test]
    fn leave_one_out_examples() {
        let f = frame(&[("u", 3.0), ("u", 1.0), ("u", 2.0), ("v", 5.0), ("w", 1.0), ("w", 4.0)]);
        let s = leave_one_out(&f).unwrap();
        assert_eq!(s.train, vec![1, 3, 4]);
        assert_eq!(s.valid, vec![2]);
        assert_eq!(s.test, vec![0, 5]);
    }

    #[test]
    fn leave_one_out_ties_follow_file_order() {
        let f = frame(&[("u", 1.0), ("u", 2.0), ("u", 2.0), ("u", 2.0)]);
        let s = leave_one_out(&f).unwrap();
        assert_eq!(s.train, vec![0, 1]);
        assert_eq!(s.valid, vec![2]);
        assert_eq!(s.test, vec![3]);
        let reparsed = parse_atomic_str(&f.to_atomic_string(), SourceKind::Inter).unwrap();
        assert_eq!(leave_one_out(&reparsed).unwrap(), s);
    }

    #[test]
    fn blocks_without_shuffle() {
        let plan = BatchPlan::new(4, false, 0);
        assert_eq!(
            index_blocks(10, &plan),
            vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]]
        );
        assert!(index_blocks(0, &plan).is_empty());
    }

    #[test]
    fn shuffled_blocks_are_reproducible_and_complete() {
        for (n, bs) in [(1, 1), (17, 4), (100, 7), (64, 64), (5, 100)] {
            let plan = BatchPlan::new(bs, true, 42);
            let a = index_blocks(n, &plan);
            assert_eq!(a, index_blocks(n, &plan));
            let mut all: Vec<usize> = a.concat();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn parallel_collation_keeps_block_order() {
        let plan = BatchPlan::new(3, true, 9);
        let blocks = index_blocks(50, &plan);
        let serial: Vec<Vec<usize>> = iterate_epoch(50, &plan, |_, b| b.to_vec()).collect();
        for workers in [1, 2, 4, 8] {
            let par = collate_parallel(&blocks, workers, |_, b| b.to_vec());
            assert_eq!(par, serial);
        }
    }
}
