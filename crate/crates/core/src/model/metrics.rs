//! Full-ranking top-K metrics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::parallel::ordered_map;

/// Metric names in report order.
pub const METRIC_NAMES: [&str; 5] = ["recall", "mrr", "ndcg", "hit", "precision"];

/// Higher score first, lower item id on ties.
fn rank_order(scores: &[f64], a: u32, b: u32) -> Ordering {
    scores[b as usize]
        .total_cmp(&scores[a as usize])
        .then(a.cmp(&b))
}

/// The `k` best unmasked items, best first.
pub fn rank_top_k(scores: &[f64], masked: impl Fn(u32) -> bool, k: usize) -> Vec<u32> {
    let mut candidates: Vec<u32> = (0..scores.len() as u32).filter(|&i| !masked(i)).collect();
    if k == 0 {
        return Vec::new();
    }
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    candidates
}

/// `[recall, mrr, ndcg, hit, precision]` at `k` for one ranked list.
pub fn user_metrics(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> [f64; 5] {
    let top = &ranked[..ranked.len().min(k)];
    let mut hits = 0usize;
    let mut first_hit = None;
    let mut dcg = 0.0;
    for (pos, item) in top.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            first_hit.get_or_insert(pos + 1);
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..relevant.len().min(k))
        .map(|pos| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    [
        hits as f64 / relevant.len() as f64,
        first_hit.map_or(0.0, |r| 1.0 / r as f64),
        dcg / ideal,
        if hits > 0 { 1.0 } else { 0.0 },
        hits as f64 / k as f64,
    ]
}

/// Users to rank, each with relevant target items and masked history items.
#[derive(Debug, Clone, Default)]
pub struct EvalSet {
    pub users: Vec<u32>,
    pub relevant: Vec<HashSet<u32>>,
    pub masked: Vec<HashSet<u32>>,
    /// Users whose target items were all masked.
    pub skipped: usize,
}

impl EvalSet {
    /// Builds the evaluation targets from parallel user/item columns: rows in
    /// `history` are masked, rows in `target` are relevant. Users are visited
    /// in ascending id order.
    pub fn new(users: &[u32], items: &[u32], history: &[usize], target: &[usize]) -> Self {
        let mut relevant: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
        for &r in target {
            relevant.entry(users[r]).or_default().insert(items[r]);
        }
        let mut masked: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
        for &r in history {
            if relevant.contains_key(&users[r]) {
                masked.entry(users[r]).or_default().insert(items[r]);
            }
        }
        let mut out = EvalSet::default();
        for (user, rel) in relevant {
            let mask = masked.remove(&user).unwrap_or_default();
            let rel: HashSet<u32> = rel.difference(&mask).copied().collect();
            if rel.is_empty() {
                out.skipped += 1;
                continue;
            }
            out.users.push(user);
            out.relevant.push(rel);
            out.masked.push(mask);
        }
        out
    }
}

/// Averages of each metric over evaluated users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    /// Keyed `recall@K`, `mrr@K`, `ndcg@K`, `hit@K`, `precision@K`.
    pub values: IndexMap<String, f64>,
    pub users_evaluated: usize,
    pub users_skipped: usize,
}

impl MetricReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    /// Tab-separated `key\tvalue` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "users_evaluated\t{}", self.users_evaluated);
        let _ = writeln!(out, "users_skipped\t{}", self.users_skipped);
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }
}

/// Ranks all unmasked items for every user and averages the five metrics
/// for each cutoff in `ks`. Per-user rows are summed in user order, so the
/// result does not depend on `workers`.
pub fn evaluate_topk<S: Scorer + ?Sized>(
    scorer: &S,
    eval: &EvalSet,
    ks: &[usize],
    workers: usize,
) -> MetricReport {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let max_k = ks.last().copied().unwrap_or(0);
    let positions: Vec<usize> = (0..eval.users.len()).collect();
    let per_user = ordered_map(&positions, workers, |&p| {
        let mut scores = vec![0.0; scorer.item_count()];
        scorer.score_items(eval.users[p], &mut scores);
        let mask = &eval.masked[p];
        let ranked = rank_top_k(&scores, |i| mask.contains(&i), max_k);
        ks.iter()
            .map(|&k| user_metrics(&ranked, &eval.relevant[p], k))
            .collect::<Vec<_>>()
    });
    let mut sums = vec![[0.0f64; 5]; ks.len()];
    for row in &per_user {
        for (acc, m) in sums.iter_mut().zip(row) {
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
        }
    }
    let n = per_user.len().max(1) as f64;
    let mut values = IndexMap::new();
    for (k, acc) in ks.iter().zip(&sums) {
        for (name, total) in METRIC_NAMES.iter().zip(acc) {
            values.insert(format!("{name}@{k}"), total / n);
        }
    }
    MetricReport {
        ks,
        values,
        users_evaluated: per_user.len(),
        users_skipped: eval.skipped,
    }
}
