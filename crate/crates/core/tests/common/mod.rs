//! Reference implementations shared by the integration and acceptance
//! tests. Each one is written for clarity, not speed, and shares no code
//! with the library.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/atomic")
}

pub fn fixtures() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .expect("fixture dir")
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
}

/// Bucket of `x` found by scanning exact rational bucket edges
/// `lo + k (hi - lo) / n` for the last edge at or below the clamped `x`.
pub fn equal_distance_oracle(x: f64, lo: f64, hi: f64, n: u64) -> u64 {
    let exact = |v: f64| BigRational::from_float(v).expect("finite");
    let (lo_r, hi_r) = (exact(lo), exact(hi));
    let x_r = exact(x.clamp(lo, hi));
    // x >= lo + k w / n  <=>  n (x - lo) >= k w, all over a common denominator.
    let d = &x_r - &lo_r;
    let w = &hi_r - &lo_r;
    let left: BigInt = d.numer() * w.denom() * BigInt::from(n);
    let step: BigInt = w.numer() * d.denom();
    let mut edge = BigInt::zero();
    let mut bucket = 0;
    for k in 0..n {
        if left >= edge {
            bucket = k;
        } else {
            break;
        }
        edge += &step;
    }
    bucket
}

/// `floor(ln(x)^2)` evaluated with 200-bit binary floats, together with the
/// distance of `ln(x)^2` to the nearest integer.
pub fn logarithm_oracle(x: f64) -> (u64, f64) {
    use dashu_float::FBig;
    let v = FBig::<dashu_float::round::mode::HalfEven>::try_from(x)
        .expect("finite")
        .with_precision(200)
        .value();
    let l = v.ln();
    let sq = &l * &l;
    let floor = sq.floor();
    let frac = (&sq - &floor).to_f64().value();
    let floor = floor.to_f64().value();
    (floor as u64, frac.min(1.0 - frac))
}

/// Greatest bipartite (ku, ki)-core by repeated simultaneous peeling.
pub fn brute_k_core(users: &[u32], items: &[u32], ku: usize, ki: usize) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..users.len()).collect();
    loop {
        let mut du: HashMap<u32, usize> = HashMap::new();
        let mut di: HashMap<u32, usize> = HashMap::new();
        for &r in &alive {
            *du.entry(users[r]).or_default() += 1;
            *di.entry(items[r]).or_default() += 1;
        }
        let next: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&r| du[&users[r]] >= ku && di[&items[r]] >= ki)
            .collect();
        if next.len() == alive.len() {
            return alive;
        }
        alive = next;
    }
}

/// Greatest k-core of a triple list: entities counted once per triple they
/// touch, relations once per triple they label.
pub fn brute_kg_core(triples: &[(u32, u32, u32)], k: usize) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..triples.len()).collect();
    loop {
        let mut de: HashMap<u32, usize> = HashMap::new();
        let mut dr: HashMap<u32, usize> = HashMap::new();
        for &r in &alive {
            let (h, rel, t) = triples[r];
            *de.entry(h).or_default() += 1;
            if t != h {
                *de.entry(t).or_default() += 1;
            }
            *dr.entry(rel).or_default() += 1;
        }
        let next: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&r| {
                let (h, rel, t) = triples[r];
                de[&h] >= k && de[&t] >= k && dr[&rel] >= k
            })
            .collect();
        if next.len() == alive.len() {
            return alive;
        }
        alive = next;
    }
}

/// Recall, MRR, NDCG, Hit and Precision at `k` from a complete ranking
/// (score descending, item id ascending) of unmasked items.
pub fn metrics_oracle(scores: &[f64], masked: &HashSet<u32>, relevant: &HashSet<u32>, k: usize) -> [f64; 5] {
    let mut order: Vec<u32> = (0..scores.len() as u32).filter(|i| !masked.contains(i)).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    let top: Vec<u32> = order.into_iter().take(k).collect();
    let gains: Vec<f64> = top.iter().map(|i| if relevant.contains(i) { 1.0 } else { 0.0 }).collect();
    let hits: f64 = gains.iter().sum();
    let mrr = gains
        .iter()
        .position(|&g| g > 0.0)
        .map_or(0.0, |p| 1.0 / (p as f64 + 1.0));
    let dcg: f64 = gains
        .iter()
        .enumerate()
        .map(|(p, g)| g / (p as f64 + 2.0).log2())
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(|p| 1.0 / (p as f64 + 2.0).log2()).sum();
    [
        hits / relevant.len() as f64,
        mrr,
        dcg / idcg,
        if hits > 0.0 { 1.0 } else { 0.0 },
        hits / k as f64,
    ]
}

/// Per-user 8:1:1 sizes with integer arithmetic: train `ceil(8c/10)`, valid
/// `ceil(c/10)` capped by what is left, test the remainder; fewer than three
/// rows all go to train.
pub fn ratio_811_oracle(c: usize) -> (usize, usize, usize) {
    if c < 3 {
        return (c, 0, 0);
    }
    let train = (8 * c).div_ceil(10);
    let valid = c.div_ceil(10).min(c - train);
    (train, valid, c - train - valid)
}

/// Median of a small sample.
pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
