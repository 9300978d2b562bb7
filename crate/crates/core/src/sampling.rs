//! Negative samplers for pairwise training.
//!
//! - RNS: uniform over items the user has not interacted with.
//! - PNS: `p(i) ∝ deg(i)^alpha` over training-split degrees, via an alias table.
//! - DNS: draw `M` RNS candidates and keep the one the current model scores
//!   highest.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("user {0} has no eligible negative items")]
    NoNegativesAvailable(u32),
    #[error("every item has zero degree")]
    AllDegreesZero,
    #[error("alias table needs a positive total weight")]
    AllZeroWeights,
    #[error("invalid weight {0}")]
    InvalidWeight(f64),
    #[error("invalid sampler spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Rns,
    Pns,
    Dns,
}

/// Mirrors the `train_neg_sample_args` config block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub strategy: Strategy,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_one", rename = "candidates")]
    pub dns_candidates: usize,
    #[serde(default = "default_one")]
    pub per_positive: usize,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_one() -> usize {
    1
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            strategy: Strategy::Rns,
            alpha: 1.0,
            dns_candidates: 1,
            per_positive: 1,
        }
    }
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if !self.alpha.is_finite() {
            return Err(SamplingError::InvalidSpec(format!("alpha {}", self.alpha)));
        }
        if self.dns_candidates == 0 {
            return Err(SamplingError::InvalidSpec("candidates must be >= 1".into()));
        }
        if self.per_positive == 0 {
            return Err(SamplingError::InvalidSpec("per_positive must be >= 1".into()));
        }
        Ok(())
    }
}

/// Walker alias table: O(n) construction, O(1) draws.
#[derive(Debug, Clone)]
pub struct AliasTable {
    probability: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self, SamplingError> {
        if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(SamplingError::InvalidWeight(w));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SamplingError::AllZeroWeights);
        }
        let n = weights.len();
        let mut probability: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| probability[i] < 1.0);
        while !small.is_empty() && !large.is_empty() {
            let s = small.pop().expect("nonempty");
            let l = *large.last().expect("nonempty");
            alias[s] = l;
            probability[l] -= 1.0 - probability[s];
            if probability[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in small.into_iter().chain(large) {
            probability[i] = 1.0;
        }
        Ok(AliasTable { probability, alias })
    }

    pub fn len(&self) -> usize {
        self.probability.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probability.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let column = rng.gen_range(0..self.probability.len());
        if rng.gen::<f64>() < self.probability[column] {
            column
        } else {
            self.alias[column]
        }
    }
}

/// Per-user training positives.
#[derive(Debug, Clone, Default)]
pub struct PositiveSet {
    sets: Vec<HashSet<u32>>,
}

impl PositiveSet {
    pub fn from_pairs(users: &[u32], items: &[u32]) -> Self {
        let mut out = PositiveSet::default();
        for (&u, &i) in users.iter().zip(items) {
            out.insert(u, i);
        }
        out
    }

    pub fn insert(&mut self, user: u32, item: u32) {
        let u = user as usize;
        if self.sets.len() <= u {
            self.sets.resize_with(u + 1, HashSet::new);
        }
        self.sets[u].insert(item);
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.sets
            .get(user as usize)
            .is_some_and(|s| s.contains(&item))
    }

    pub fn count(&self, user: u32) -> usize {
        self.sets.get(user as usize).map_or(0, HashSet::len)
    }

    pub fn items(&self, user: u32) -> impl Iterator<Item = u32> + '_ {
        self.sets.get(user as usize).into_iter().flatten().copied()
    }
}

/// Item degrees on the training split and the `deg^alpha` alias table over
/// items with nonzero degree.
#[derive(Debug, Clone)]
pub struct DegreeTable {
    degrees: Vec<u64>,
    alpha: f64,
    support: Vec<u32>,
    alias: AliasTable,
}

impl DegreeTable {
    pub fn from_degrees(degrees: Vec<u64>, alpha: f64) -> Result<Self, SamplingError> {
        let support: Vec<u32> = (0..degrees.len() as u32)
            .filter(|&i| degrees[i as usize] > 0)
            .collect();
        if support.is_empty() {
            return Err(SamplingError::AllDegreesZero);
        }
        let weights: Vec<f64> = support
            .iter()
            .map(|&i| (degrees[i as usize] as f64).powf(alpha))
            .collect();
        let alias = AliasTable::new(&weights)?;
        Ok(DegreeTable {
            degrees,
            alpha,
            support,
            alias,
        })
    }

    /// Counts occurrences of each item id among `items`.
    pub fn from_items(items: &[u32], item_count: usize, alpha: f64) -> Result<Self, SamplingError> {
        let mut degrees = vec![0u64; item_count];
        for &i in items {
            degrees[i as usize] += 1;
        }
        Self::from_degrees(degrees, alpha)
    }

    pub fn degree(&self, item: u32) -> u64 {
        self.degrees.get(item as usize).copied().unwrap_or(0)
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Exact sampling probability of `item` before rejecting positives.
    pub fn probability(&self, item: u32) -> f64 {
        let d = self.degree(item);
        if d == 0 {
            return 0.0;
        }
        let total: f64 = self
            .support
            .iter()
            .map(|&i| (self.degrees[i as usize] as f64).powf(self.alpha))
            .sum();
        (d as f64).powf(self.alpha) / total
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.support[self.alias.sample(rng)]
    }
}

/// Rejection sampling is replaced by enumeration above this positive share.
const DENSE_POSITIVE_SHARE: f64 = 0.9;
/// Consecutive PNS rejections before switching to the exact complement.
const PNS_REJECTION_LIMIT: usize = 64;

/// `n` uniform draws (with replacement) from items the user has not seen.
pub fn sample_rns<R: Rng + ?Sized>(
    user: u32,
    n: usize,
    positives: &PositiveSet,
    item_count: usize,
    rng: &mut R,
) -> Result<Vec<u32>, SamplingError> {
    let positive_count = positives.count(user);
    if positive_count >= item_count
        && (0..item_count as u32).all(|i| positives.contains(user, i))
    {
        return Err(SamplingError::NoNegativesAvailable(user));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if positive_count as f64 / item_count as f64 > DENSE_POSITIVE_SHARE {
        let complement: Vec<u32> = (0..item_count as u32)
            .filter(|&i| !positives.contains(user, i))
            .collect();
        return Ok((0..n)
            .map(|_| complement[rng.gen_range(0..complement.len())])
            .collect());
    }
    Ok((0..n)
        .map(|_| loop {
            let item = rng.gen_range(0..item_count as u32);
            if !positives.contains(user, item) {
                break item;
            }
        })
        .collect())
}

/// `n` popularity-biased draws rejecting the user's positives.
pub fn sample_pns<R: Rng + ?Sized>(
    user: u32,
    n: usize,
    degrees: &DegreeTable,
    positives: &PositiveSet,
    rng: &mut R,
) -> Result<Vec<u32>, SamplingError> {
    let mut out = Vec::with_capacity(n);
    let mut fallback: Option<(Vec<u32>, AliasTable)> = None;
    while out.len() < n {
        if let Some((items, table)) = &fallback {
            out.push(items[table.sample(rng)]);
            continue;
        }
        let mut accepted = false;
        for _ in 0..PNS_REJECTION_LIMIT {
            let item = degrees.draw(rng);
            if !positives.contains(user, item) {
                out.push(item);
                accepted = true;
                break;
            }
        }
        if !accepted {
            let items: Vec<u32> = degrees
                .support
                .iter()
                .copied()
                .filter(|&i| !positives.contains(user, i))
                .collect();
            if items.is_empty() {
                return Err(SamplingError::NoNegativesAvailable(user));
            }
            let weights: Vec<f64> = items
                .iter()
                .map(|&i| (degrees.degree(i) as f64).powf(degrees.alpha))
                .collect();
            let table = AliasTable::new(&weights)?;
            fallback = Some((items, table));
        }
    }
    Ok(out)
}

/// One dynamic negative: the highest-scoring of `candidates` RNS draws,
/// ties going to the lowest item id.
pub fn sample_dns<R, S>(
    user: u32,
    positives: &PositiveSet,
    item_count: usize,
    candidates: usize,
    scorer: S,
    rng: &mut R,
) -> Result<u32, SamplingError>
where
    R: Rng + ?Sized,
    S: Fn(u32, u32) -> f64,
{
    let drawn = sample_rns(user, candidates.max(1), positives, item_count, rng)?;
    Ok(select_hardest(user, &drawn, scorer))
}

/// Argmax of `scorer` over `candidates`, lowest id on ties.
pub fn select_hardest<S: Fn(u32, u32) -> f64>(user: u32, candidates: &[u32], scorer: S) -> u32 {
    let mut best = candidates[0];
    let mut best_score = scorer(user, best);
    for &item in &candidates[1..] {
        let score = scorer(user, item);
        match score.total_cmp(&best_score) {
            std::cmp::Ordering::Greater => {
                best = item;
                best_score = score;
            }
            std::cmp::Ordering::Equal if item < best => best = item,
            _ => {}
        }
    }
    best
}

/// Sampler bound to one training split.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    spec: SamplerSpec,
    item_count: usize,
    degrees: Option<DegreeTable>,
}

impl NegativeSampler {
    pub fn new(
        spec: SamplerSpec,
        train_items: &[u32],
        item_count: usize,
    ) -> Result<Self, SamplingError> {
        spec.validate()?;
        let degrees = match spec.strategy {
            Strategy::Pns => Some(DegreeTable::from_items(train_items, item_count, spec.alpha)?),
            _ => None,
        };
        Ok(NegativeSampler {
            spec,
            item_count,
            degrees,
        })
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    /// `per_positive` negatives for one positive row of `user`.
    pub fn negatives<R, S>(
        &self,
        user: u32,
        positives: &PositiveSet,
        scorer: S,
        rng: &mut R,
    ) -> Result<Vec<u32>, SamplingError>
    where
        R: Rng + ?Sized,
        S: Fn(u32, u32) -> f64,
    {
        let n = self.spec.per_positive;
        match self.spec.strategy {
            Strategy::Rns => sample_rns(user, n, positives, self.item_count, rng),
            Strategy::Pns => sample_pns(
                user,
                n,
                self.degrees.as_ref().expect("PNS sampler has degrees"),
                positives,
                rng,
            ),
            Strategy::Dns => (0..n)
                .map(|_| {
                    sample_dns(
                        user,
                        positives,
                        self.item_count,
                        self.spec.dns_candidates,
                        &scorer,
                        rng,
                    )
                })
                .collect(),
        }
    }
}
