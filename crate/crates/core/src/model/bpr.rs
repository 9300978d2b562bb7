//! BPR matrix factorization trained with plain SGD.
//!
//! Per sampled triple `(u, i+, i-)` the loss is
//! `-ln σ(s(u,i+) - s(u,i-)) + λ (|p_u|² + |q_i+|² + |q_i-|²)`,
//! with `s(u,i) = p_u · q_i`.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Scorer;
use crate::pipeline::{iterate_epoch, BatchPlan};
use crate::sampling::{NegativeSampler, PositiveSet, SamplerSpec, SamplingError};
use crate::seed::{derive_indexed, derive_seed, indexed_rng, StageRng};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split is empty")]
    EmptyTrain,
    #[error("loss diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub epochs: usize,
    #[serde(rename = "embedding_size")]
    pub dim: usize,
    #[serde(skip)]
    pub batch_size: usize,
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub sampler: SamplerSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            l2_reg: 1e-4,
            epochs: 30,
            dim: 32,
            batch_size: 256,
            seed: 2022,
            sampler: SamplerSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return bad(format!("l2_reg {}", self.l2_reg));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.dim == 0 {
            return bad("embedding_size must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        self.sampler.validate()?;
        Ok(())
    }
}

/// Training positives as parallel (user, item) columns.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub users: Vec<u32>,
    pub items: Vec<u32>,
    pub user_count: usize,
    pub item_count: usize,
    pub positives: PositiveSet,
}

impl TrainData {
    pub fn new(users: Vec<u32>, items: Vec<u32>, user_count: usize, item_count: usize) -> Self {
        let positives = PositiveSet::from_pairs(&users, &items);
        TrainData {
            users,
            items,
            user_count,
            item_count,
            positives,
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// User and item factor matrices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub dim: usize,
}

impl MfModel {
    /// Factors drawn from N(0, 0.1² / √d).
    pub fn init(user_count: usize, item_count: usize, dim: usize, seed: u64) -> Self {
        let std = 0.1 / (dim as f64).sqrt().sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut rng = StageRng::seed_from_u64(derive_seed(seed, "init"));
        let mut draw = |n: usize| (0..n).map(|_| normal.sample(&mut rng)).collect::<Vec<f64>>();
        let user_factors = draw(user_count * dim);
        let item_factors = draw(item_count * dim);
        MfModel {
            user_factors,
            item_factors,
            dim,
        }
    }

    pub fn user_count(&self) -> usize {
        self.user_factors.len() / self.dim
    }

    pub fn user(&self, u: u32) -> &[f64] {
        let d = self.dim;
        &self.user_factors[u as usize * d..(u as usize + 1) * d]
    }

    pub fn item(&self, i: u32) -> &[f64] {
        let d = self.dim;
        &self.item_factors[i as usize * d..(i as usize + 1) * d]
    }

    pub fn score(&self, u: u32, i: u32) -> f64 {
        dot(self.user(u), self.item(i))
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .all(|x| x.is_finite())
    }

    /// One SGD step on `(u, pos, neg)`; returns the triple's loss before the
    /// step.
    fn sgd_step(&mut self, u: u32, pos: u32, neg: u32, lr: f64, l2: f64) -> f64 {
        let d = self.dim;
        let (us, ps, ns) = (u as usize * d, pos as usize * d, neg as usize * d);
        let loss = bpr_triple_loss(
            &self.user_factors[us..us + d],
            &self.item_factors[ps..ps + d],
            &self.item_factors[ns..ns + d],
            l2,
        );
        let (gu, gp, gn) = bpr_triple_gradient(
            &self.user_factors[us..us + d],
            &self.item_factors[ps..ps + d],
            &self.item_factors[ns..ns + d],
            l2,
        );
        for k in 0..d {
            self.user_factors[us + k] -= lr * gu[k];
            self.item_factors[ps + k] -= lr * gp[k];
            self.item_factors[ns + k] -= lr * gn[k];
        }
        loss
    }
}

impl Scorer for MfModel {
    fn item_count(&self) -> usize {
        self.item_factors.len() / self.dim
    }

    fn score_items(&self, user: u32, out: &mut [f64]) {
        let p = self.user(user);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = dot(p, self.item(i as u32));
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn bpr_triple_loss(user: &[f64], pos: &[f64], neg: &[f64], l2: f64) -> f64 {
    let margin = dot(user, pos) - dot(user, neg);
    neg_log_sigmoid(margin) + l2 * (squared_norm(user) + squared_norm(pos) + squared_norm(neg))
}

/// Gradients of [`bpr_triple_loss`] with respect to the user, positive and
/// negative factors.
pub fn bpr_triple_gradient(
    user: &[f64],
    pos: &[f64],
    neg: &[f64],
    l2: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let margin = dot(user, pos) - dot(user, neg);
    let weight = sigmoid(-margin);
    let gu = (0..user.len())
        .map(|k| -weight * (pos[k] - neg[k]) + 2.0 * l2 * user[k])
        .collect();
    let gp = (0..user.len())
        .map(|k| -weight * user[k] + 2.0 * l2 * pos[k])
        .collect();
    let gn = (0..user.len())
        .map(|k| weight * user[k] + 2.0 * l2 * neg[k])
        .collect();
    (gu, gp, gn)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MfModel,
    /// Mean triple loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains BPR. Each epoch shuffles the training rows into batches; DNS scores
/// its candidates against a snapshot of the model taken at batch start.
pub fn train_bpr(data: &TrainData, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let sampler = NegativeSampler::new(config.sampler, &data.items, data.item_count)?;
    let dns = matches!(sampler.spec().strategy, crate::sampling::Strategy::Dns);
    let mut model = MfModel::init(data.user_count, data.item_count, config.dim, config.seed);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let plan = BatchPlan::new(
            config.batch_size,
            true,
            derive_indexed(config.seed, "epoch", epoch as u64),
        );
        let mut rng = indexed_rng(config.seed, "negatives", epoch as u64);
        let mut total = 0.0;
        let mut count = 0usize;
        let batches = iterate_epoch(data.len(), &plan, |_, block| block.to_vec());
        for block in batches {
            let snapshot = if dns { Some(model.clone()) } else { None };
            for row in block {
                let (u, pos) = (data.users[row], data.items[row]);
                let negatives = match &snapshot {
                    Some(frozen) => {
                        sampler.negatives(u, &data.positives, |u, i| frozen.score(u, i), &mut rng)?
                    }
                    None => sampler.negatives(u, &data.positives, |_, _| 0.0, &mut rng)?,
                };
                for neg in negatives {
                    total += model.sgd_step(u, pos, neg, config.learning_rate, config.l2_reg);
                    count += 1;
                }
            }
        }
        let mean = total / count as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(TrainError::DivergenceDetected { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}
