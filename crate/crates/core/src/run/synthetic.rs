//! Planted block-preference datasets.
//!
//! User `u` belongs to block `u % blocks` and item `i` to block `i % blocks`.
//! Each interaction is drawn from the user's own block, except with
//! probability `noise` when it is drawn from the whole catalogue.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RunError, Stage};
use crate::atomic::{Column, Frame, SourceKind};
use crate::seed::stage_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    pub noise: f64,
    /// Distinct items per user.
    pub per_user: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::config(Stage::Config, m));
        if self.blocks == 0 || self.users < self.blocks || self.items < self.blocks {
            return bad(format!(
                "need users, items >= blocks >= 1 (users {}, items {}, blocks {})",
                self.users, self.items, self.blocks
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 1]", self.noise));
        }
        let smallest_block = self.items / self.blocks;
        if self.per_user == 0 || self.per_user > smallest_block {
            return bad(format!(
                "per_user {} must be in 1..={smallest_block}",
                self.per_user
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// `user_id`, `item_id`, `timestamp`, ordered by timestamp.
    pub inter: Frame,
    /// `item_id`, `block`, `price`.
    pub item: Frame,
    pub user_blocks: Vec<usize>,
    pub item_blocks: Vec<usize>,
}

pub fn user_token(u: usize) -> String {
    format!("u{u}")
}

pub fn item_token(i: usize) -> String {
    format!("i{i}")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, RunError> {
    spec.validate()?;
    let mut rng = stage_rng(spec.seed, "synthetic");
    let user_blocks: Vec<usize> = (0..spec.users).map(|u| u % spec.blocks).collect();
    let item_blocks: Vec<usize> = (0..spec.items).map(|i| i % spec.blocks).collect();
    let members: Vec<Vec<usize>> = (0..spec.blocks)
        .map(|b| (0..spec.items).filter(|i| i % spec.blocks == b).collect())
        .collect();

    let mut picks: Vec<Vec<usize>> = Vec::with_capacity(spec.users);
    for &block in &user_blocks {
        let mut chosen = HashSet::new();
        let mut order = Vec::with_capacity(spec.per_user);
        while order.len() < spec.per_user {
            let item = if rng.gen::<f64>() < spec.noise {
                rng.gen_range(0..spec.items)
            } else {
                members[block][rng.gen_range(0..members[block].len())]
            };
            if chosen.insert(item) {
                order.push(item);
            }
        }
        picks.push(order);
    }

    // Round-robin over users so timestamps interleave; all stamps distinct.
    let (mut users, mut items, mut stamps) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..spec.per_user {
        for (u, order) in picks.iter().enumerate() {
            users.push(user_token(u));
            items.push(item_token(order[k]));
            stamps.push((k * spec.users + u) as f64);
        }
    }
    let inter = Frame::from_columns(
        SourceKind::Inter,
        IndexMap::from([
            ("user_id".to_string(), Column::Token(users)),
            ("item_id".to_string(), Column::Token(items)),
            ("timestamp".to_string(), Column::Float(stamps)),
        ]),
    )
    .expect("equal column lengths");
    let prices: Vec<f64> = (0..spec.items)
        .map(|_| (rng.gen_range(1.0f64..100.0) * 100.0).round() / 100.0)
        .collect();
    let item = Frame::from_columns(
        SourceKind::Item,
        IndexMap::from([
            ("item_id".to_string(), Column::Token((0..spec.items).map(item_token).collect())),
            (
                "block".to_string(),
                Column::Token(item_blocks.iter().map(|b| format!("b{b}")).collect()),
            ),
            ("price".to_string(), Column::Float(prices)),
        ]),
    )
    .expect("equal column lengths");
    Ok(SyntheticData {
        inter,
        item,
        user_blocks,
        item_blocks,
    })
}

/// Writes `<name>.inter`, `<name>.item` and the ground-truth `<name>.blocks`
/// (`kind\tid\tblock` lines) into `dir`.
pub fn write_synthetic(data: &SyntheticData, dir: &Path, name: &str) -> Result<(), RunError> {
    let io = |e: &dyn std::fmt::Display| RunError::runtime(Stage::Output, e.to_string());
    std::fs::create_dir_all(dir).map_err(|e| io(&e))?;
    data.inter
        .write_atomic_file(&dir.join(format!("{name}.inter")))
        .map_err(|e| io(&e))?;
    data.item
        .write_atomic_file(&dir.join(format!("{name}.item")))
        .map_err(|e| io(&e))?;
    let mut truth = String::from("kind\tid\tblock\n");
    for (u, b) in data.user_blocks.iter().enumerate() {
        let _ = writeln!(truth, "user\t{}\t{b}", user_token(u));
    }
    for (i, b) in data.item_blocks.iter().enumerate() {
        let _ = writeln!(truth, "item\t{}\t{b}", item_token(i));
    }
    std::fs::write(dir.join(format!("{name}.blocks")), truth).map_err(|e| io(&e))
}
