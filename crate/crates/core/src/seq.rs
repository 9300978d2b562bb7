//! Item-sequence augmentations applied while collating batches.
//!
//! Every transform takes an explicit generator, so output is a pure function
//! of (input, spec, seed). Padding uses id 0 and masking uses the id one past
//! the largest item id, so the two never collide.

use std::fmt;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::atomic::PAD_ID;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("sequence is empty")]
    EmptySequence,
    #[error("sequence of length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },
    #[error("ratio {0} is outside (0, 1]")]
    InvalidRatio(f64),
    #[error("padding must be the last transform")]
    PadNotLast,
}

/// A user's item history without padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSequence {
    pub items: Vec<u32>,
    pub max_len: usize,
}

impl ItemSequence {
    pub fn new(items: Vec<u32>, max_len: usize) -> Self {
        ItemSequence { items, max_len }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadLocation {
    Begin,
    End,
}

/// Caller-supplied sequence-in, sequence-out transform.
pub type UserTransform = Arc<dyn Fn(&ItemSequence, &mut dyn RngCore) -> ItemSequence + Send + Sync>;

#[derive(Clone)]
pub enum TransformSpec {
    Mask { ratio: f64 },
    Pad { location: PadLocation },
    Crop { eta: f64 },
    Reorder { beta: f64 },
    UserDefined(UserTransform),
}

impl fmt::Debug for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformSpec::Mask { ratio } => write!(f, "Mask({ratio})"),
            TransformSpec::Pad { location } => write!(f, "Pad({location:?})"),
            TransformSpec::Crop { eta } => write!(f, "Crop({eta})"),
            TransformSpec::Reorder { beta } => write!(f, "Reorder({beta})"),
            TransformSpec::UserDefined(_) => f.write_str("UserDefined"),
        }
    }
}

fn check_ratio(r: f64) -> Result<(), TransformError> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(TransformError::InvalidRatio(r))
    }
}

/// `max(1, floor(ratio * len))`.
pub fn affected_len(ratio: f64, len: usize) -> usize {
    ((ratio * len as f64).floor() as usize).clamp(1, len.max(1))
}

/// Checks ratios and that padding, if present, is the last step.
pub fn validate_pipeline(specs: &[TransformSpec]) -> Result<(), TransformError> {
    for (k, spec) in specs.iter().enumerate() {
        match spec {
            TransformSpec::Mask { ratio } => check_ratio(*ratio)?,
            TransformSpec::Crop { eta } => check_ratio(*eta)?,
            TransformSpec::Reorder { beta } => check_ratio(*beta)?,
            TransformSpec::Pad { .. } if k + 1 != specs.len() => {
                return Err(TransformError::PadNotLast)
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub items: Vec<u32>,
    /// Ascending masked positions.
    pub positions: Vec<usize>,
    /// Original items at `positions`.
    pub targets: Vec<u32>,
}

pub fn mask_item_sequence<R: Rng + ?Sized>(
    seq: &ItemSequence,
    ratio: f64,
    mask_id: u32,
    rng: &mut R,
) -> Result<MaskedSequence, TransformError> {
    check_ratio(ratio)?;
    if seq.is_empty() {
        return Err(TransformError::EmptySequence);
    }
    let count = affected_len(ratio, seq.len());
    let mut positions = index::sample(rng, seq.len(), count).into_vec();
    positions.sort_unstable();
    let mut items = seq.items.clone();
    let targets = positions
        .iter()
        .map(|&p| std::mem::replace(&mut items[p], mask_id))
        .collect();
    Ok(MaskedSequence {
        items,
        positions,
        targets,
    })
}

pub fn flexible_pad(seq: &ItemSequence, location: PadLocation) -> Result<Vec<u32>, TransformError> {
    if seq.len() > seq.max_len {
        return Err(TransformError::SequenceTooLong {
            len: seq.len(),
            max_len: seq.max_len,
        });
    }
    let pads = std::iter::repeat_n(PAD_ID, seq.max_len - seq.len());
    Ok(match location {
        PadLocation::Begin => pads.chain(seq.items.iter().copied()).collect(),
        PadLocation::End => seq.items.iter().copied().chain(pads).collect(),
    })
}

/// Start and length of a uniformly placed window of `ratio * len` items.
fn window<R: Rng + ?Sized>(ratio: f64, len: usize, rng: &mut R) -> (usize, usize) {
    let width = affected_len(ratio, len);
    let start = rng.gen_range(0..=len - width);
    (start, width)
}

pub fn crop_item_sequence<R: Rng + ?Sized>(
    seq: &ItemSequence,
    eta: f64,
    rng: &mut R,
) -> Result<ItemSequence, TransformError> {
    check_ratio(eta)?;
    if seq.is_empty() {
        return Err(TransformError::EmptySequence);
    }
    let (start, width) = window(eta, seq.len(), rng);
    Ok(ItemSequence::new(
        seq.items[start..start + width].to_vec(),
        seq.max_len,
    ))
}

pub fn reorder_item_sequence<R: Rng + ?Sized>(
    seq: &ItemSequence,
    beta: f64,
    rng: &mut R,
) -> Result<ItemSequence, TransformError> {
    check_ratio(beta)?;
    if seq.is_empty() {
        return Err(TransformError::EmptySequence);
    }
    let (start, width) = window(beta, seq.len(), rng);
    let mut items = seq.items.clone();
    items[start..start + width].shuffle(rng);
    Ok(ItemSequence::new(items, seq.max_len))
}

/// Result of a transform pipeline: the items (padded if requested) and the
/// masked positions/targets relative to the final layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransformedSequence {
    pub items: Vec<u32>,
    pub mask_positions: Vec<usize>,
    pub mask_targets: Vec<u32>,
}

/// Applies `specs` left to right.
pub fn apply_pipeline<R: RngCore>(
    seq: &ItemSequence,
    specs: &[TransformSpec],
    mask_id: u32,
    rng: &mut R,
) -> Result<TransformedSequence, TransformError> {
    validate_pipeline(specs)?;
    // Each slot carries the original item when it has been masked, so crops
    // and shuffles keep targets attached to their positions.
    let mut slots: Vec<(u32, Option<u32>)> = seq.items.iter().map(|&i| (i, None)).collect();
    let mut pad = None;
    let as_seq = |slots: &[(u32, Option<u32>)]| {
        ItemSequence::new(slots.iter().map(|s| s.0).collect(), seq.max_len)
    };
    for spec in specs {
        match spec {
            TransformSpec::Mask { ratio } => {
                let masked = mask_item_sequence(&as_seq(&slots), *ratio, mask_id, rng)?;
                for (&p, &t) in masked.positions.iter().zip(&masked.targets) {
                    let target = slots[p].1.unwrap_or(t);
                    slots[p] = (mask_id, Some(target));
                }
            }
            TransformSpec::Crop { eta } => {
                if slots.is_empty() {
                    return Err(TransformError::EmptySequence);
                }
                let (start, width) = window(*eta, slots.len(), rng);
                slots = slots[start..start + width].to_vec();
            }
            TransformSpec::Reorder { beta } => {
                if slots.is_empty() {
                    return Err(TransformError::EmptySequence);
                }
                let (start, width) = window(*beta, slots.len(), rng);
                slots[start..start + width].shuffle(rng);
            }
            TransformSpec::UserDefined(f) => {
                // Targets follow positions that still hold the mask id.
                let out = f(&as_seq(&slots), rng);
                slots = out
                    .items
                    .iter()
                    .enumerate()
                    .map(|(p, &item)| {
                        let target = slots.get(p).and_then(|s| s.1).filter(|_| item == mask_id);
                        (item, target)
                    })
                    .collect();
            }
            TransformSpec::Pad { location } => pad = Some(*location),
        }
    }
    let mut out = TransformedSequence::default();
    let offset = match pad {
        Some(location) => {
            out.items = flexible_pad(&as_seq(&slots), location)?;
            match location {
                PadLocation::Begin => seq.max_len - slots.len(),
                PadLocation::End => 0,
            }
        }
        None => {
            out.items = slots.iter().map(|s| s.0).collect();
            0
        }
    };
    for (p, slot) in slots.iter().enumerate() {
        if let Some(target) = slot.1 {
            out.mask_positions.push(p + offset);
            out.mask_targets.push(target);
        }
    }
    Ok(out)
}
