//! Binary model checkpoints.
//!
//! Layout, all little-endian: magic `RBMF`, `u32` version, `u64` user count,
//! `u64` item count, `u64` dimension, then the user and item factor matrices
//! row-major as `f64`.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::MfModel;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RBMF";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint dimensions are inconsistent")]
    BadDimensions,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_checkpoint<W: Write>(model: &MfModel, mut out: W) -> Result<(), CheckpointError> {
    let users = model.user_factors.len() / model.dim;
    let items = model.item_factors.len() / model.dim;
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for n in [users, items, model.dim] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for x in model.user_factors.iter().chain(&model.item_factors) {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_floats<R: Read>(input: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            input.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<MfModel, CheckpointError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut version = [0u8; 4];
    input.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let users = read_u64(&mut input)? as usize;
    let items = read_u64(&mut input)? as usize;
    let dim = read_u64(&mut input)? as usize;
    if dim == 0 {
        return Err(CheckpointError::BadDimensions);
    }
    let user_len = users.checked_mul(dim).ok_or(CheckpointError::BadDimensions)?;
    let item_len = items.checked_mul(dim).ok_or(CheckpointError::BadDimensions)?;
    let user_factors = read_floats(&mut input, user_len)?;
    let item_factors = read_floats(&mut input, item_len)?;
    Ok(MfModel {
        user_factors,
        item_factors,
        dim,
    })
}
