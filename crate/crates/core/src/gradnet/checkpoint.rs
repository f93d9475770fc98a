//! Parameter checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "MFG1"                      4 bytes
//! layer count                       u32
//! per layer:
//!   name length, name bytes        u32, UTF-8
//!   rank, extents                  u32, rank x u32
//!   values                         product(extents) x f64 (IEEE-754 LE)
//! ```

use super::{Param, ParamSet};
use std::io::{Read, Write};
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MFG1";

// Caps keep a corrupt header from requesting absurd allocations.
const MAX_NAME_LEN: u32 = 4096;
const MAX_RANK: u32 = 8;
const MAX_ELEMENTS: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"MFG1\", got {0:?}")]
    BadMagic([u8; 4]),
    #[error("layer name is not valid UTF-8")]
    BadName,
    #[error("unreasonable dimension in header: {0}")]
    DimensionOverflow(u64),
    #[error("duplicate layer name {0:?}")]
    DuplicateName(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_checkpoint(mut w: impl Write, params: &ParamSet) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
        for extent in &p.shape {
            w.write_all(&(*extent as u32).to_le_bytes())?;
        }
        for v in &p.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_checkpoint(mut r: impl Read) -> Result<ParamSet, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let count = read_u32(&mut r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)?;
        if name_len > MAX_NAME_LEN {
            return Err(CheckpointError::DimensionOverflow(name_len as u64));
        }
        let mut name_buf = vec![0u8; name_len as usize];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf).map_err(|_| CheckpointError::BadName)?;

        let rank = read_u32(&mut r)?;
        if rank > MAX_RANK {
            return Err(CheckpointError::DimensionOverflow(rank as u64));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut total: u64 = 1;
        for _ in 0..rank {
            let extent = read_u32(&mut r)? as u64;
            total = total.saturating_mul(extent);
            shape.push(extent as usize);
        }
        if total > MAX_ELEMENTS {
            return Err(CheckpointError::DimensionOverflow(total));
        }

        let mut values = Vec::with_capacity(total as usize);
        let mut buf = [0u8; 8];
        for _ in 0..total {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        if params.get(&name).is_some() {
            return Err(CheckpointError::DuplicateName(name));
        }
        params.push(Param::new(name, shape, values));
    }
    Ok(params)
}
