//! `GLMP1`: the on-disk checkpoint format for a [`ParamStore`].
//!
//! Layout (all integers little-endian `u32`, all values little-endian `f32`):
//!
//! ```text
//! magic "GLMP1" (5 bytes)
//! entry_count
//! entry*:
//!   name_len, name bytes (UTF-8)
//!   rank, extent*rank
//!   value*product(extents)
//! ```
//!
//! Parameters are written in store order followed by velocity buffers, each
//! under its parameter's name with a `.vel` suffix. Writing a store twice
//! yields byte-identical files.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{ParamStore, TensorValue};

const MAGIC: &[u8; 5] = b"GLMP1";
const VELOCITY_SUFFIX: &str = ".vel";
const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;
const MAX_VALUES: usize = 1 << 28;

/// Errors from reading or writing `GLMP1` checkpoints.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: not a GLMP1 checkpoint")]
    BadMagic,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("velocity entry {0:?} has no matching parameter")]
    OrphanVelocity(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Serialises a store (parameters, then velocities) to `GLMP1` bytes.
pub fn param_store_to_bytes(params: &ParamStore) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let velocity_names: Vec<&str> = params.velocity_names().collect();
    let count = params.len() + velocity_names.len();
    out.extend_from_slice(&u32_entry(count)?.to_le_bytes());
    for (name, value) in params.iter() {
        if name.ends_with(VELOCITY_SUFFIX) {
            return Err(CheckpointError::Malformed(format!(
                "parameter name {name:?} collides with the velocity suffix"
            )));
        }
        write_entry(&mut out, name, value)?;
    }
    for name in velocity_names {
        let value = params.velocity(name).expect("listed velocity");
        write_entry(&mut out, &format!("{name}{VELOCITY_SUFFIX}"), value)?;
    }
    Ok(out)
}

/// Parses `GLMP1` bytes back into a store, matching velocity entries to
/// their parameters.
pub fn param_store_from_bytes(bytes: &[u8]) -> Result<ParamStore, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    let mut velocities: Vec<(String, TensorValue)> = Vec::new();
    for _ in 0..count {
        let (name, value) = read_entry(&mut r)?;
        match name.strip_suffix(VELOCITY_SUFFIX) {
            Some(base) => velocities.push((base.to_string(), value)),
            None => {
                if store.contains(&name) {
                    return Err(CheckpointError::Malformed(format!("duplicate entry {name:?}")));
                }
                store.insert(name, value);
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed("trailing bytes after last entry".to_string()));
    }
    for (base, value) in velocities {
        let param = store
            .get(&base)
            .ok_or_else(|| CheckpointError::OrphanVelocity(format!("{base}{VELOCITY_SUFFIX}")))?;
        if param.shape() != value.shape() {
            return Err(CheckpointError::Malformed(format!(
                "velocity shape {:?} does not match parameter {base:?} shape {:?}",
                value.shape(),
                param.shape()
            )));
        }
        store.set_velocity(&base, value);
    }
    Ok(store)
}

/// Writes a store to `path` in `GLMP1` format.
pub fn save_param_store(params: &ParamStore, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let bytes = param_store_to_bytes(params)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a store from a `GLMP1` file at `path`.
pub fn load_param_store(path: impl AsRef<Path>) -> Result<ParamStore, CheckpointError> {
    let bytes = fs::read(path)?;
    param_store_from_bytes(&bytes)
}

fn u32_entry(n: usize) -> Result<u32, CheckpointError> {
    u32::try_from(n).map_err(|_| CheckpointError::Malformed(format!("count {n} exceeds u32")))
}

fn write_entry(out: &mut Vec<u8>, name: &str, value: &TensorValue) -> Result<(), CheckpointError> {
    if name.len() > MAX_NAME_LEN {
        return Err(CheckpointError::Malformed(format!("name of {} bytes too long", name.len())));
    }
    out.extend_from_slice(&u32_entry(name.len())?.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&u32_entry(value.shape().len())?.to_le_bytes());
    for &extent in value.shape() {
        out.extend_from_slice(&u32_entry(extent)?.to_le_bytes());
    }
    for &v in value.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn read_entry(r: &mut Reader<'_>) -> Result<(String, TensorValue), CheckpointError> {
    let name_len = r.u32()? as usize;
    if name_len > MAX_NAME_LEN {
        return Err(CheckpointError::Malformed(format!("name of {name_len} bytes too long")));
    }
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| CheckpointError::Malformed("name is not UTF-8".to_string()))?
        .to_string();
    let rank = r.u32()? as usize;
    if rank > MAX_RANK {
        return Err(CheckpointError::Malformed(format!("rank {rank} too large")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut len: usize = 1;
    for _ in 0..rank {
        let extent = r.u32()? as usize;
        len = len
            .checked_mul(extent)
            .filter(|&n| n <= MAX_VALUES)
            .ok_or_else(|| CheckpointError::Malformed("entry size overflows".to_string()))?;
        shape.push(extent);
    }
    let mut data = Vec::with_capacity(len);
    for chunk in r.take(len * 4)?.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().expect("chunk of 4")));
    }
    Ok((name, TensorValue::new(shape, data)))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        if end > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let bytes = self.take(4)?;
        Ok(u32::from_le_bytes(bytes.try_into().expect("4 bytes")))
    }
}
