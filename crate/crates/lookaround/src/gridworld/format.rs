//! `VGRD1`: the on-disk format for a single [`ViewGrid`].
//!
//! Layout (all integers little-endian `u32`, all pixels little-endian `f32`):
//!
//! ```text
//! magic "VGRD1" (5 bytes)
//! n_elev, m_azim, view_h, view_w, channels
//! label (0xFFFF_FFFF when unlabeled)
//! pixel*grid_len in [elev][azim][row][col][channel] order
//! ```
//!
//! Saving the same grid twice yields byte-identical files.

use std::fs;
use std::path::Path;

use super::{GridDims, GridError, ViewGrid};

const MAGIC: &[u8; 5] = b"VGRD1";
const UNLABELED: u32 = u32::MAX;

/// Serialises a grid to `VGRD1` bytes.
pub fn viewgrid_to_bytes(grid: &ViewGrid) -> Result<Vec<u8>, GridError> {
    let dims = grid.dims();
    let mut out = Vec::with_capacity(5 + 6 * 4 + grid.data().len() * 4);
    out.extend_from_slice(MAGIC);
    for extent in [dims.n_elev, dims.m_azim, dims.view_h, dims.view_w, dims.channels] {
        let extent = u32::try_from(extent).map_err(|_| GridError::DimsOverflow)?;
        out.extend_from_slice(&extent.to_le_bytes());
    }
    let label = match grid.label() {
        Some(UNLABELED) => return Err(GridError::LabelIsSentinel(UNLABELED)),
        Some(label) => label,
        None => UNLABELED,
    };
    out.extend_from_slice(&label.to_le_bytes());
    for &v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses `VGRD1` bytes into a grid, validating magic, dimensions, length,
/// and pixel range.
pub fn viewgrid_from_bytes(bytes: &[u8]) -> Result<ViewGrid, GridError> {
    let header_len = 5 + 6 * 4;
    if bytes.len() < 5 {
        // Too short to even hold the magic; an empty or clipped prefix is
        // indistinguishable from truncation unless the magic mismatches.
        if bytes != &MAGIC[..bytes.len()] {
            return Err(GridError::BadMagic);
        }
        return Err(GridError::Truncated);
    }
    if &bytes[..5] != MAGIC {
        return Err(GridError::BadMagic);
    }
    if bytes.len() < header_len {
        return Err(GridError::Truncated);
    }
    let fields: Vec<u32> = bytes[5..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let dims = GridDims {
        n_elev: fields[0] as usize,
        m_azim: fields[1] as usize,
        view_h: fields[2] as usize,
        view_w: fields[3] as usize,
        channels: fields[4] as usize,
    };
    let label = match fields[5] {
        UNLABELED => None,
        label => Some(label),
    };
    dims.validate()?;
    let expected = header_len + dims.grid_len() * 4;
    if bytes.len() < expected {
        return Err(GridError::Truncated);
    }
    if bytes.len() > expected {
        return Err(GridError::TrailingBytes);
    }
    let data: Vec<f32> = bytes[header_len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    ViewGrid::new(dims, data, label)
}

/// Writes a grid to `path` in `VGRD1` format.
pub fn save_viewgrid(grid: &ViewGrid, path: impl AsRef<Path>) -> Result<(), GridError> {
    let bytes = viewgrid_to_bytes(grid)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a grid from a `VGRD1` file at `path`.
pub fn load_viewgrid(path: impl AsRef<Path>) -> Result<ViewGrid, GridError> {
    let bytes = fs::read(path)?;
    viewgrid_from_bytes(&bytes)
}
