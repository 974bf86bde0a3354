//! Binary and text container formats.
//!
//! - `HGT1`: single-channel float32 raster with a float64 header, used for
//!   heightmaps and (with the grid fields ignored) depth rasters;
//! - `FGR1`: the HGT1-style multi-channel container for feature grids;
//! - `PRM1`: the HGT1-style float64 container for predictor parameters;
//! - binary PGM (P5) for ground/overlap masks;
//! - plain-text pose files, one row-major 3x4 [R|t] per line.

pub mod fgr1;
pub mod hgt1;
pub mod pgm;
pub mod pose;
pub mod prm1;

use crate::{Error, Result};

/// Read a little-endian f64 from the front of `bytes`, advancing it.
pub(crate) fn take_f64(bytes: &mut &[u8], what: &str) -> Result<f64> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!("truncated while reading {what}")));
    }
    let (head, rest) = bytes.split_at(8);
    *bytes = rest;
    Ok(f64::from_le_bytes(head.try_into().expect("8 bytes")))
}

/// Header dimensions are stored as f64; require exact nonnegative integers.
pub(crate) fn dim_from_f64(v: f64, what: &str) -> Result<usize> {
    if !v.is_finite() || v < 0.0 || v.fract() != 0.0 || v > 1e8 {
        return Err(Error::Format(format!("invalid {what} dimension {v}")));
    }
    Ok(v as usize)
}
