//! The FGR1 feature-grid container: HGT1-style layout with magic
//! `FGR1\n   `, three little-endian float64 header fields (height, width,
//! channels) and height*width*channels little-endian float32 values in
//! (row, col, channel) order.

use std::fs;
use std::path::Path;

use super::{dim_from_f64, take_f64};
use crate::fusion::FeatureGrid;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FGR1\n   ";

pub fn to_bytes(grid: &FeatureGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 3 * 8 + grid.data().len() * 4);
    out.extend_from_slice(MAGIC);
    for field in [
        grid.height() as f64,
        grid.width() as f64,
        grid.channels() as f64,
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for &v in grid.data() {
        out.extend_from_slice(&(v as f32).to_bits().to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<FeatureGrid> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Format("bad FGR1 magic".into()));
    }
    let mut rest = &bytes[8..];
    let height = dim_from_f64(take_f64(&mut rest, "FGR1 height")?, "FGR1 height")?;
    let width = dim_from_f64(take_f64(&mut rest, "FGR1 width")?, "FGR1 width")?;
    let channels = dim_from_f64(take_f64(&mut rest, "FGR1 channels")?, "FGR1 channels")?;
    let n = height
        .checked_mul(width)
        .and_then(|hw| hw.checked_mul(channels))
        .ok_or_else(|| Error::Format("FGR1 size overflow".into()))?;
    if rest.len() != n * 4 {
        return Err(Error::Format(format!(
            "FGR1 payload is {} bytes, expected {}",
            rest.len(),
            n * 4
        )));
    }
    let mut grid = FeatureGrid::zeros(height, width, channels)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut vals = vec![0.0f64; channels];
    let mut chunks = rest.chunks_exact(4);
    for v in 0..height {
        for u in 0..width {
            for val in vals.iter_mut() {
                let b = chunks.next().expect("length checked");
                let f = f32::from_bits(u32::from_le_bytes(b.try_into().expect("4 bytes")));
                if !f.is_finite() {
                    return Err(Error::Format(format!("non-finite feature value {f}")));
                }
                *val = f as f64;
            }
            grid.set(v, u, &vals);
        }
    }
    Ok(grid)
}

pub fn write(path: &Path, grid: &FeatureGrid) -> Result<()> {
    fs::write(path, to_bytes(grid))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<FeatureGrid> {
    from_bytes(&fs::read(path)?)
}
