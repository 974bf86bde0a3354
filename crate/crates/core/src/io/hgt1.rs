//! The HGT1 raster container: 8-byte magic `HGT1\n   `, six little-endian
//! float64 header fields (rows, cols, meters_per_pixel, x_min, y_min,
//! nodata_sentinel), then rows*cols little-endian float32 row-major values.
//! No-data cells hold the sentinel bit pattern (default quiet NaN
//! 0x7FC00000).

use std::fs;
use std::path::Path;

use super::{dim_from_f64, take_f64};
use crate::heightgrid::{BevGrid, HeightMap};
use crate::raster::ImageRaster;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HGT1\n   ";
pub const DEFAULT_NODATA_BITS: u32 = 0x7FC0_0000;
/// Canonical f64 encoding of a NaN sentinel in the header.
const CANONICAL_F64_NAN_BITS: u64 = 0x7FF8_0000_0000_0000;

/// Raw HGT1 contents. Values are kept as stored; interpretation (heightmap
/// vs depth raster) is up to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Hgt1 {
    pub rows: usize,
    pub cols: usize,
    pub meters_per_pixel: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub nodata_bits: u32,
    pub values: Vec<f32>,
}

impl Hgt1 {
    pub fn is_nodata(&self, value: f32) -> bool {
        value.to_bits() == self.nodata_bits
    }

    pub fn from_height_map(map: &HeightMap) -> Self {
        let grid = map.grid();
        let nodata = f32::from_bits(DEFAULT_NODATA_BITS);
        let values = map
            .raw()
            .iter()
            .map(|&v| if v.is_nan() { nodata } else { v as f32 })
            .collect();
        Self {
            rows: grid.rows,
            cols: grid.cols,
            meters_per_pixel: grid.meters_per_pixel,
            x_min: grid.x_min,
            y_min: grid.y_min,
            nodata_bits: DEFAULT_NODATA_BITS,
            values,
        }
    }

    pub fn to_height_map(&self) -> Result<HeightMap> {
        let grid = BevGrid::new(
            self.rows,
            self.cols,
            self.meters_per_pixel,
            self.x_min,
            self.y_min,
        )?;
        let mut map = HeightMap::nodata(grid);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.values[r * self.cols + c];
                if self.is_nodata(v) {
                    continue;
                }
                if !v.is_finite() {
                    return Err(Error::Format(format!(
                        "non-finite height {v} at cell ({r},{c})"
                    )));
                }
                map.set(r, c, v as f64)
                    .map_err(|e| Error::Format(e.to_string()))?;
            }
        }
        Ok(map)
    }

    /// Pack an image-space raster (e.g. a depth map); the grid fields are
    /// filled with neutral values and ignored on the way back.
    pub fn from_image_raster(raster: &ImageRaster) -> Self {
        let nodata = f32::from_bits(DEFAULT_NODATA_BITS);
        let values = raster
            .data()
            .iter()
            .map(|&v| if v.is_nan() { nodata } else { v as f32 })
            .collect();
        Self {
            rows: raster.height(),
            cols: raster.width(),
            meters_per_pixel: 1.0,
            x_min: 0.0,
            y_min: 0.0,
            nodata_bits: DEFAULT_NODATA_BITS,
            values,
        }
    }

    pub fn to_image_raster(&self) -> ImageRaster {
        let data = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { f64::NAN } else { v as f64 })
            .collect();
        ImageRaster::from_data(self.cols, self.rows, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        assert_eq!(self.values.len(), self.rows * self.cols);
        let mut out = Vec::with_capacity(8 + 6 * 8 + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        let sentinel = f32::from_bits(self.nodata_bits);
        let sentinel_f64_bits = if sentinel.is_nan() {
            CANONICAL_F64_NAN_BITS
        } else {
            (sentinel as f64).to_bits()
        };
        for field in [
            (self.rows as f64).to_bits(),
            (self.cols as f64).to_bits(),
            self.meters_per_pixel.to_bits(),
            self.x_min.to_bits(),
            self.y_min.to_bits(),
            sentinel_f64_bits,
        ] {
            out.extend_from_slice(&field.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::Format("bad HGT1 magic".into()));
        }
        let mut rest = &bytes[8..];
        let rows = dim_from_f64(take_f64(&mut rest, "HGT1 rows")?, "HGT1 rows")?;
        let cols = dim_from_f64(take_f64(&mut rest, "HGT1 cols")?, "HGT1 cols")?;
        let meters_per_pixel = take_f64(&mut rest, "HGT1 meters_per_pixel")?;
        let x_min = take_f64(&mut rest, "HGT1 x_min")?;
        let y_min = take_f64(&mut rest, "HGT1 y_min")?;
        let sentinel = take_f64(&mut rest, "HGT1 nodata sentinel")?;
        let nodata_bits = if sentinel.is_nan() {
            DEFAULT_NODATA_BITS
        } else {
            (sentinel as f32).to_bits()
        };
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("HGT1 size overflow".into()))?;
        if rest.len() != n * 4 {
            return Err(Error::Format(format!(
                "HGT1 payload is {} bytes, expected {}",
                rest.len(),
                n * 4
            )));
        }
        let values = rest
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect();
        Ok(Self {
            rows,
            cols,
            meters_per_pixel,
            x_min,
            y_min,
            nodata_bits,
            values,
        })
    }
}

pub fn write(path: &Path, hgt: &Hgt1) -> Result<()> {
    fs::write(path, hgt.to_bytes())?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Hgt1> {
    let bytes = fs::read(path)?;
    Hgt1::from_bytes(&bytes)
}

pub fn write_height_map(path: &Path, map: &HeightMap) -> Result<()> {
    write(path, &Hgt1::from_height_map(map))
}

pub fn read_height_map(path: &Path) -> Result<HeightMap> {
    read(path)?.to_height_map()
}
