//! The PRM1 parameter container: magic `PRM1\n   `, two little-endian
//! float64 header fields (channels, anchors), then the float64 payload:
//! the C x A weight matrix row-major followed by the A biases.

use std::fs;
use std::path::Path;

use super::{dim_from_f64, take_f64};
use crate::toytrain::PredictorParams;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PRM1\n   ";

pub fn to_bytes(params: &PredictorParams) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(8 + 2 * 8 + (params.weight().len() + params.bias().len()) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.channels() as f64).to_le_bytes());
    out.extend_from_slice(&(params.anchors() as f64).to_le_bytes());
    for v in params.weight().iter().chain(params.bias()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<PredictorParams> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Format("bad PRM1 magic".into()));
    }
    let mut rest = &bytes[8..];
    let channels = dim_from_f64(take_f64(&mut rest, "PRM1 channels")?, "PRM1 channels")?;
    let anchors = dim_from_f64(take_f64(&mut rest, "PRM1 anchors")?, "PRM1 anchors")?;
    let n = channels
        .checked_mul(anchors)
        .and_then(|w| w.checked_add(anchors))
        .ok_or_else(|| Error::Format("PRM1 size overflow".into()))?;
    if rest.len() != n * 8 {
        return Err(Error::Format(format!(
            "PRM1 payload is {} bytes, expected {}",
            rest.len(),
            n * 8
        )));
    }
    let values: Vec<f64> = rest
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let (weight, bias) = values.split_at(channels * anchors);
    PredictorParams::from_raw(channels, anchors, weight.to_vec(), bias.to_vec())
}

pub fn write(path: &Path, params: &PredictorParams) -> Result<()> {
    fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<PredictorParams> {
    from_bytes(&fs::read(path)?)
}
