//! Binary PGM (P5) masks: 255 = set (ground/overlap), 0 = clear.

use std::fs;
use std::path::Path;

use crate::consistency::OverlapMask;
use crate::fusion::GroundMask;
use crate::{Error, Result};

pub fn mask_to_bytes(width: usize, height: usize, data: &[bool]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(data.iter().map(|&b| if b { 255u8 } else { 0u8 }));
    out
}

/// Parse a binary PGM into (width, height, set-flags). Only maxval 255 and
/// pixel values {0, 255} are accepted.
pub fn mask_from_bytes(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("bad PGM magic, expected P5".into()));
    }
    // Header: three whitespace-separated tokens (width, height, maxval),
    // with '#' comments allowed, followed by a single whitespace byte.
    let mut pos = 2;
    let mut tokens = Vec::with_capacity(3);
    while tokens.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        let token = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::Format("non-ASCII PGM header".into()))?;
        let value: usize = token
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM header token {token:?}")))?;
        tokens.push(value);
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing PGM header terminator".into()));
    }
    pos += 1;
    let (width, height, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("PGM size overflow".into()))?;
    let pixels = &bytes[pos..];
    if pixels.len() != n {
        return Err(Error::Format(format!(
            "PGM payload is {} bytes, expected {n}",
            pixels.len()
        )));
    }
    let data = pixels
        .iter()
        .map(|&p| match p {
            255 => Ok(true),
            0 => Ok(false),
            other => Err(Error::Format(format!("non-binary PGM value {other}"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok((width, height, data))
}

pub fn write_ground_mask(path: &Path, mask: &GroundMask) -> Result<()> {
    fs::write(path, mask_to_bytes(mask.width(), mask.height(), mask.data()))?;
    Ok(())
}

pub fn read_ground_mask(path: &Path) -> Result<GroundMask> {
    let (w, h, data) = mask_from_bytes(&fs::read(path)?)?;
    Ok(GroundMask::from_data(w, h, data))
}

/// Overlap masks reuse the PGM container with width = grid cols and
/// height = grid rows.
pub fn write_overlap_mask(path: &Path, mask: &OverlapMask) -> Result<()> {
    fs::write(path, mask_to_bytes(mask.cols(), mask.rows(), mask.data()))?;
    Ok(())
}

pub fn read_overlap_mask(path: &Path) -> Result<OverlapMask> {
    let (w, h, data) = mask_from_bytes(&fs::read(path)?)?;
    let mut mask = OverlapMask::empty(h, w);
    for r in 0..h {
        for c in 0..w {
            mask.set(r, c, data[r * w + c]);
        }
    }
    Ok(mask)
}
