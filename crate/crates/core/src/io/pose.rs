//! Plain-text pose files: one frame per line, 12 whitespace-separated
//! decimals forming the row-major 3x4 [R|t] (road <- ego). Lines starting
//! with '#' are comments.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::geometry::RigidTransform;
use crate::{Error, Result};

pub fn poses_to_string(poses: &[RigidTransform]) -> String {
    let mut out = String::new();
    for t in poses {
        let r = t.rotation_matrix();
        let tr = t.translation_vector();
        let mut fields = Vec::with_capacity(12);
        for i in 0..3 {
            for j in 0..3 {
                fields.push(format!("{}", r[(i, j)]));
            }
            fields.push(format!("{}", tr[i]));
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

pub fn poses_from_str(text: &str) -> Result<Vec<RigidTransform>> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    Error::Format(format!("pose line {}: bad number {tok:?}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() != 12 {
            return Err(Error::Format(format!(
                "pose line {}: expected 12 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let rotation = Matrix3::new(
            fields[0], fields[1], fields[2], fields[4], fields[5], fields[6], fields[8],
            fields[9], fields[10],
        );
        let translation = Vector3::new(fields[3], fields[7], fields[11]);
        poses.push(
            RigidTransform::from_parts_renormalized(rotation, translation)
                .map_err(|e| Error::Format(format!("pose line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(poses)
}

pub fn write_poses(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    fs::write(path, poses_to_string(poses))?;
    Ok(())
}

pub fn read_poses(path: &Path) -> Result<Vec<RigidTransform>> {
    poses_from_str(&fs::read_to_string(path)?)
}
