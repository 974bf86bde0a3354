//! Height consistency: ego-motion-compensated warping of a previous-frame
//! heightmap into the current road frame, and the temporal L1 loss on the
//! overlapping region.

use nalgebra::Vector3;

use crate::geometry::{RigidTransform, RoadFrame};
use crate::heightgrid::{BevGrid, HeightMap};
use crate::{Error, Result};

/// Cosine of the 45-degree warp degeneracy guard.
const COS_TILT_LIMIT: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// BEV cells (at time t) whose warped source lies inside the t-1 grid with
/// valid data.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl OverlapMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![true; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, overlapped: bool) {
        self.data[r * self.cols + c] = overlapped;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }
}

/// The road(t-1) -> road(t) transform:
/// `T = pose(t) ∘ ego_motion ∘ pose(t-1)^-1`, where `ego_motion` maps
/// ego(t-1) point coordinates into ego(t).
pub fn relative_transform(
    frame_prev: &RoadFrame,
    frame_curr: &RoadFrame,
    ego_motion: &RigidTransform,
) -> RigidTransform {
    frame_curr
        .pose
        .compose(ego_motion)
        .compose(&frame_prev.pose.invert())
}

/// Warp a previous-frame heightmap into the current road frame by inverse
/// (gather) resampling: each target cell center is mapped back through
/// `t_rel^-1` restricted to the plane, the source height is bilinearly
/// sampled, and the out-of-plane component of `t_rel` is added analytically.
///
/// Cells whose source sample is out of grid or touches no-data are cleared in
/// the returned [`OverlapMask`] and set to no-data in the output map.
pub fn warp_heightmap(
    h_prev: &HeightMap,
    t_rel: &RigidTransform,
    target_grid: &BevGrid,
) -> Result<(HeightMap, OverlapMask)> {
    let tilt_cos = t_rel.rotation_matrix()[(2, 2)];
    if tilt_cos < COS_TILT_LIMIT {
        return Err(Error::DegenerateWarp);
    }
    let inv = t_rel.invert();
    let src_grid = *h_prev.grid();
    let mut out = HeightMap::nodata(*target_grid);
    let mut mask = OverlapMask::empty(target_grid.rows, target_grid.cols);
    for r in 0..target_grid.rows {
        for c in 0..target_grid.cols {
            let (x, y) = target_grid.cell_center(r, c);
            let src = inv.apply(&Vector3::new(x, y, 0.0));
            let (u, v) = src_grid.grid_coords(src.x, src.y);
            let (h_src, ok) = h_prev.sample_bilinear(u, v);
            if !ok {
                continue;
            }
            let warped = t_rel.apply(&Vector3::new(src.x, src.y, h_src));
            out.set(r, c, warped.z)?;
            mask.set(r, c, true);
        }
    }
    Ok((out, mask))
}

/// Mean absolute height difference over the masked overlap; 0 for an empty
/// mask. Masked cells where either map is no-data are not counted (they carry
/// no comparable height).
pub fn consistency_loss(h_warped: &HeightMap, h_curr: &HeightMap, m: &OverlapMask) -> f64 {
    let grid = h_warped.grid();
    assert_eq!(
        (grid.rows, grid.cols),
        (h_curr.grid().rows, h_curr.grid().cols),
        "heightmap shapes disagree"
    );
    assert_eq!(
        (grid.rows, grid.cols),
        (m.rows, m.cols),
        "mask shape disagrees"
    );
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if !m.get(r, c) {
                continue;
            }
            if let (Some(a), Some(b)) = (h_warped.get(r, c), h_curr.get(r, c)) {
                sum += (a - b).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
