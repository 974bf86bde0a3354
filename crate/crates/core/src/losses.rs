//! Training losses: the projected-confidence IoU loss, the supervised height
//! L1 and the weighted total.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::fusion::{GroundMask, WeightField};
use crate::geometry::{CameraModel, RoadFrame};
use crate::heightgrid::{bilinear_corners, HeightMap};
use crate::raster::ImageRaster;
use crate::{Error, Result};

/// Weighted-total coefficients; defaults follow the height-estimation recipe
/// (lambda_SA = 5, lambda_Cons = 2, lambda_h = 10).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_sa: f64,
    pub lambda_cons: f64,
    pub lambda_h: f64,
}

impl LossWeights {
    pub fn new(lambda_sa: f64, lambda_cons: f64, lambda_h: f64) -> Result<Self> {
        for (name, v) in [
            ("lambda_sa", lambda_sa),
            ("lambda_cons", lambda_cons),
            ("lambda_h", lambda_h),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a finite nonnegative number, got {v}"
                )));
            }
        }
        Ok(Self {
            lambda_sa,
            lambda_cons,
            lambda_h,
        })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_sa: 5.0,
            lambda_cons: 2.0,
            lambda_h: 10.0,
        }
    }
}

/// Project the confidence heightmap back into the image plane as a soft
/// footprint in [0, 1]: every data-valid BEV cell `(x, y, H_conf)` is sent
/// road -> ego -> pixel, and its confidence mass (the max anchor weight at
/// that cell) is splatted bilinearly into the raster. Invalid projections
/// drop out silently.
pub fn project_confidence_to_image(
    h_conf: &HeightMap,
    weights: &WeightField,
    frame: &RoadFrame,
    cam: &CameraModel,
) -> ImageRaster {
    let grid = *h_conf.grid();
    assert_eq!(
        (grid.rows, grid.cols),
        (weights.grid().rows, weights.grid().cols),
        "weights do not match the heightmap grid"
    );
    let ego_from_road = frame.pose.invert();
    let mut raster = ImageRaster::zeros(cam.width, cam.height);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let Some(h) = h_conf.get(r, c) else { continue };
            let (x, y) = grid.cell_center(r, c);
            let p_ego = ego_from_road.apply(&Vector3::new(x, y, h));
            let proj = cam.project_point(&p_ego);
            if !proj.valid {
                continue;
            }
            let mut mass = 0.0;
            for a in 0..weights.anchors() {
                mass = f64::max(mass, weights.get(a, r, c));
            }
            let Some(corners) = bilinear_corners(proj.u, proj.v, cam.width, cam.height) else {
                continue;
            };
            for (pv, pu, w) in corners {
                if w > 0.0 {
                    raster.add(pu, pv, mass * w);
                }
            }
        }
    }
    raster.clamp_in_place(0.0, 1.0);
    raster
}

/// Soft IoU loss between two nonnegative rasters:
/// `1 - sum(min) / sum(max)`. Errors when both rasters are identically zero
/// (the IoU is undefined, which signals a misconfigured scene).
pub fn soft_iou_loss(a: &ImageRaster, b: &ImageRaster) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ShapeMismatch(format!(
            "raster {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0.0 {
        return Err(Error::EmptyIou);
    }
    Ok(1.0 - inter / union)
}

fn mask_to_raster(m: &GroundMask) -> ImageRaster {
    let data = m.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    ImageRaster::from_data(m.width(), m.height(), data)
}

/// Soft IoU loss between the projected confidence footprint and the binary
/// ground mask.
pub fn iou_loss_sa(footprint: &ImageRaster, m: &GroundMask) -> Result<f64> {
    soft_iou_loss(footprint, &mask_to_raster(m))
}

/// Hard-IoU ablation variant: the footprint is binarized at `threshold`
/// before the IoU. `None` keeps the soft formulation.
pub fn iou_loss_sa_thresholded(
    footprint: &ImageRaster,
    m: &GroundMask,
    threshold: Option<f64>,
) -> Result<f64> {
    match threshold {
        None => iou_loss_sa(footprint, m),
        Some(t) => {
            let data = footprint
                .data()
                .iter()
                .map(|&v| if v >= t { 1.0 } else { 0.0 })
                .collect();
            let hard = ImageRaster::from_data(footprint.width(), footprint.height(), data);
            iou_loss_sa(&hard, m)
        }
    }
}

/// Mean absolute difference over cells valid in both maps.
pub fn height_l1(h_pred: &HeightMap, h_gt: &HeightMap) -> Result<f64> {
    if h_pred.grid() != h_gt.grid() {
        return Err(Error::ShapeMismatch(format!(
            "prediction grid {:?} vs ground-truth grid {:?}",
            h_pred.grid(),
            h_gt.grid()
        )));
    }
    let grid = h_pred.grid();
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            if let (Some(a), Some(b)) = (h_pred.get(r, c), h_gt.get(r, c)) {
                sum += (a - b).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyValidSet);
    }
    Ok(sum / n as f64)
}

/// `lambda_sa * l_sa + lambda_cons * l_cons + lambda_h * l_h`.
pub fn total_loss(l_sa: f64, l_cons: f64, l_h: f64, w: &LossWeights) -> f64 {
    w.lambda_sa * l_sa + w.lambda_cons * l_cons + w.lambda_h * l_h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::AnchorTensor;
    use crate::geometry::{road_frame_from_camera, RigidTransform};
    use crate::heightgrid::{make_anchor_set, BevGrid};
    use crate::fusion::confidence_heightmap;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn level_camera() -> CameraModel {
        let rot = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let center = Vector3::new(0.0, 0.0, 1.5);
        let extr = RigidTransform::new(rot, -(rot * center)).unwrap();
        CameraModel::new(300.0, 300.0, 160.0, 120.0, 320, 240, extr).unwrap()
    }

    fn uniform_one_anchor_weights(grid: BevGrid) -> WeightField {
        let mut t = AnchorTensor::zeros(1, grid.rows, grid.cols);
        for v in t.data_mut() {
            *v = 1.0;
        }
        WeightField::new(grid, t).unwrap()
    }

    #[test]
    fn footprint_of_flat_ground_sits_below_horizon() {
        let cam = level_camera();
        let frame = road_frame_from_camera(&cam, 1.5, 0.0).unwrap();
        let grid = BevGrid::standard();
        let h = HeightMap::filled(grid, 0.0).unwrap();
        let w = uniform_one_anchor_weights(grid);
        let raster = project_confidence_to_image(&h, &w, &frame, &cam);
        let mut nonzero = 0;
        for v in 0..cam.height {
            for u in 0..cam.width {
                let val = raster.get(u, v);
                if val > 0.0 {
                    nonzero += 1;
                    // Level camera: the horizon is the principal row; flat
                    // ground can only appear strictly below it.
                    assert!(
                        (v as f64) > cam.cy,
                        "ground footprint above horizon at ({u},{v})"
                    );
                }
            }
        }
        assert!(nonzero > 100, "footprint unexpectedly small: {nonzero}");
    }

    #[test]
    fn footprint_behind_camera_is_empty() {
        // Camera looking backward: every grid cell (y > 0) is behind it.
        let rot = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0);
        let center = Vector3::new(0.0, 0.0, 1.5);
        let extr = RigidTransform::new(rot, -(rot * center)).unwrap();
        let cam = CameraModel::new(300.0, 300.0, 160.0, 120.0, 320, 240, extr).unwrap();
        let frame = RoadFrame::new(RigidTransform::translation(0.0, 0.0, 1.5), 0);
        let grid = BevGrid::standard();
        let h = HeightMap::filled(grid, 0.0).unwrap();
        let w = uniform_one_anchor_weights(grid);
        let raster = project_confidence_to_image(&h, &w, &frame, &cam);
        assert!(raster.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn footprint_single_cell_splat_oracle() {
        let cam = level_camera();
        let frame = road_frame_from_camera(&cam, 1.5, 0.0).unwrap();
        let grid = BevGrid::new(1, 1, 0.5, -0.25, 10.0).unwrap();
        let mut h = HeightMap::filled(grid, 0.0).unwrap();
        h.set(0, 0, 0.2).unwrap();
        let w = uniform_one_anchor_weights(grid);
        let raster = project_confidence_to_image(&h, &w, &frame, &cam);
        // Oracle: project the cell center by hand and splat mass 1.
        let (x, y) = grid.cell_center(0, 0);
        let p_ego = frame.pose.invert().apply(&Vector3::new(x, y, 0.2));
        let proj = cam.project_point(&p_ego);
        assert!(proj.valid);
        let (u0, v0) = (proj.u.floor() as usize, proj.v.floor() as usize);
        let (fu, fv) = (proj.u - u0 as f64, proj.v - v0 as f64);
        let expected = [
            (u0, v0, (1.0 - fu) * (1.0 - fv)),
            (u0 + 1, v0, fu * (1.0 - fv)),
            (u0, v0 + 1, (1.0 - fu) * fv),
            (u0 + 1, v0 + 1, fu * fv),
        ];
        let mut total = 0.0;
        for v in 0..cam.height {
            for u in 0..cam.width {
                let val = raster.get(u, v);
                total += val;
                if val > 0.0 {
                    assert!(
                        expected.iter().any(|&(eu, ev, w)| u == eu && v == ev && (val - w).abs() < 1e-12),
                        "unexpected splat at ({u},{v})"
                    );
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn raster_from(vals: &[f64], w: usize, h: usize) -> ImageRaster {
        ImageRaster::from_data(w, h, vals.to_vec())
    }

    #[test]
    fn iou_exact_match_is_zero() {
        let mut m = GroundMask::new(4, 2);
        m.set(0, 0, true);
        m.set(3, 1, true);
        let f = mask_to_raster(&m);
        assert_eq!(iou_loss_sa(&f, &m).unwrap(), 0.0);
    }

    #[test]
    fn iou_disjoint_is_one() {
        let mut m = GroundMask::new(4, 1);
        m.set(0, 0, true);
        let f = raster_from(&[0.0, 0.0, 0.7, 0.3], 4, 1);
        assert_eq!(iou_loss_sa(&f, &m).unwrap(), 1.0);
    }

    #[test]
    fn iou_half_confidence_oracle() {
        let mut m = GroundMask::new(4, 2);
        for u in 0..4 {
            m.set(u, 0, true);
        }
        let mut f = ImageRaster::zeros(4, 2);
        for u in 0..4 {
            f.set(u, 0, 0.5);
        }
        // sum(min) = 4 * 0.5, sum(max) = 4 * 1.0 -> IoU 0.5, loss 0.5
        assert!((iou_loss_sa(&f, &m).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn iou_both_empty_errors() {
        let m = GroundMask::new(4, 2);
        let f = ImageRaster::zeros(4, 2);
        assert!(matches!(iou_loss_sa(&f, &m), Err(Error::EmptyIou)));
        let g = ImageRaster::zeros(3, 2);
        assert!(matches!(iou_loss_sa(&g, &m), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn iou_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let a = raster_from(
                &(0..24).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>(),
                6,
                4,
            );
            let b = raster_from(
                &(0..24).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>(),
                6,
                4,
            );
            let ab = soft_iou_loss(&a, &b).unwrap();
            let ba = soft_iou_loss(&b, &a).unwrap();
            assert_eq!(ab, ba);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn hard_iou_threshold() {
        let mut m = GroundMask::new(2, 1);
        m.set(0, 0, true);
        let f = raster_from(&[0.6, 0.4], 2, 1);
        // Binarized at 0.5: footprint = [1, 0] = mask -> loss 0.
        assert_eq!(iou_loss_sa_thresholded(&f, &m, Some(0.5)).unwrap(), 0.0);
        let soft = iou_loss_sa_thresholded(&f, &m, None).unwrap();
        assert!(soft > 0.0);
    }

    fn grid4() -> BevGrid {
        BevGrid::new(2, 2, 1.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn l1_identical_and_offset() {
        let a = HeightMap::filled(grid4(), 1.0).unwrap();
        assert_eq!(height_l1(&a, &a).unwrap(), 0.0);
        let b = HeightMap::filled(grid4(), 1.05).unwrap();
        assert!((height_l1(&a, &b).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn l1_mean_oracle_and_joint_validity() {
        let mut a = HeightMap::nodata(grid4());
        let mut b = HeightMap::nodata(grid4());
        a.set(0, 0, 0.1).unwrap();
        b.set(0, 0, 0.0).unwrap();
        a.set(0, 1, 0.3).unwrap();
        b.set(0, 1, 0.0).unwrap();
        a.set(1, 0, 99.0 / 10.0).unwrap(); // valid only in a: must not count
        assert!((height_l1(&a, &b).unwrap() - 0.2).abs() < 1e-12);
        // No joint cells -> error.
        let empty = HeightMap::nodata(grid4());
        assert!(matches!(height_l1(&a, &empty), Err(Error::EmptyValidSet)));
        // Different grids -> error.
        let other = HeightMap::filled(BevGrid::new(2, 2, 0.5, 0.0, 0.0).unwrap(), 0.0).unwrap();
        assert!(matches!(height_l1(&a, &other), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn l1_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let mut maps = Vec::new();
            for _ in 0..3 {
                let mut m = HeightMap::filled(grid4(), 0.0).unwrap();
                for r in 0..2 {
                    for c in 0..2 {
                        m.set(r, c, rng.random_range(-1.0..1.0)).unwrap();
                    }
                }
                maps.push(m);
            }
            let ab = height_l1(&maps[0], &maps[1]).unwrap();
            let bc = height_l1(&maps[1], &maps[2]).unwrap();
            let ac = height_l1(&maps[0], &maps[2]).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn total_loss_weighted_sum() {
        let w = LossWeights::default();
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w), 0.0);
        // 5*0.1 + 2*0.05 + 10*0.02 = 0.8 with the default weights.
        assert!((total_loss(0.1, 0.05, 0.02, &w) - 0.8).abs() < 1e-12);
        let unit = LossWeights::new(1.0, 1.0, 1.0).unwrap();
        assert!((total_loss(0.3, 0.4, 0.5, &unit) - 1.2).abs() < 1e-12);
        assert!(LossWeights::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn total_loss_linear_in_each_component() {
        let w = LossWeights::default();
        let base = total_loss(0.1, 0.2, 0.3, &w);
        let bumped = total_loss(0.1 + 1.0, 0.2, 0.3, &w);
        assert!((bumped - base - w.lambda_sa).abs() < 1e-12);
        let bumped = total_loss(0.1, 0.2 + 1.0, 0.3, &w);
        assert!((bumped - base - w.lambda_cons).abs() < 1e-12);
        let bumped = total_loss(0.1, 0.2, 0.3 + 1.0, &w);
        assert!((bumped - base - w.lambda_h).abs() < 1e-12);
    }

    #[test]
    fn footprint_uses_max_anchor_weight_as_mass() {
        let cam = level_camera();
        let frame = road_frame_from_camera(&cam, 1.5, 0.0).unwrap();
        let grid = BevGrid::new(1, 1, 0.5, -0.25, 8.0).unwrap();
        let anchors = make_anchor_set(grid, &[-0.05, 0.0, 0.05]).unwrap();
        let mut t = AnchorTensor::zeros(3, 1, 1);
        t.set(0, 0, 0, 0.1);
        t.set(1, 0, 0, 0.6);
        t.set(2, 0, 0, 0.3);
        let w = WeightField::new(grid, t).unwrap();
        let h = confidence_heightmap(&anchors, &w);
        let raster = project_confidence_to_image(&h, &w, &frame, &cam);
        let total: f64 = raster.data().iter().sum();
        assert!((total - 0.6).abs() < 1e-12, "splatted mass {total}");
    }
}
