//! Parameter-independent per-frame caches for the toy trainer: sampled
//! anchor features, validity, joint-valid sets and warp gather plans.

use crate::consistency::relative_transform;
use crate::fusion::{
    anchor_mean_feature, project_and_sample, AnchorValidity, FeatureGrid, GroundMask,
};
use crate::geometry::{CameraModel, RigidTransform, RoadFrame};
use crate::heightgrid::{bilinear_corners, HeightMap, SlopeAnchorSet};
use crate::synth::{gen_surface, gen_trajectory, rasterize_gt, render_frame, SceneSpec};
use crate::{Error, Result};

/// Raw per-frame training data, either synthesized or loaded from a bundle.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub road_frame: RoadFrame,
    pub gt: HeightMap,
    pub ground_mask: GroundMask,
    pub features: FeatureGrid,
}

/// One scene: consecutive frames plus the ego motions linking them.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub cam: CameraModel,
    pub frames: Vec<FrameData>,
    pub ego_motions: Vec<RigidTransform>,
}

impl SceneData {
    /// Run the full synthetic pipeline for a scene spec: trajectory, renders
    /// and ground-truth heightmaps.
    pub fn from_spec(spec: &SceneSpec) -> Result<Self> {
        let surface = gen_surface(spec)?;
        let (traj, ego_motions) = gen_trajectory(spec, &surface)?;
        let cam = spec.camera.camera_model()?;
        let mut frames = Vec::with_capacity(traj.len());
        for (i, tf) in traj.iter().enumerate() {
            let rendered = render_frame(
                &surface,
                tf,
                &cam,
                spec.grid,
                spec.channels,
                crate::synth::noise::frame_seed(spec.seed, i),
            );
            let gt = rasterize_gt(&surface, tf, spec.grid)?;
            frames.push(FrameData {
                road_frame: tf.road_frame,
                gt,
                ground_mask: rendered.mask,
                features: rendered.features,
            });
        }
        Ok(Self {
            cam,
            frames,
            ego_motions,
        })
    }
}

/// Cached, parameter-independent view of one frame.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub road_frame: RoadFrame,
    pub gt: HeightMap,
    pub ground_mask: GroundMask,
    /// Per-anchor BEV feature grids sampled from the image features.
    pub sampled: Vec<FeatureGrid>,
    /// Mean valid anchor feature: the predictor input.
    pub bev_feat: FeatureGrid,
    pub validity: AnchorValidity,
    /// Cells where no anchor is valid; predictions are no-data there.
    pub dead: Vec<bool>,
    /// Cells counted by the supervised L1: prediction valid and GT valid.
    pub joint_valid: Vec<bool>,
    pub n_joint: usize,
}

/// Gather plan for warping the previous frame's prediction to this frame.
#[derive(Debug, Clone)]
pub struct WarpTap {
    /// Flat target cell index.
    pub cell: usize,
    /// Source corners as (flat index, bilinear weight).
    pub corners: [(usize, f64); 4],
    /// d(warped)/d(source height): rotation (2,2) of the relative transform.
    pub scale: f64,
    /// Height contribution of the in-plane source position.
    pub base: f64,
}

#[derive(Debug, Clone)]
pub struct WarpPlan {
    pub t_rel: RigidTransform,
    pub taps: Vec<WarpTap>,
}

/// Prepared scene: frames plus consecutive warp plans.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub cam: CameraModel,
    pub frames: Vec<PreparedFrame>,
    pub plans: Vec<WarpPlan>,
}

pub fn prepare_frame(
    cam: &CameraModel,
    anchors: &SlopeAnchorSet,
    frame: &FrameData,
) -> Result<PreparedFrame> {
    let grid = anchors.grid();
    if frame.gt.grid() != grid {
        return Err(Error::ShapeMismatch(format!(
            "ground-truth grid {:?} vs anchor grid {:?}",
            frame.gt.grid(),
            grid
        )));
    }
    let (sampled, validity) = project_and_sample(anchors, &frame.road_frame, cam, &frame.features);
    let bev_feat = anchor_mean_feature(&sampled, &validity);
    let dead = validity.all_invalid_cells();
    let mut joint_valid = vec![false; grid.len()];
    let mut n_joint = 0usize;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let i = r * grid.cols + c;
            if !dead[i] && frame.gt.is_valid(r, c) {
                joint_valid[i] = true;
                n_joint += 1;
            }
        }
    }
    Ok(PreparedFrame {
        road_frame: frame.road_frame,
        gt: frame.gt.clone(),
        ground_mask: frame.ground_mask.clone(),
        sampled,
        bev_feat,
        validity,
        dead,
        joint_valid,
        n_joint,
    })
}

fn build_warp_plan(
    anchors: &SlopeAnchorSet,
    prev: &PreparedFrame,
    curr: &PreparedFrame,
    ego_motion: &RigidTransform,
) -> Result<WarpPlan> {
    let grid = anchors.grid();
    let t_rel = relative_transform(&prev.road_frame, &curr.road_frame, ego_motion);
    if t_rel.rotation_matrix()[(2, 2)] < std::f64::consts::FRAC_1_SQRT_2 {
        return Err(Error::DegenerateWarp);
    }
    let inv = t_rel.invert();
    let rot = t_rel.rotation_matrix();
    let tz = t_rel.translation_vector().z;
    let mut taps = Vec::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let i = r * grid.cols + c;
            let (x, y) = grid.cell_center(r, c);
            let src = inv.apply(&nalgebra::Vector3::new(x, y, 0.0));
            let (u, v) = grid.grid_coords(src.x, src.y);
            let Some(corners) = bilinear_corners(u, v, grid.cols, grid.rows) else {
                continue;
            };
            let mut source_ok = true;
            let mut flat = [(0usize, 0.0f64); 4];
            for (k, (cr, cc, w)) in corners.iter().enumerate() {
                let idx = cr * grid.cols + cc;
                if *w > 0.0 && prev.dead[idx] {
                    source_ok = false;
                    break;
                }
                flat[k] = (idx, *w);
            }
            if !source_ok {
                continue;
            }
            taps.push(WarpTap {
                cell: i,
                corners: flat,
                scale: rot[(2, 2)],
                base: rot[(2, 0)] * src.x + rot[(2, 1)] * src.y + tz,
            });
        }
    }
    Ok(WarpPlan { t_rel, taps })
}

/// Prepare a scene, optionally truncated to its first `max_frames` frames.
pub fn prepare_scene(
    data: &SceneData,
    anchors: &SlopeAnchorSet,
    max_frames: Option<usize>,
) -> Result<PreparedScene> {
    let n = match max_frames {
        Some(m) => m.min(data.frames.len()),
        None => data.frames.len(),
    };
    if n == 0 {
        return Err(Error::InvalidConfig("scene has no frames".into()));
    }
    let mut frames = Vec::with_capacity(n);
    for frame in &data.frames[..n] {
        frames.push(prepare_frame(&data.cam, anchors, frame)?);
    }
    let mut plans = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        plans.push(build_warp_plan(
            anchors,
            &frames[k],
            &frames[k + 1],
            &data.ego_motions[k],
        )?);
    }
    Ok(PreparedScene { cam: data.cam, frames, plans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::{consistency_loss, warp_heightmap};
    use crate::heightgrid::{make_anchor_set, BevGrid};
    use crate::synth::{CameraRig, SurfaceSpec};

    fn small_spec() -> SceneSpec {
        SceneSpec {
            surface: SurfaceSpec::Crest {
                amplitude: 0.6,
                wavelength: 120.0,
                phase: 1.3,
            },
            seed: 5,
            length: 3,
            ego_speed: 10.0,
            frame_dt: 0.1,
            camera: CameraRig {
                width: 96,
                height: 72,
                fx: 72.0,
                fy: 72.0,
                cx: 47.5,
                cy: 35.5,
                ..CameraRig::default()
            },
            channels: 4,
            grid: BevGrid::new(80, 24, 0.5, -6.0, 2.0).unwrap(),
        }
    }

    #[test]
    fn prepared_scene_shapes_are_consistent() {
        let spec = small_spec();
        let data = SceneData::from_spec(&spec).unwrap();
        let anchors = make_anchor_set(spec.grid, &crate::heightgrid::DEFAULT_SLOPES).unwrap();
        let scene = prepare_scene(&data, &anchors, None).unwrap();
        assert_eq!(scene.frames.len(), 3);
        assert_eq!(scene.plans.len(), 2);
        for f in &scene.frames {
            assert_eq!(f.sampled.len(), 5);
            assert_eq!(f.bev_feat.height(), spec.grid.rows);
            assert_eq!(f.bev_feat.width(), spec.grid.cols);
            assert!(f.n_joint > 100, "joint-valid cells: {}", f.n_joint);
        }
    }

    #[test]
    fn warp_plan_gather_matches_warp_heightmap() {
        let spec = small_spec();
        let data = SceneData::from_spec(&spec).unwrap();
        let anchors = make_anchor_set(spec.grid, &crate::heightgrid::DEFAULT_SLOPES).unwrap();
        let scene = prepare_scene(&data, &anchors, None).unwrap();
        let (prev, curr) = (&scene.frames[0], &scene.frames[1]);
        let plan = &scene.plans[0];
        // A synthetic "prediction": the GT with nodata at dead cells.
        let grid = spec.grid;
        let mut h_prev = prev.gt.clone();
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                if prev.dead[r * grid.cols + c] {
                    h_prev.set_nodata(r, c);
                }
            }
        }
        let (warped, mask) = warp_heightmap(&h_prev, &plan.t_rel, &grid).unwrap();
        let mut tap_cells = vec![false; grid.len()];
        for tap in &plan.taps {
            tap_cells[tap.cell] = true;
            let mut h = 0.0;
            for (idx, w) in tap.corners {
                if w > 0.0 {
                    h += w * h_prev.raw()[idx];
                }
            }
            let gathered = tap.base + tap.scale * h;
            let (r, c) = (tap.cell / grid.cols, tap.cell % grid.cols);
            assert!(mask.get(r, c), "plan tap outside warp mask at ({r},{c})");
            let reference = warped.get(r, c).unwrap();
            assert!(
                (gathered - reference).abs() < 1e-12,
                "onestep gather {gathered} vs warp {reference}"
            );
        }
        // Cells without taps must be missing from the warp mask too.
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let i = r * grid.cols + c;
                if !tap_cells[i] {
                    assert!(!mask.get(r, c), "warp mask set but no tap at ({r},{c})");
                }
            }
        }
        // And the masked mean matches consistency_loss on a curr map.
        let mut h_curr = curr.gt.clone();
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                if curr.dead[r * grid.cols + c] {
                    h_curr.set_nodata(r, c);
                }
            }
        }
        let reference = consistency_loss(&warped, &h_curr, &mask);
        let mut sum = 0.0;
        let mut n = 0usize;
        for tap in &plan.taps {
            let (r, c) = (tap.cell / grid.cols, tap.cell % grid.cols);
            let Some(b) = h_curr.get(r, c) else { continue };
            let mut h = 0.0;
            for (idx, w) in tap.corners {
                if w > 0.0 {
                    h += w * h_prev.raw()[idx];
                }
            }
            sum += (tap.base + tap.scale * h - b).abs();
            n += 1;
        }
        let plan_loss = if n == 0 { 0.0 } else { sum / n as f64 };
        assert!((plan_loss - reference).abs() < 1e-12);
    }
}
