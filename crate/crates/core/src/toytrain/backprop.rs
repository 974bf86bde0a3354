//! Forward loss over prepared scenes and the exact hand-derived backward
//! pass through the softmax, the confidence decode, the footprint splat, the
//! warp gather and the masked L1 terms.

use nalgebra::Vector3;

use super::pipeline::PreparedScene;
use super::{predict_logits, PredictorParams, TrainConfig};
use crate::fusion::{mask_logits, softmax_weights, AnchorTensor};
use crate::heightgrid::{bilinear_corners, SlopeAnchorSet};
use crate::raster::ImageRaster;
use crate::{Error, Result};

/// Loss components before weighting, plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_sa: f64,
    pub l_cons: f64,
    pub l_h: f64,
}

/// One splatted BEV cell: where its confidence mass landed in the image and
/// how the landing point moves with the cell height.
#[derive(Debug, Clone)]
struct SplatRecord {
    cell: usize,
    mass: f64,
    argmax: usize,
    du_dh: f64,
    dv_dh: f64,
    /// (pixel flat index, weight, dw/du, dw/dv)
    corners: [(usize, f64, f64, f64); 4],
}

#[derive(Debug, Clone)]
struct FrameForward {
    alpha: AnchorTensor,
    /// Decoded confidence height; NaN at dead cells.
    h: Vec<f64>,
    splats: Vec<SplatRecord>,
    raw_footprint: ImageRaster,
    iou_inter: f64,
    iou_union: f64,
    l_sa: f64,
    l_h: f64,
}

/// Cached intermediates for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    scenes: Vec<Vec<FrameForward>>,
    n_frames: usize,
    n_pairs: usize,
    pub breakdown: LossBreakdown,
}

/// Gradients with respect to [`PredictorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_weight: Vec<f64>,
    pub d_bias: Vec<f64>,
}

impl Gradients {
    fn zeros(channels: usize, anchors: usize) -> Self {
        Self {
            d_weight: vec![0.0; channels * anchors],
            d_bias: vec![0.0; anchors],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.d_weight
            .iter()
            .chain(&self.d_bias)
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

fn forward_frame(
    params: &PredictorParams,
    anchors: &SlopeAnchorSet,
    scene: &PreparedScene,
    frame_idx: usize,
) -> Result<FrameForward> {
    let frame = &scene.frames[frame_idx];
    let grid = anchors.grid();
    let a_count = anchors.count();
    let mut logits = predict_logits(params, &frame.bev_feat)?;
    mask_logits(&mut logits, &frame.validity);
    let alpha = softmax_weights(&logits, *grid).weights().clone();

    // Confidence decode, no-data at dead cells.
    let mut h = vec![f64::NAN; grid.len()];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let i = r * grid.cols + c;
            if frame.dead[i] {
                continue;
            }
            let mut acc = 0.0;
            for a in 0..a_count {
                acc += alpha.get(a, r, c) * anchors.height(a, r, c);
            }
            h[i] = acc;
        }
    }

    // Supervised L1 over the joint-valid set.
    if frame.n_joint == 0 {
        return Err(Error::EmptyValidSet);
    }
    let mut l1 = 0.0;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let i = r * grid.cols + c;
            if frame.joint_valid[i] {
                l1 += (h[i] - frame.gt.get(r, c).expect("joint-valid")).abs();
            }
        }
    }
    let l_h = l1 / frame.n_joint as f64;

    // Footprint splat. The arithmetic mirrors
    // losses::project_confidence_to_image so the two routes agree exactly.
    let cam = &scene.cam;
    let ego_from_road = frame.road_frame.pose.invert();
    let d_col = cam.extrinsic.rotation_matrix()
        * ego_from_road.rotation_matrix()
        * Vector3::z();
    let mut raw = ImageRaster::zeros(cam.width, cam.height);
    let mut splats = Vec::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let i = r * grid.cols + c;
            if frame.dead[i] {
                continue;
            }
            let (x, y) = grid.cell_center(r, c);
            let p_ego = ego_from_road.apply(&Vector3::new(x, y, h[i]));
            let proj = cam.project_point(&p_ego);
            if !proj.valid {
                continue;
            }
            let mut mass = 0.0;
            let mut argmax = 0usize;
            for a in 0..a_count {
                let w = alpha.get(a, r, c);
                if w > mass {
                    mass = w;
                    argmax = a;
                }
            }
            let Some(corners) = bilinear_corners(proj.u, proj.v, cam.width, cam.height) else {
                continue;
            };
            // Derivative of the pixel position w.r.t. the cell height.
            let p_cam = cam.extrinsic.apply(&p_ego);
            let du_dh = cam.fx * (d_col.x * p_cam.z - p_cam.x * d_col.z) / (p_cam.z * p_cam.z);
            let dv_dh = cam.fy * (d_col.y * p_cam.z - p_cam.y * d_col.z) / (p_cam.z * p_cam.z);
            let (v0, u0, _) = corners[0];
            let fu = proj.u - u0 as f64;
            let fv = proj.v - v0 as f64;
            let mut rec = [(0usize, 0.0, 0.0, 0.0); 4];
            let dcorner = [
                (-(1.0 - fv), -(1.0 - fu)),
                (1.0 - fv, -fu),
                (-fv, 1.0 - fu),
                (fv, fu),
            ];
            for (k, (pv, pu, w)) in corners.iter().enumerate() {
                let flat = pv * cam.width + pu;
                if *w > 0.0 {
                    raw.add(*pu, *pv, mass * w);
                }
                rec[k] = (flat, *w, dcorner[k].0, dcorner[k].1);
            }
            splats.push(SplatRecord {
                cell: i,
                mass,
                argmax,
                du_dh,
                dv_dh,
                corners: rec,
            });
        }
    }
    let mut clamped = raw.clone();
    clamped.clamp_in_place(0.0, 1.0);
    let mut inter = 0.0;
    let mut union = 0.0;
    for (f, &m) in clamped.data().iter().zip(frame.ground_mask.data()) {
        let m = if m { 1.0 } else { 0.0 };
        inter += f.min(m);
        union += f.max(m);
    }
    if union == 0.0 {
        return Err(Error::EmptyIou);
    }
    let l_sa = 1.0 - inter / union;

    Ok(FrameForward {
        alpha,
        h,
        splats,
        raw_footprint: raw,
        iou_inter: inter,
        iou_union: union,
        l_sa,
        l_h,
    })
}

/// Warped previous-frame heights at the plan's tap cells.
fn gather_warped(plan: &super::pipeline::WarpPlan, h_prev: &[f64]) -> Vec<f64> {
    plan.taps
        .iter()
        .map(|tap| {
            let mut h = 0.0;
            for (idx, w) in tap.corners {
                if w > 0.0 {
                    h += w * h_prev[idx];
                }
            }
            tap.base + tap.scale * h
        })
        .collect()
}

/// Consistency term of one pair under the configured comparison mode.
/// Returns (sum of |diff|, count, per-tap signed residual signs).
fn pair_consistency(
    scene: &PreparedScene,
    pair: usize,
    fwd: &[FrameForward],
    vs_gt: bool,
) -> (f64, usize, Vec<f64>) {
    let plan = &scene.plans[pair];
    let curr = &scene.frames[pair + 1];
    let grid_cols = curr.gt.grid().cols;
    let warped = gather_warped(plan, &fwd[pair].h);
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut signs = vec![0.0; plan.taps.len()];
    for (t, tap) in plan.taps.iter().enumerate() {
        let (r, c) = (tap.cell / grid_cols, tap.cell % grid_cols);
        let reference = if vs_gt {
            match curr.gt.get(r, c) {
                Some(g) => g,
                None => continue,
            }
        } else {
            if curr.dead[tap.cell] {
                continue;
            }
            fwd[pair + 1].h[tap.cell]
        };
        let diff = warped[t] - reference;
        signs[t] = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        sum += diff.abs();
        n += 1;
    }
    (sum, n, signs)
}

/// Full forward pass: per-frame supervised L1 and IoU terms averaged over
/// frames, the consistency term averaged over consecutive pairs, and the
/// weighted total.
pub fn forward_loss(
    params: &PredictorParams,
    anchors: &SlopeAnchorSet,
    scenes: &[PreparedScene],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, ForwardCache)> {
    if scenes.is_empty() {
        return Err(Error::InvalidConfig("no scenes in the batch".into()));
    }
    let mut cache_scenes = Vec::with_capacity(scenes.len());
    let mut n_frames = 0usize;
    let mut n_pairs = 0usize;
    let mut sum_sa = 0.0;
    let mut sum_h = 0.0;
    let mut sum_cons = 0.0;
    for scene in scenes {
        let mut fwd = Vec::with_capacity(scene.frames.len());
        for f in 0..scene.frames.len() {
            let frame = forward_frame(params, anchors, scene, f)?;
            sum_sa += frame.l_sa;
            sum_h += frame.l_h;
            fwd.push(frame);
        }
        n_frames += scene.frames.len();
        for p in 0..scene.plans.len() {
            let (sum, n, _) = pair_consistency(scene, p, &fwd, cfg.consistency_vs_gt);
            if n > 0 {
                sum_cons += sum / n as f64;
            }
            n_pairs += 1;
        }
        cache_scenes.push(fwd);
    }
    if cfg.loss_weights.lambda_cons > 0.0 && n_pairs == 0 {
        return Err(Error::InvalidConfig(
            "consistency loss is enabled but no scene has two consecutive frames".into(),
        ));
    }
    let l_sa = sum_sa / n_frames as f64;
    let l_h = sum_h / n_frames as f64;
    let l_cons = if n_pairs == 0 {
        0.0
    } else {
        sum_cons / n_pairs as f64
    };
    let w = &cfg.loss_weights;
    let breakdown = LossBreakdown {
        total: w.lambda_sa * l_sa + w.lambda_cons * l_cons + w.lambda_h * l_h,
        l_sa,
        l_cons,
        l_h,
    };
    Ok((
        breakdown,
        ForwardCache {
            scenes: cache_scenes,
            n_frames,
            n_pairs,
            breakdown,
        },
    ))
}

/// Exact gradient of [`forward_loss`] with respect to the predictor
/// parameters; the L1 subgradient at a kink is 0.
pub fn backward(
    cache: &ForwardCache,
    params: &PredictorParams,
    anchors: &SlopeAnchorSet,
    scenes: &[PreparedScene],
    cfg: &TrainConfig,
) -> Gradients {
    let grid = anchors.grid();
    let a_count = anchors.count();
    let channels = params.channels();
    let w_cfg = &cfg.loss_weights;
    let mut grads = Gradients::zeros(channels, a_count);
    let frame_norm = 1.0 / cache.n_frames as f64;
    let pair_norm = if cache.n_pairs == 0 {
        0.0
    } else {
        1.0 / cache.n_pairs as f64
    };

    for (scene, fwd) in scenes.iter().zip(&cache.scenes) {
        // dL/dH per frame, accumulated across the three loss paths.
        let mut d_h: Vec<Vec<f64>> = fwd.iter().map(|_| vec![0.0; grid.len()]).collect();
        let mut d_mass: Vec<Vec<f64>> = fwd.iter().map(|_| vec![0.0; grid.len()]).collect();

        // Supervised L1.
        if w_cfg.lambda_h > 0.0 {
            for (f, frame) in scene.frames.iter().enumerate() {
                let coef = w_cfg.lambda_h * frame_norm / frame.n_joint as f64;
                for r in 0..grid.rows {
                    for c in 0..grid.cols {
                        let i = r * grid.cols + c;
                        if !frame.joint_valid[i] {
                            continue;
                        }
                        let diff = fwd[f].h[i] - frame.gt.get(r, c).expect("joint-valid");
                        d_h[f][i] += coef * diff.signum_or_zero();
                    }
                }
            }
        }

        // Temporal consistency.
        if w_cfg.lambda_cons > 0.0 {
            for p in 0..scene.plans.len() {
                let (_, n, signs) = pair_consistency(scene, p, fwd, cfg.consistency_vs_gt);
                if n == 0 {
                    continue;
                }
                let coef = w_cfg.lambda_cons * pair_norm / n as f64;
                let plan = &scene.plans[p];
                for (tap, s) in plan.taps.iter().zip(&signs) {
                    if *s == 0.0 {
                        continue;
                    }
                    // d|warped - ref| / d h_prev(corner), and (in
                    // predicted-vs-predicted mode) / d h_curr(cell).
                    for (idx, w) in tap.corners {
                        if w > 0.0 {
                            d_h[p][idx] += coef * s * tap.scale * w;
                        }
                    }
                    if !cfg.consistency_vs_gt {
                        d_h[p + 1][tap.cell] -= coef * s;
                    }
                }
            }
        }

        // IoU footprint.
        if w_cfg.lambda_sa > 0.0 {
            for (f, frame_fwd) in fwd.iter().enumerate() {
                let coef = w_cfg.lambda_sa * frame_norm;
                let u_sum = frame_fwd.iou_inter;
                let v_sum = frame_fwd.iou_union;
                let mask = scene.frames[f].ground_mask.data();
                for rec in &frame_fwd.splats {
                    for (flat, w, dw_du, dw_dv) in rec.corners {
                        if frame_fwd.raw_footprint.data()[flat] >= 1.0 {
                            continue; // clamped pixel: zero derivative
                        }
                        let m = if mask[flat] { 1.0 } else { 0.0 };
                        // L_sa = 1 - U/V with dU/df = m and dV/df = 1 - m.
                        let dl_df = coef * (-m / v_sum + (1.0 - m) * u_sum / (v_sum * v_sum));
                        if w > 0.0 {
                            d_mass[f][rec.cell] += dl_df * w;
                        }
                        d_h[f][rec.cell] +=
                            dl_df * rec.mass * (dw_du * rec.du_dh + dw_dv * rec.dv_dh);
                    }
                }
            }
        }

        // Chain through the confidence decode and the softmax into logits,
        // then into the linear predictor.
        let mut g = vec![0.0f64; a_count];
        for (f, frame) in scene.frames.iter().enumerate() {
            let alpha = &fwd[f].alpha;
            // At most one splat record exists per cell.
            let mut argmax_of_cell = vec![usize::MAX; grid.len()];
            for rec in &fwd[f].splats {
                argmax_of_cell[rec.cell] = rec.argmax;
            }
            for r in 0..grid.rows {
                for c in 0..grid.cols {
                    let i = r * grid.cols + c;
                    if frame.dead[i] {
                        continue;
                    }
                    let dh = d_h[f][i];
                    let dm = d_mass[f][i];
                    if dh == 0.0 && dm == 0.0 {
                        continue;
                    }
                    // dL/d alpha_a = dH * Anchor_a + dMass * [a == argmax].
                    let mut dot = 0.0;
                    for a in 0..a_count {
                        let mut ga = dh * anchors.height(a, r, c);
                        if dm != 0.0 && argmax_of_cell[i] == a {
                            ga += dm;
                        }
                        g[a] = ga;
                        dot += alpha.get(a, r, c) * ga;
                    }
                    for a in 0..a_count {
                        let w_a = alpha.get(a, r, c);
                        if w_a == 0.0 {
                            continue;
                        }
                        let d_logit = w_a * (g[a] - dot);
                        if d_logit == 0.0 {
                            continue;
                        }
                        let feat = frame.bev_feat.get(r, c);
                        for (ch, &fv) in feat.iter().enumerate() {
                            grads.d_weight[ch * a_count + a] += fv * d_logit;
                        }
                        grads.d_bias[a] += d_logit;
                    }
                }
            }
        }
    }
    grads
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}
