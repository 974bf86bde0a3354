//! Ray-marched rendering of ground masks, exact depth maps and feature
//! grids, plus the depth-to-height derivation and road-frame ground-truth
//! rasterization.

use nalgebra::Vector3;

use super::noise::ValueNoise;
use super::scene::GRADE_CUE_SCALE;
use super::surface::Surface;
use super::trajectory::TrajectoryFrame;
use crate::fusion::{FeatureGrid, GroundMask};
use crate::geometry::{CameraModel, RigidTransform, RoadFrame};
use crate::heightgrid::{rasterize_surface, BevGrid, HeightMap};
use crate::par;
use crate::raster::ImageRaster;
use crate::{Error, Result};

/// Ray-march step in meters.
const MARCH_STEP: f64 = 0.25;
/// Bisection refinement tolerance along the ray, in meters.
const BISECT_TOL: f64 = 1e-4;
/// Absolute far-plane cutoff for rays that never leave the extent slab.
const FAR_PLANE: f64 = 400.0;
/// Extent margin (m) before a ray is abandoned as outside the grid forever.
const EXTENT_MARGIN: f64 = 5.0;
/// Lattice spacing of the noise channels, in pixels.
const NOISE_CELL_PX: f64 = 16.0;

/// One ray-surface intersection.
#[derive(Debug, Clone, Copy)]
struct Hit {
    world: Vector3<f64>,
    /// Camera-frame depth (z) of the hit.
    depth: f64,
    /// Whether the hit lands inside the BEV grid extent in road coordinates.
    in_extent: bool,
}

struct Tracer<'a> {
    surface: &'a Surface,
    cam: &'a CameraModel,
    world_from_cam: RigidTransform,
    cam_from_world: RigidTransform,
    road_from_world: RigidTransform,
    grid: BevGrid,
}

impl<'a> Tracer<'a> {
    fn new(surface: &'a Surface, tf: &TrajectoryFrame, cam: &'a CameraModel, grid: BevGrid) -> Self {
        let cam_from_world = cam.extrinsic.compose(&tf.world_from_ego.invert());
        Self {
            surface,
            cam,
            world_from_cam: cam_from_world.invert(),
            cam_from_world,
            road_from_world: tf.road_from_world(),
            grid,
        }
    }

    /// March the pixel ray until the first surface crossing, refine it by
    /// bisection and classify it against the grid extent.
    fn trace(&self, u: usize, v: usize) -> Option<Hit> {
        let dir_cam = Vector3::new(
            (u as f64 - self.cam.cx) / self.cam.fx,
            (v as f64 - self.cam.cy) / self.cam.fy,
            1.0,
        )
        .normalize();
        let origin = self.world_from_cam.apply(&Vector3::zeros());
        let dir = self.world_from_cam.rotation_matrix() * dir_cam;

        // Road-frame x and y are affine in the ray parameter; once the ray
        // has left the extent slab (plus margin) it can never return, so the
        // march stops there.
        let o_road = self.road_from_world.apply(&origin);
        let d_road = self.road_from_world.rotation_matrix() * dir;
        let x_lo = self.grid.x_min - EXTENT_MARGIN;
        let x_hi = self.grid.x_min + self.grid.cols as f64 * self.grid.meters_per_pixel
            + EXTENT_MARGIN;
        let y_lo = self.grid.y_min - EXTENT_MARGIN;
        let y_hi = self.grid.y_min + self.grid.rows as f64 * self.grid.meters_per_pixel
            + EXTENT_MARGIN;
        let mut s_max = FAR_PLANE;
        for (o, d, lo, hi) in [
            (o_road.x, d_road.x, x_lo, x_hi),
            (o_road.y, d_road.y, y_lo, y_hi),
        ] {
            if d.abs() < 1e-12 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - o) / d, (hi - o) / d);
                let exit = a.max(b);
                if exit <= 0.0 {
                    return None;
                }
                s_max = s_max.min(exit);
            }
        }

        let f = |s: f64| {
            let p = origin + dir * s;
            p.z - self.surface.height(p.x, p.y)
        };
        let mut s_prev = 0.0;
        let mut f_prev = f(0.0);
        if f_prev <= 0.0 {
            return None; // camera at or below the surface
        }
        let mut s = 0.0;
        loop {
            s = (s + MARCH_STEP).min(s_max);
            let fs = f(s);
            if fs <= 0.0 {
                // Bisect [s_prev, s] down to the tolerance.
                let (mut lo, mut hi) = (s_prev, s);
                while hi - lo > BISECT_TOL {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let s_hit = 0.5 * (lo + hi);
                let world = origin + dir * s_hit;
                let road = self.road_from_world.apply(&world);
                let depth = self.cam_from_world.apply(&world).z;
                return Some(Hit {
                    world,
                    depth,
                    in_extent: self.grid.contains(road.x, road.y),
                });
            }
            if s >= s_max {
                return None;
            }
            s_prev = s;
            f_prev = fs;
            let _ = f_prev;
        }
    }
}

/// Everything one frame render produces: ground mask, exact depth (camera-z,
/// NaN off-ground) and the feature grid.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub mask: GroundMask,
    pub depth: ImageRaster,
    pub features: FeatureGrid,
}

fn trace_rows(
    surface: &Surface,
    tf: &TrajectoryFrame,
    cam: &CameraModel,
    grid: BevGrid,
) -> Vec<Vec<Option<Hit>>> {
    let tracer = Tracer::new(surface, tf, cam, grid);
    par::map_rows(cam.height, |v| {
        (0..cam.width).map(|u| tracer.trace(u, v)).collect()
    })
}

/// Render the binary ground mask: a pixel is set iff its ray hits the surface
/// inside the grid extent of this frame's road coordinates.
pub fn render_ground_mask(
    surface: &Surface,
    tf: &TrajectoryFrame,
    cam: &CameraModel,
    grid: BevGrid,
) -> GroundMask {
    render_frame(surface, tf, cam, grid, 2, 0).mask
}

/// Render the exact per-pixel depth (camera-frame z) of the ground
/// intersection; NaN where the mask is clear.
pub fn render_depth(
    surface: &Surface,
    tf: &TrajectoryFrame,
    cam: &CameraModel,
    grid: BevGrid,
) -> ImageRaster {
    render_frame(surface, tf, cam, grid, 2, 0).depth
}

/// Render the synthetic feature grid: channel 0 is the ground indicator,
/// channel 1 the local surface grade at the ground intersection normalized by
/// the grade bound (0 off-ground), and the remaining channels seeded smooth
/// value noise.
pub fn render_feature_grid(
    surface: &Surface,
    tf: &TrajectoryFrame,
    cam: &CameraModel,
    grid: BevGrid,
    channels: usize,
    seed: u64,
) -> Result<FeatureGrid> {
    if channels < 2 {
        return Err(Error::InvalidSpec(format!(
            "feature grids need >= 2 channels, got {channels}"
        )));
    }
    Ok(render_frame(surface, tf, cam, grid, channels, seed).features)
}

/// Trace the frame once and derive mask, depth and features together.
pub fn render_frame(
    surface: &Surface,
    tf: &TrajectoryFrame,
    cam: &CameraModel,
    grid: BevGrid,
    channels: usize,
    seed: u64,
) -> RenderedFrame {
    assert!(channels >= 2, "feature grids need >= 2 channels");
    let hits = trace_rows(surface, tf, cam, grid);
    let mut mask = GroundMask::new(cam.width, cam.height);
    let mut depth = ImageRaster::missing(cam.width, cam.height);
    let mut features =
        FeatureGrid::zeros(cam.height, cam.width, channels).expect("image is nonempty");
    let noises: Vec<ValueNoise> = (2..channels)
        .map(|c| ValueNoise::new(seed, c as u64, NOISE_CELL_PX))
        .collect();
    let mut vals = vec![0.0; channels];
    for v in 0..cam.height {
        for u in 0..cam.width {
            vals.fill(0.0);
            if let Some(hit) = hits[v][u] {
                if hit.in_extent {
                    mask.set(u, v, true);
                    depth.set(u, v, hit.depth);
                    vals[0] = 1.0;
                    let (_, gy) = surface.gradient(hit.world.x, hit.world.y);
                    vals[1] = gy / GRADE_CUE_SCALE;
                }
            }
            for (i, n) in noises.iter().enumerate() {
                vals[2 + i] = n.sample(u as f64, v as f64);
            }
            features.set(v, u, &vals);
        }
    }
    RenderedFrame {
        mask,
        depth,
        features,
    }
}

/// How multiple depth samples landing in one BEV cell are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccumMode {
    Mean,
    Median,
}

/// Back-project every masked depth pixel into the road frame and accumulate
/// heights per BEV cell (mean by default); untouched cells stay no-data.
pub fn height_from_depth(
    depth: &ImageRaster,
    seg: &GroundMask,
    frame: &RoadFrame,
    cam: &CameraModel,
    grid: BevGrid,
) -> Result<HeightMap> {
    height_from_depth_with(depth, seg, frame, cam, grid, AccumMode::Mean)
}

pub fn height_from_depth_with(
    depth: &ImageRaster,
    seg: &GroundMask,
    frame: &RoadFrame,
    cam: &CameraModel,
    grid: BevGrid,
    mode: AccumMode,
) -> Result<HeightMap> {
    if depth.width() != cam.width
        || depth.height() != cam.height
        || seg.width() != cam.width
        || seg.height() != cam.height
    {
        return Err(Error::ShapeMismatch(format!(
            "depth {}x{} / mask {}x{} vs camera {}x{}",
            depth.width(),
            depth.height(),
            seg.width(),
            seg.height(),
            cam.width,
            cam.height
        )));
    }
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for v in 0..cam.height {
        for u in 0..cam.width {
            if !seg.get(u, v) {
                continue;
            }
            let z = depth.get(u, v);
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::Format(format!(
                    "masked pixel ({u},{v}) has non-positive depth {z}"
                )));
            }
            let p_ego = cam.backproject_pixel(u as f64, v as f64, z);
            let p_road = frame.pose.apply(&p_ego);
            if let Some((r, c)) = grid.cell_of(p_road.x, p_road.y) {
                buckets[r * grid.cols + c].push(p_road.z);
            }
        }
    }
    let mut map = HeightMap::nodata(grid);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let bucket = &mut buckets[r * grid.cols + c];
            if bucket.is_empty() {
                continue;
            }
            let h = match mode {
                AccumMode::Mean => bucket.iter().sum::<f64>() / bucket.len() as f64,
                AccumMode::Median => {
                    bucket.sort_by(|a, b| a.partial_cmp(b).expect("finite heights"));
                    let mid = bucket.len() / 2;
                    if bucket.len() % 2 == 1 {
                        bucket[mid]
                    } else {
                        0.5 * (bucket[mid - 1] + bucket[mid])
                    }
                }
            };
            map.set(r, c, h)?;
        }
    }
    Ok(map)
}

/// Height of the world surface expressed in a road frame: for road-plane
/// coordinates (x, y), Newton-solve for the z at which the road-frame
/// vertical line meets the surface.
pub fn road_height_fn<'a>(
    surface: &'a Surface,
    road_from_world: &RigidTransform,
) -> impl Fn(f64, f64) -> f64 + 'a {
    let world_from_road = road_from_world.invert();
    move |x: f64, y: f64| {
        let mut z = 0.0;
        for _ in 0..12 {
            let p = world_from_road.apply(&Vector3::new(x, y, z));
            let g = p.z - surface.height(p.x, p.y);
            let (hx, hy) = surface.gradient(p.x, p.y);
            let col = world_from_road.rotation_matrix().column(2);
            let dg = col[2] - hx * col[0] - hy * col[1];
            debug_assert!(dg.abs() > 0.2, "degenerate road vertical");
            let step = g / dg;
            z -= step;
            if step.abs() < 1e-12 {
                break;
            }
        }
        z
    }
}

/// Ground-truth heightmap for one trajectory frame: the surface rasterized in
/// that frame's road coordinates.
pub fn rasterize_gt(
    surface: &Surface,
    tf: &TrajectoryFrame,
    grid: BevGrid,
) -> Result<HeightMap> {
    let road_from_world = tf.road_from_world();
    let f = road_height_fn(surface, &road_from_world);
    let mut map = rasterize_surface(grid, f)?;
    map.set_frame(tf.road_frame);
    Ok(map)
}
