//! Procedural ground-truth generation: parametric road surfaces, camera
//! trajectories, rendered ground masks / depths / feature grids, and the
//! depth-to-height derivation.

pub mod noise;
pub mod render;
pub mod scene;
pub mod surface;
pub mod trajectory;

pub use render::{
    height_from_depth, height_from_depth_with, rasterize_gt, render_depth, render_feature_grid,
    render_frame, render_ground_mask, road_height_fn, AccumMode, RenderedFrame,
};
pub use scene::{CameraRig, SceneSpec, SurfaceSpec};
pub use surface::{gen_surface, Surface};
pub use trajectory::{gen_trajectory, TrajectoryFrame};
