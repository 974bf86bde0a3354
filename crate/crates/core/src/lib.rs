//! Slope-aware BEV heightmap estimation toolkit.
//!
//! The crate is organized around the bird's-eye-view (BEV) road heightmap:
//! [`geometry`] provides rigid transforms and pinhole projection,
//! [`heightgrid`] the BEV grid, heightmap container and slope anchors,
//! [`fusion`] the slope-aware adaptive feature blend, [`consistency`] the
//! ego-motion-compensated temporal warp, [`losses`] and [`metrics`] the
//! training losses and evaluation suite, [`synth`] a procedural scene
//! generator used as ground truth, and [`toytrain`] a small hand-derived
//! gradient trainer for the anchor-weight predictor.

pub mod consistency;
pub mod fusion;
pub mod geometry;
pub mod heightgrid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod raster;
pub mod synth;
pub mod toytrain;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),
    #[error("invalid BEV grid: {0}")]
    InvalidGrid(String),
    #[error("height {0} outside the +/-50 m sanity bound")]
    HeightOutOfRange(f64),
    #[error("invalid slope set: {0}")]
    InvalidSlopes(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate warp: rotation tilts the BEV plane beyond 45 degrees")]
    DegenerateWarp,
    #[error("no jointly valid cells")]
    EmptyValidSet,
    #[error("IoU undefined: footprint and mask are both empty")]
    EmptyIou,
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step}: loss {loss} exceeds 10x initial {initial}")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use consistency::{consistency_loss, relative_transform, warp_heightmap, OverlapMask};
pub use fusion::{
    confidence_heightmap, fuse_features, project_and_sample, softmax_weights, AnchorTensor,
    AnchorValidity, FeatureGrid, GroundMask, WeightField,
};
pub use geometry::{
    road_frame_from_camera, CameraModel, PixelProjection, RigidTransform, RoadFrame,
};
pub use heightgrid::{make_anchor_set, rasterize_surface, BevGrid, HeightMap, SlopeAnchorSet};
pub use losses::{
    height_l1, iou_loss_sa, project_confidence_to_image, total_loss, LossWeights,
};
pub use metrics::{acc_at, evaluate, mae, rmse, HeightReport, DEFAULT_THRESHOLDS};
pub use raster::ImageRaster;
