//! Camera trajectories over a surface: ego poses riding the surface tangent,
//! the derived road frames, and exact per-step ego motions.

use nalgebra::{Matrix3, Vector3};

use super::scene::SceneSpec;
use super::surface::Surface;
use crate::geometry::{RigidTransform, RoadFrame};
use crate::Result;

/// One trajectory sample: the road frame (road <- ego) the heightmap lives
/// in, plus the ego pose in the synthetic world frame used for rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFrame {
    pub road_frame: RoadFrame,
    pub world_from_ego: RigidTransform,
}

impl TrajectoryFrame {
    pub fn road_from_world(&self) -> RigidTransform {
        self.road_frame.pose.compose(&self.world_from_ego.invert())
    }
}

/// Ego pose on the surface at path coordinate y (the path runs along world
/// x = 0): origin on the surface, y-axis tangent along the travel direction,
/// z-axis the surface normal.
fn ego_pose_at(surface: &Surface, y: f64) -> Result<RigidTransform> {
    let h = surface.height(0.0, y);
    let (gx, gy) = surface.gradient(0.0, y);
    let tangent = Vector3::new(0.0, 1.0, gy).normalize();
    let normal = Vector3::new(-gx, -gy, 1.0).normalize();
    let x_axis = tangent.cross(&normal);
    let rotation = Matrix3::from_columns(&[x_axis, tangent, normal]);
    RigidTransform::new(rotation, Vector3::new(0.0, y, h))
}

/// Generate the trajectory: `length` frames advancing `ego_speed * frame_dt`
/// meters of arc length per frame, the road frame re-derived tangent to the
/// surface at every step, and the exact ego-motion transform between
/// consecutive frames.
pub fn gen_trajectory(
    spec: &SceneSpec,
    surface: &Surface,
) -> Result<(Vec<TrajectoryFrame>, Vec<RigidTransform>)> {
    spec.validate()?;
    let step_arc = spec.ego_speed * spec.frame_dt;
    // Road <- ego is constant for a rigid rig on tangent frames: the road
    // origin is the camera center projected onto the tangent plane.
    let road_from_ego = RigidTransform::translation(
        -spec.camera.lateral_offset_m,
        -spec.camera.forward_offset_m,
        0.0,
    );

    let mut frames = Vec::with_capacity(spec.length);
    let mut y = 0.0f64;
    let mut poses = Vec::with_capacity(spec.length);
    for k in 0..spec.length {
        let world_from_ego = ego_pose_at(surface, y)?;
        poses.push(world_from_ego);
        frames.push(TrajectoryFrame {
            road_frame: RoadFrame::new(road_from_ego, k),
            world_from_ego,
        });
        if k + 1 < spec.length {
            // Advance one frame of arc length along (y, h(0, y)) with small
            // deterministic substeps.
            const SUBSTEPS: usize = 64;
            let ds = step_arc / SUBSTEPS as f64;
            for _ in 0..SUBSTEPS {
                let (_, gy) = surface.gradient(0.0, y);
                y += ds / (1.0 + gy * gy).sqrt();
            }
        }
    }
    let ego_motions = poses
        .windows(2)
        .map(|w| w[1].invert().compose(&w[0]))
        .collect();
    Ok((frames, ego_motions))
}
