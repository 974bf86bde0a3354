//! Rigid transforms, coordinate frames and pinhole projection.
//!
//! Frame conventions, pinned once for the whole crate:
//! - road frame: x-right, y-forward, z-up (z along the road-plane normal);
//! - ego frame: x-right, y-forward, z-up, origin on the road surface;
//! - camera frame: x-right, y-down, z-forward (optical axis).
//!
//! All transforms are stored as an orthonormal rotation matrix plus a
//! translation vector and map points as `p' = R * p + t`.

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Behind-camera cutoff: projections with camera-frame z below this are invalid.
pub const EPS_DEPTH: f64 = 1e-6;
/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;
/// Drift above which rotations loaded from files are re-orthonormalized.
pub const RENORMALIZE_DRIFT: f64 = 1e-7;

/// SE(3) pose: `p' = R * p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Max-abs deviation of `R^T R` from the identity plus determinant error.
fn rotation_drift(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r;
    let mut drift: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            drift = drift.max((gram[(i, j)] - target).abs());
        }
    }
    drift.max((r.determinant() - 1.0).abs())
}

/// Nearest rotation matrix in the Frobenius sense (via SVD). Inputs far from
/// any rotation (singular values off unity by more than 0.5) are rejected
/// rather than silently projected.
fn orthonormalize(r: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = r.svd(true, true);
    if svd
        .singular_values
        .iter()
        .any(|&s| !(0.5..=1.5).contains(&s))
    {
        return Err(Error::InvalidTransform(format!(
            "matrix is not close to a rotation (singular values {:?})",
            svd.singular_values.as_slice()
        )));
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::InvalidTransform("SVD failed".into())),
    };
    let mut fixed = u * v_t;
    if fixed.determinant() < 0.0 {
        // Flip the singular direction with the smallest singular value.
        let mut u = u;
        for i in 0..3 {
            u[(i, 2)] = -u[(i, 2)];
        }
        fixed = u * v_t;
    }
    if rotation_drift(&fixed) > ROTATION_TOL {
        return Err(Error::InvalidTransform(
            "matrix is not recoverable as a rotation".into(),
        ));
    }
    Ok(fixed)
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build from parts, enforcing the orthonormality invariant.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entries".into()));
        }
        if rotation_drift(&rotation) > ROTATION_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation drift {:.3e} exceeds {:.0e}",
                rotation_drift(&rotation),
                ROTATION_TOL
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Build from parts read from a file: small drift (below
    /// [`RENORMALIZE_DRIFT`]) is accepted as-is, larger drift is projected
    /// back onto SO(3), and anything irrecoverable is rejected.
    pub fn from_parts_renormalized(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entries".into()));
        }
        let rotation = if rotation_drift(&rotation) > RENORMALIZE_DRIFT {
            orthonormalize(&rotation)?
        } else {
            rotation
        };
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rotation_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation_vector(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Self {
        let rot_t = self.rotation.transpose();
        Self {
            rotation: rot_t,
            translation: -(rot_t * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_points(&self, pts: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        pts.iter().map(|p| self.apply(p)).collect()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Pinhole camera with a rigid `camera <- ego` extrinsic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub extrinsic: RigidTransform,
}

/// Result of projecting one point. `valid` is false behind the camera or
/// outside the sampleable image domain `[0, w-1] x [0, h-1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        extrinsic: RigidTransform,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(0.0 <= cx && cx < width as f64 && 0.0 <= cy && cy < height as f64) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        })
    }

    fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u <= (self.width - 1) as f64 && v >= 0.0 && v <= (self.height - 1) as f64
    }

    /// Project one ego-frame point. Invalid projections are flagged, never an
    /// error: anchors routinely land behind the camera or off the image.
    pub fn project_point(&self, p_ego: &Vector3<f64>) -> PixelProjection {
        let p_cam = self.extrinsic.apply(p_ego);
        if p_cam.z <= EPS_DEPTH {
            return PixelProjection {
                u: 0.0,
                v: 0.0,
                valid: false,
            };
        }
        let u = self.fx * p_cam.x / p_cam.z + self.cx;
        let v = self.fy * p_cam.y / p_cam.z + self.cy;
        PixelProjection {
            u,
            v,
            valid: self.in_bounds(u, v),
        }
    }

    pub fn project(&self, pts_ego: &[Vector3<f64>]) -> Vec<PixelProjection> {
        pts_ego.iter().map(|p| self.project_point(p)).collect()
    }

    /// Back-project pixel (u, v) at camera-frame depth `z` into the ego frame.
    pub fn backproject_pixel(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        let p_cam = Vector3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z);
        self.extrinsic.invert().apply(&p_cam)
    }

    /// Camera center expressed in the ego frame.
    pub fn center_in_ego(&self) -> Vector3<f64> {
        *self.extrinsic.invert().translation_vector()
    }
}

/// Road coordinate frame for one timestamp: `pose` maps ego-frame points into
/// road-frame points (road <- ego).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadFrame {
    pub pose: RigidTransform,
    pub timestamp: usize,
}

impl RoadFrame {
    pub fn new(pose: RigidTransform, timestamp: usize) -> Self {
        Self { pose, timestamp }
    }
}

impl Default for RoadFrame {
    fn default() -> Self {
        Self {
            pose: RigidTransform::identity(),
            timestamp: 0,
        }
    }
}

/// Derive the road frame from the camera rig: the road plane passes
/// `camera_height` meters below the camera center with normal +z (ego),
/// the road origin is the camera center projected onto that plane, and the
/// road y-axis is the in-plane projection of the viewing direction, which is
/// the ego forward axis pitched down by `camera_pitch`.
pub fn road_frame_from_camera(
    cam: &CameraModel,
    camera_height: f64,
    camera_pitch: f64,
) -> Result<RoadFrame> {
    if !(camera_height > 0.0) {
        return Err(Error::InvalidCamera(format!(
            "camera height must be positive, got {camera_height}"
        )));
    }
    let normal = Vector3::z();
    let view = Vector3::new(0.0, camera_pitch.cos(), -camera_pitch.sin());
    let in_plane = view - normal * view.dot(&normal);
    let norm = in_plane.norm();
    if norm < 1e-9 {
        return Err(Error::DegenerateProjection(
            "viewing direction is parallel to the road-plane normal".into(),
        ));
    }
    let y_axis = in_plane / norm;
    let x_axis = y_axis.cross(&normal);
    let origin = cam.center_in_ego() - normal * camera_height;
    let rotation = Matrix3::from_rows(&[
        x_axis.transpose(),
        y_axis.transpose(),
        normal.transpose(),
    ]);
    let translation = -(rotation * origin);
    Ok(RoadFrame::new(
        RigidTransform::new(rotation, translation)?,
        0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 4x4 homogeneous matrix oracle for composition/application.
    fn to_homogeneous(t: &RigidTransform) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = t.rotation_matrix()[(i, j)];
            }
            m[(i, 3)] = t.translation_vector()[i];
        }
        m
    }

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle: f64 = rng.random_range(-3.0..3.0);
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let t = Vector3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        );
        RigidTransform::new(rot.into_inner(), t).unwrap()
    }

    #[test]
    fn compose_identity_is_neutral() {
        let t = RigidTransform::translation(1.0, 2.0, 3.0);
        let out = RigidTransform::identity().compose(&t);
        assert_eq!(out, t);
        let out = t.compose(&RigidTransform::identity());
        assert_eq!(out, t);
    }

    #[test]
    fn compose_translations_add() {
        let a = RigidTransform::translation(1.0, 0.0, 0.0);
        let b = RigidTransform::translation(0.0, 2.0, 0.0);
        let c = a.compose(&b);
        assert_eq!(*c.translation_vector(), Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn compose_matches_homogeneous_oracle() {
        // rotZ(90 deg) ∘ translate(1,0,0) applied to the origin -> (0,1,0).
        let a = RigidTransform::rotation_z(std::f64::consts::FRAC_PI_2);
        let b = RigidTransform::translation(1.0, 0.0, 0.0);
        let composed = a.compose(&b);
        let p = composed.apply(&Vector3::zeros());
        assert_relative_eq!(p, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);

        // Oracle: 4x4 homogeneous multiply on random pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_transform(&mut rng);
            let b = random_transform(&mut rng);
            let ours = to_homogeneous(&a.compose(&b));
            let oracle = to_homogeneous(&a) * to_homogeneous(&b);
            for i in 0..4 {
                for j in 0..4 {
                    assert_relative_eq!(ours[(i, j)], oracle[(i, j)], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn invert_trivial_cases() {
        assert_eq!(
            RigidTransform::identity().invert(),
            RigidTransform::identity()
        );
        let t = RigidTransform::translation(3.0, 0.0, 0.0);
        assert_eq!(
            *t.invert().translation_vector(),
            Vector3::new(-3.0, 0.0, 0.0)
        );
    }

    #[test]
    fn invert_matches_matrix_inverse_oracle() {
        let t = RigidTransform::rotation_z(30f64.to_radians())
            .compose(&RigidTransform::translation(1.0, 2.0, 0.0));
        let inv = t.invert();
        let oracle = to_homogeneous(&t).try_inverse().unwrap();
        let ours = to_homogeneous(&inv);
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(ours[(i, j)], oracle[(i, j)], epsilon = 1e-12);
            }
        }
        // compose-to-identity check, both orders, random transforms
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let t = random_transform(&mut rng);
            for composed in [t.compose(&t.invert()), t.invert().compose(&t)] {
                let h = to_homogeneous(&composed);
                for i in 0..4 {
                    for j in 0..4 {
                        let target = if i == j { 1.0 } else { 0.0 };
                        assert!((h[(i, j)] - target).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn transform_points_basic() {
        let id = RigidTransform::identity();
        assert_eq!(
            id.transform_points(&[Vector3::new(1.0, 2.0, 3.0)]),
            vec![Vector3::new(1.0, 2.0, 3.0)]
        );
        let lift = RigidTransform::translation(0.0, 0.0, 1.0);
        assert_eq!(
            lift.transform_points(&[Vector3::zeros()]),
            vec![Vector3::new(0.0, 0.0, 1.0)]
        );
        // Rotation oracle: rotZ(90 deg) sends (1,0,0) to (0,1,0).
        let rot = RigidTransform::rotation_z(std::f64::consts::FRAC_PI_2);
        let out = rot.transform_points(&[Vector3::new(1.0, 0.0, 0.0)]);
        assert_relative_eq!(out[0], Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn transform_points_preserves_pairwise_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random_transform(&mut rng);
            let pts: Vec<Vector3<f64>> = (0..8)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                    )
                })
                .collect();
            let moved = t.transform_points(&pts);
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    let before = (pts[i] - pts[j]).norm();
                    let after = (moved[i] - moved[j]).norm();
                    assert!((before - after).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(skewed, Vector3::zeros()).is_err());
        // ...but the renormalizing constructor recovers it.
        let fixed = RigidTransform::from_parts_renormalized(skewed, Vector3::zeros()).unwrap();
        assert!(rotation_drift(fixed.rotation_matrix()) <= ROTATION_TOL);
    }

    #[test]
    fn rejects_reflection() {
        let mirror = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::new(mirror, Vector3::zeros()).is_err());
    }

    fn test_camera() -> CameraModel {
        CameraModel::new(
            500.0,
            500.0,
            400.0,
            300.0,
            800,
            600,
            RigidTransform::identity(),
        )
        .unwrap()
    }

    #[test]
    fn project_principal_point() {
        let cam = test_camera();
        let p = cam.project_point(&Vector3::new(0.0, 0.0, 5.0));
        assert!(p.valid);
        assert_relative_eq!(p.u, 400.0);
        assert_relative_eq!(p.v, 300.0);
    }

    #[test]
    fn project_pinhole_formula_oracle() {
        let cam = test_camera();
        let p = cam.project_point(&Vector3::new(1.0, 0.0, 5.0));
        assert!(p.valid);
        // u = fx * x/z + cx = 500 * 0.2 + 400
        assert_relative_eq!(p.u, 500.0);
        assert_relative_eq!(p.v, 300.0);
    }

    #[test]
    fn project_behind_camera_is_invalid() {
        let cam = test_camera();
        let p = cam.project_point(&Vector3::new(0.0, 0.0, -1.0));
        assert!(!p.valid);
        // Exactly at the cutoff is also invalid.
        let p = cam.project_point(&Vector3::new(0.0, 0.0, EPS_DEPTH));
        assert!(!p.valid);
    }

    #[test]
    fn project_outside_image_is_invalid() {
        let cam = test_camera();
        let p = cam.project_point(&Vector3::new(10.0, 0.0, 5.0));
        assert!(!p.valid); // u = 1400, far off the 800-wide image
    }

    #[test]
    fn backproject_project_roundtrip() {
        let pitch: f64 = 0.08;
        let extr = RigidTransform::new(
            Matrix3::new(
                1.0,
                0.0,
                0.0,
                0.0,
                -pitch.sin(),
                -pitch.cos(),
                0.0,
                pitch.cos(),
                -pitch.sin(),
            ),
            Vector3::new(0.1, -0.2, 0.3),
        )
        .unwrap();
        let cam = CameraModel::new(450.0, 460.0, 320.0, 240.0, 640, 480, extr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = rng.random_range(0.0..639.0);
            let v = rng.random_range(0.0..479.0);
            let z = rng.random_range(0.5..80.0);
            let p_ego = cam.backproject_pixel(u, v, z);
            let proj = cam.project_point(&p_ego);
            assert!(proj.valid);
            assert!((proj.u - u).abs() < 1e-6, "u {} vs {}", proj.u, u);
            assert!((proj.v - v).abs() < 1e-6, "v {} vs {}", proj.v, v);
        }
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(
            -1.0,
            1.0,
            0.0,
            0.0,
            10,
            10,
            RigidTransform::identity()
        )
        .is_err());
        assert!(CameraModel::new(
            1.0,
            1.0,
            10.0,
            0.0,
            10,
            10,
            RigidTransform::identity()
        )
        .is_err());
    }

    #[test]
    fn road_frame_level_camera() {
        // Camera at the ego origin looking forward: road origin sits 1.5 m
        // below, axes coincide with the ego axes.
        let cam = test_camera();
        let frame = road_frame_from_camera(&cam, 1.5, 0.0).unwrap();
        assert_relative_eq!(
            *frame.pose.rotation_matrix(),
            Matrix3::identity(),
            epsilon = 1e-12
        );
        let ego_origin_in_road = frame.pose.apply(&Vector3::zeros());
        assert_relative_eq!(ego_origin_in_road, Vector3::new(0.0, 0.0, 1.5), epsilon = 1e-12);
    }

    #[test]
    fn road_frame_pitched_camera_gram_schmidt_oracle() {
        let cam = test_camera();
        let pitch = 5f64.to_radians();
        let frame = road_frame_from_camera(&cam, 1.5, pitch).unwrap();
        let rot = frame.pose.rotation_matrix();
        // Row 1 is the road y-axis in ego coordinates. Oracle: Gram–Schmidt
        // of the viewing direction against the plane normal.
        let view = Vector3::new(0.0, pitch.cos(), -pitch.sin());
        let normal = Vector3::z();
        let expect = (view - normal * view.dot(&normal)).normalize();
        let y_axis = Vector3::new(rot[(1, 0)], rot[(1, 1)], rot[(1, 2)]);
        assert_relative_eq!(y_axis, expect, epsilon = 1e-12);
        assert_relative_eq!(y_axis.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(y_axis.dot(&normal), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn road_frame_straight_down_is_degenerate() {
        let cam = test_camera();
        assert!(road_frame_from_camera(&cam, 1.5, std::f64::consts::FRAC_PI_2).is_err());
        assert!(road_frame_from_camera(&cam, -1.0, 0.0).is_err());
    }
}
