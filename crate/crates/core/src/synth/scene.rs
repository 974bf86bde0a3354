//! Scene specifications: the surface family, the camera rig and the timing
//! of the ego trajectory. A [`SceneSpec`] is the JSON document consumed by
//! `heightlab gen`.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, RigidTransform};
use crate::heightgrid::BevGrid;
use crate::{Error, Result};

/// Hard limit on surface steepness: |grad h| must stay below this everywhere.
pub const MAX_SURFACE_GRADIENT: f64 = 0.2;
/// Hard limit on the constant-grade coefficient.
pub const MAX_GRADE: f64 = 0.15;
/// Hard limit on crest amplitude in meters.
pub const MAX_AMPLITUDE: f64 = 2.0;
/// Normalizer for the grade cue channel in rendered feature grids.
pub const GRADE_CUE_SCALE: f64 = MAX_GRADE;

/// Parametric surface family, all heights in meters over world (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Flat,
    /// h = grade * y
    Grade { grade: f64 },
    /// h = amplitude * sin(2 pi y / wavelength + phase)
    Crest {
        amplitude: f64,
        wavelength: f64,
        #[serde(default)]
        phase: f64,
    },
    /// h = bank * x (lateral tilt)
    Bank { bank: f64 },
    /// h = grade * y + amplitude * sin(2 pi y / wavelength + phase) + bank * x
    Composite {
        #[serde(default)]
        grade: f64,
        #[serde(default)]
        amplitude: f64,
        #[serde(default = "default_wavelength")]
        wavelength: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        bank: f64,
    },
}

fn default_wavelength() -> f64 {
    80.0
}

/// Camera mounting and intrinsics. The offsets place the camera relative to
/// the ego origin (the rear axle on the road surface).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera center height above the road plane (m).
    pub height_m: f64,
    /// Downward pitch of the optical axis (rad).
    pub pitch_rad: f64,
    /// Rear-axle-to-camera offset along ego y (m).
    pub forward_offset_m: f64,
    /// Rear-axle-to-camera offset along ego x (m).
    pub lateral_offset_m: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            width: 240,
            height: 180,
            fx: 180.0,
            fy: 180.0,
            cx: 119.5,
            cy: 89.5,
            height_m: 1.5,
            pitch_rad: 5f64.to_radians(),
            forward_offset_m: 1.6,
            lateral_offset_m: 0.0,
        }
    }
}

impl CameraRig {
    /// Build the pinhole camera with its `camera <- ego` extrinsic.
    /// Camera axes in the ego frame: x right, y down-pitched, z the optical
    /// axis pitched `pitch_rad` below the ego forward direction.
    pub fn camera_model(&self) -> Result<CameraModel> {
        let (s, c) = self.pitch_rad.sin_cos();
        let rot = nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s);
        let center = nalgebra::Vector3::new(
            self.lateral_offset_m,
            self.forward_offset_m,
            self.height_m,
        );
        let extrinsic = RigidTransform::new(rot, -(rot * center))?;
        CameraModel::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            extrinsic,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidSpec(format!(
                "camera image {}x{} too small",
                self.width, self.height
            )));
        }
        if !(self.height_m > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "camera height_m must be positive, got {}",
                self.height_m
            )));
        }
        if self.pitch_rad.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidSpec(format!(
                "camera pitch {} out of (-pi/2, pi/2)",
                self.pitch_rad
            )));
        }
        // Focal/principal constraints are re-checked by CameraModel::new.
        self.camera_model().map(|_| ())
    }
}

fn default_channels() -> usize {
    8
}

fn default_grid() -> BevGrid {
    BevGrid::standard()
}

/// Full synthetic scene description (JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub surface: SurfaceSpec,
    pub seed: u64,
    /// Number of frames in the trajectory.
    pub length: usize,
    /// Ego speed in m/s along the surface.
    pub ego_speed: f64,
    /// Seconds between frames.
    pub frame_dt: f64,
    #[serde(default)]
    pub camera: CameraRig,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_grid")]
    pub grid: BevGrid,
}

impl SceneSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("SceneSpec serializes")
    }

    /// Worst-case |grad h| implied by the surface parameters.
    pub fn max_gradient_bound(&self) -> f64 {
        match self.surface {
            SurfaceSpec::Flat => 0.0,
            SurfaceSpec::Grade { grade } => grade.abs(),
            SurfaceSpec::Crest {
                amplitude,
                wavelength,
                ..
            } => amplitude.abs() * std::f64::consts::TAU / wavelength,
            SurfaceSpec::Bank { bank } => bank.abs(),
            SurfaceSpec::Composite {
                grade,
                amplitude,
                wavelength,
                bank,
                ..
            } => {
                let wave = amplitude.abs() * std::f64::consts::TAU / wavelength;
                let along = grade.abs() + wave;
                (along * along + bank * bank).sqrt()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidSpec("length must be >= 1".into()));
        }
        if !(self.frame_dt > 0.0) || !self.frame_dt.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "frame_dt must be positive, got {}",
                self.frame_dt
            )));
        }
        if !(self.ego_speed >= 0.0) || !self.ego_speed.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "ego_speed must be nonnegative, got {}",
                self.ego_speed
            )));
        }
        if self.channels < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 feature channels, got {}",
                self.channels
            )));
        }
        BevGrid::new(
            self.grid.rows,
            self.grid.cols,
            self.grid.meters_per_pixel,
            self.grid.x_min,
            self.grid.y_min,
        )?;
        self.camera.validate()?;
        match self.surface {
            SurfaceSpec::Flat => {}
            SurfaceSpec::Grade { grade } => {
                if !grade.is_finite() || grade.abs() > MAX_GRADE {
                    return Err(Error::InvalidSpec(format!(
                        "|grade| must be <= {MAX_GRADE}, got {grade}"
                    )));
                }
            }
            SurfaceSpec::Crest {
                amplitude,
                wavelength,
                phase,
            } => {
                if !amplitude.is_finite() || amplitude.abs() > MAX_AMPLITUDE {
                    return Err(Error::InvalidSpec(format!(
                        "|amplitude| must be <= {MAX_AMPLITUDE}, got {amplitude}"
                    )));
                }
                if !(wavelength > 0.0) || !wavelength.is_finite() || !phase.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "bad crest parameters (wavelength {wavelength}, phase {phase})"
                    )));
                }
            }
            SurfaceSpec::Bank { bank } => {
                if !bank.is_finite() || bank.abs() > MAX_GRADE {
                    return Err(Error::InvalidSpec(format!(
                        "|bank| must be <= {MAX_GRADE}, got {bank}"
                    )));
                }
            }
            SurfaceSpec::Composite {
                grade,
                amplitude,
                wavelength,
                phase,
                bank,
            } => {
                if !grade.is_finite()
                    || !amplitude.is_finite()
                    || !phase.is_finite()
                    || !bank.is_finite()
                    || !(wavelength > 0.0)
                {
                    return Err(Error::InvalidSpec("non-finite composite parameter".into()));
                }
                if grade.abs() > MAX_GRADE || bank.abs() > MAX_GRADE {
                    return Err(Error::InvalidSpec(format!(
                        "|grade| and |bank| must be <= {MAX_GRADE} (got {grade}, {bank})"
                    )));
                }
                if amplitude.abs() > MAX_AMPLITUDE {
                    return Err(Error::InvalidSpec(format!(
                        "|amplitude| must be <= {MAX_AMPLITUDE}, got {amplitude}"
                    )));
                }
            }
        }
        let bound = self.max_gradient_bound();
        if bound > MAX_SURFACE_GRADIENT {
            return Err(Error::InvalidSpec(format!(
                "surface gradient bound {bound:.4} exceeds {MAX_SURFACE_GRADIENT}"
            )));
        }
        Ok(())
    }
}
