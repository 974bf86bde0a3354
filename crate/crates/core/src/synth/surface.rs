//! Analytic world-frame surfaces with exact gradients.

use super::scene::{SceneSpec, SurfaceSpec};
use crate::Result;

/// Continuous height function h(x, y) over the world plane, with its exact
/// analytic gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    spec: SurfaceSpec,
}

/// Validate the spec and build its surface.
pub fn gen_surface(spec: &SceneSpec) -> Result<Surface> {
    spec.validate()?;
    Ok(Surface {
        spec: spec.surface,
    })
}

impl Surface {
    /// Build directly from a surface family member (no spec-level checks).
    pub fn from_spec(spec: SurfaceSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &SurfaceSpec {
        &self.spec
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self.spec {
            SurfaceSpec::Flat => 0.0,
            SurfaceSpec::Grade { grade } => grade * y,
            SurfaceSpec::Crest {
                amplitude,
                wavelength,
                phase,
            } => amplitude * (std::f64::consts::TAU * y / wavelength + phase).sin(),
            SurfaceSpec::Bank { bank } => bank * x,
            SurfaceSpec::Composite {
                grade,
                amplitude,
                wavelength,
                phase,
                bank,
            } => {
                grade * y
                    + amplitude * (std::f64::consts::TAU * y / wavelength + phase).sin()
                    + bank * x
            }
        }
    }

    /// Exact (dh/dx, dh/dy).
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let _ = x;
        match self.spec {
            SurfaceSpec::Flat => (0.0, 0.0),
            SurfaceSpec::Grade { grade } => (0.0, grade),
            SurfaceSpec::Crest {
                amplitude,
                wavelength,
                phase,
            } => {
                let k = std::f64::consts::TAU / wavelength;
                (0.0, amplitude * k * (k * y + phase).cos())
            }
            SurfaceSpec::Bank { bank } => (bank, 0.0),
            SurfaceSpec::Composite {
                grade,
                amplitude,
                wavelength,
                phase,
                bank,
            } => {
                let k = std::f64::consts::TAU / wavelength;
                (bank, grade + amplitude * k * (k * y + phase).cos())
            }
        }
    }

    /// Analytic bound on |grad h| over the whole plane.
    pub fn max_gradient(&self) -> f64 {
        match self.spec {
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
                let along = grade.abs() + amplitude.abs() * std::f64::consts::TAU / wavelength;
                (along * along + bank * bank).sqrt()
            }
        }
    }
}
