//! Invertible camera models turning pixels into unit projection rays.
//!
//! Solvers only ever see [`UnitRay`]s; a camera model is needed only to
//! convert observations (and, for synthetic data, to project points).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::UnitRay;
use crate::{Error, Result};

/// Iteration cap of the MEI undistortion fixed point.
pub const MEI_UNDISTORT_MAX_ITERATIONS: usize = 20;
/// Convergence tolerance (normalized image units) of the MEI undistortion.
pub const MEI_UNDISTORT_TOLERANCE: f64 = 1e-12;

pub type ImagePoint = Vector2<f64>;

/// Pixel ↔ ray conversion.
pub trait CameraModel {
    fn unproject(&self, u: &ImagePoint) -> Result<UnitRay>;
    fn project(&self, x: &Vector3<f64>) -> Result<ImagePoint>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidInput("pinhole focal lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Unified (MEI) omnidirectional model: projection through a unit sphere
/// shifted by `xi`, radial-tangential distortion, then an affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeiIntrinsics {
    pub xi: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
}

impl MeiIntrinsics {
    /// Distortion-free model.
    pub fn ideal(xi: f64, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { xi, fx, fy, cx, cy, k1: 0.0, k2: 0.0, p1: 0.0, p2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput("MEI focal lengths must be positive".into()));
        }
        if !(self.xi >= 0.0) {
            return Err(Error::InvalidInput("MEI xi must be non-negative".into()));
        }
        let all = [self.cx, self.cy, self.k1, self.k2, self.p1, self.p2];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("MEI parameters must be finite".into()));
        }
        Ok(())
    }

    fn distortion(&self, m: &Vector2<f64>) -> (f64, Vector2<f64>) {
        let (x, y) = (m.x, m.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        let tangential = Vector2::new(
            2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        );
        (radial, tangential)
    }

    fn distort(&self, m: &Vector2<f64>) -> Vector2<f64> {
        let (radial, tangential) = self.distortion(m);
        radial * m + tangential
    }

    /// Fixed-point inversion of the distortion: `m ← (m_d − tan(m)) / radial(m)`.
    fn undistort(&self, distorted: &Vector2<f64>) -> Result<Vector2<f64>> {
        let mut m = *distorted;
        for _ in 0..MEI_UNDISTORT_MAX_ITERATIONS {
            let (radial, tangential) = self.distortion(&m);
            if radial.abs() < f64::EPSILON {
                return Err(Error::InvalidPixel);
            }
            let next = (distorted - tangential) / radial;
            let step = (next - m).norm();
            m = next;
            if !step.is_finite() {
                return Err(Error::InvalidPixel);
            }
            if step < MEI_UNDISTORT_TOLERANCE {
                return Ok(m);
            }
        }
        Err(Error::InvalidPixel)
    }
}

impl CameraModel for PinholeIntrinsics {
    /// `m = K⁻¹u / ‖K⁻¹u‖`.
    fn unproject(&self, u: &ImagePoint) -> Result<UnitRay> {
        UnitRay::new(Vector3::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy, 1.0))
            .map_err(|_| Error::InvalidPixel)
    }

    fn project(&self, x: &Vector3<f64>) -> Result<ImagePoint> {
        if !(x.z > 0.0) {
            return Err(Error::BehindCamera);
        }
        Ok(Vector2::new(self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy))
    }
}

impl CameraModel for MeiIntrinsics {
    fn unproject(&self, u: &ImagePoint) -> Result<UnitRay> {
        let distorted = Vector2::new((u.x - self.cx) / self.fx, (u.y - self.cy) / self.fy);
        if !distorted.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPixel);
        }
        let m = self.undistort(&distorted)?;
        let r2 = m.norm_squared();
        let disc = 1.0 + (1.0 - self.xi * self.xi) * r2;
        if disc < 0.0 {
            return Err(Error::InvalidPixel);
        }
        // sphere point factor·(m, 1) − (0, 0, ξ), with factor > 0; normalizing
        // the direction makes ξ = 0 reduce exactly to the pinhole ray
        let factor = (self.xi + disc.sqrt()) / (1.0 + r2);
        UnitRay::new(Vector3::new(m.x, m.y, 1.0 - self.xi / factor)).map_err(|_| Error::InvalidPixel)
    }

    fn project(&self, x: &Vector3<f64>) -> Result<ImagePoint> {
        let norm = x.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::BehindCamera);
        }
        let s = x / norm;
        // Points with z_s ≤ -min(xi, 1/xi) are not (uniquely) representable.
        let limit = if self.xi > 1.0 { 1.0 / self.xi } else { self.xi };
        let denom = s.z + self.xi;
        if s.z <= -limit || denom <= 0.0 {
            return Err(Error::BehindCamera);
        }
        let m = Vector2::new(s.x / denom, s.y / denom);
        let d = self.distort(&m);
        Ok(Vector2::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy))
    }
}

/// Camera selected at run time, as read from JSON (`"model": "pinhole" | "mei"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Camera {
    Pinhole(PinholeIntrinsics),
    Mei(MeiIntrinsics),
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        match self {
            Camera::Pinhole(k) => k.validate(),
            Camera::Mei(k) => k.validate(),
        }
    }
}

impl Default for Camera {
    /// 640×480 pinhole with 800 px focal length, principal point at center.
    fn default() -> Self {
        Camera::Pinhole(PinholeIntrinsics { fx: 800.0, fy: 800.0, cx: 320.0, cy: 240.0 })
    }
}

impl CameraModel for Camera {
    fn unproject(&self, u: &ImagePoint) -> Result<UnitRay> {
        match self {
            Camera::Pinhole(k) => k.unproject(u),
            Camera::Mei(k) => k.unproject(u),
        }
    }

    fn project(&self, x: &Vector3<f64>) -> Result<ImagePoint> {
        match self {
            Camera::Pinhole(k) => k.project(x),
            Camera::Mei(k) => k.project(x),
        }
    }
}
