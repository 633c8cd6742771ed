use serde::{Deserialize, Serialize};

use super::ProjectionError;
use crate::geometry::Vec3;

/// Elevation above the x-y plane beyond which the camera counts as sitting
/// on a pole.
pub const POLE_ELEVATION_DEG: f64 = 89.9;

/// Projection angles in degrees: elevation `phi1` and azimuth `phi2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewAngles {
    pub phi1: f64,
    pub phi2: f64,
}

impl ViewAngles {
    /// Azimuth is wrapped into [0, 360).
    pub fn new(phi1: f64, phi2: f64) -> Result<Self, ProjectionError> {
        if !phi1.is_finite() || !phi2.is_finite() || !(-90.0..=90.0).contains(&phi1) {
            return Err(ProjectionError::InvalidAngles { phi1, phi2 });
        }
        Ok(Self {
            phi1,
            phi2: wrap_degrees(phi2),
        })
    }

    pub const TOP: ViewAngles = ViewAngles {
        phi1: 90.0,
        phi2: 0.0,
    };
}

pub(crate) fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    /// Camera-to-object distance in normalized object units.
    pub r_p: f64,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    /// Square output resolution.
    pub image_px: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            r_p: 2.2,
            fov_deg: 60.0,
            image_px: 224,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        let ok = self.r_p.is_finite()
            && self.r_p > 1.0
            && self.fov_deg > 0.0
            && self.fov_deg < 180.0
            && self.image_px >= 32;
        if ok {
            Ok(())
        } else {
            Err(ProjectionError::InvalidCamera(*self))
        }
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        self.image_px as f64 / 2.0 / (self.fov_deg.to_radians() / 2.0).tan()
    }
}

/// Pinhole camera looking at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    focal: f64,
    size: usize,
}

/// A point in image space: continuous pixel coordinates (x right, y down)
/// and its camera-space depth along the view axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenPoint {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

pub fn camera_from_angles(phi: &ViewAngles, cfg: &CameraConfig) -> Result<Camera, ProjectionError> {
    cfg.validate()?;
    let (e, a) = (phi.phi1.to_radians(), phi.phi2.to_radians());
    let dir = Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin());
    let position = dir * cfg.r_p;
    let forward = -dir;
    // Near the poles +z is parallel to the view axis; continue the
    // off-pole frame instead.
    let up_hint = if phi.phi1.abs() > POLE_ELEVATION_DEG {
        let s = phi.phi1.signum();
        Vec3::new(-s * a.cos(), -s * a.sin(), 0.0)
    } else {
        Vec3::z()
    };
    let right = forward.cross(&up_hint).normalize();
    let up = right.cross(&forward);
    Ok(Camera {
        position,
        forward,
        right,
        up,
        focal: cfg.focal_px(),
        size: cfg.image_px,
    })
}

impl Camera {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Camera-space coordinates (right, up, depth).
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(d.dot(&self.right), d.dot(&self.up), d.dot(&self.forward))
    }

    /// Perspective projection; `None` for points at or behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<ScreenPoint> {
        let c = self.to_camera(p);
        if c.z <= 1e-9 {
            return None;
        }
        let half = self.size as f64 / 2.0;
        Some(ScreenPoint {
            x: half + self.focal * c.x / c.z,
            y: half - self.focal * c.y / c.z,
            depth: c.z,
        })
    }

    /// Integer pixel containing a screen point, if inside the image.
    pub fn pixel_of(&self, s: &ScreenPoint) -> Option<(usize, usize)> {
        let n = self.size as f64;
        if s.x >= 0.0 && s.y >= 0.0 && s.x < n && s.y < n {
            Some((s.x as usize, s.y as usize))
        } else {
            None
        }
    }

    /// Unit direction from the origin toward the camera.
    pub fn light_direction(&self) -> Vec3 {
        -self.forward
    }
}
