//! Planar frames and the camera to LiDAR extrinsic calibration.
//!
//! Camera frame convention: `z` is the optical (forward) axis, `x` is the
//! lateral image axis and `y` is vertical. The LiDAR frame coincides with the
//! robot frame: `x` forward, `y` lateral, no height. A camera point maps to
//! the LiDAR plane by taking depth as forward distance and the camera `x` as
//! the lateral LiDAR `y`, then adding the planar mounting translation. Rotation between the
//! two frames is not modelled; the camera is assumed to face forward.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted magnitude of either extrinsic translation, in meters.
pub const MAX_EXTRINSIC_OFFSET: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("lidar range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("marker depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("extrinsic offset ({dx}, {dy}) outside the +/-{MAX_EXTRINSIC_OFFSET} m sanity bound")]
    OutOfBounds { dx: f64, dy: f64 },
    #[error("non-finite calibration input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Planar translation of the camera with respect to the LiDAR.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extrinsics {
    pub dx: f64,
    pub dy: f64,
}

impl Extrinsics {
    pub fn new(dx: f64, dy: f64) -> Result<Self, CalibrationError> {
        let e = Self { dx, dy };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !self.dx.is_finite() || !self.dy.is_finite() {
            return Err(CalibrationError::NonFinite);
        }
        if self.dx.abs() >= MAX_EXTRINSIC_OFFSET || self.dy.abs() >= MAX_EXTRINSIC_OFFSET {
            return Err(CalibrationError::OutOfBounds {
                dx: self.dx,
                dy: self.dy,
            });
        }
        Ok(())
    }

    /// Inverse of [`camera_to_lidar`] for a point at the given camera height.
    pub fn lidar_to_camera(&self, p: Point2, height: f64) -> Point3 {
        Point3::new(p.y - self.dy, height, p.x - self.dx)
    }
}

/// Robot configuration. `theta` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Maps a point expressed in this pose's body frame into the world frame.
    pub fn transform_to_world(&self, local: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
        )
    }

    /// Maps a world point into this pose's body frame.
    pub fn transform_to_body(&self, world: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let dx = world.x - self.x;
        let dy = world.y - self.y;
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Projects a camera-frame point onto the LiDAR plane. Height is discarded.
pub fn camera_to_lidar(p: Point3, e: Extrinsics) -> Point2 {
    Point2::new(p.z + e.dx, p.x + e.dy)
}

/// Recovers the planar camera offset from a marker placed straight ahead of
/// the robot: `marker` is its position seen by the camera and `lidar_range`
/// the distance the LiDAR reports to it.
pub fn solve_extrinsics(marker: Point3, lidar_range: f64) -> Result<Extrinsics, CalibrationError> {
    if !marker.is_finite() || !lidar_range.is_finite() {
        return Err(CalibrationError::NonFinite);
    }
    if lidar_range <= 0.0 {
        return Err(CalibrationError::NonPositiveRange(lidar_range));
    }
    if marker.z <= 0.0 {
        return Err(CalibrationError::NonPositiveDepth(marker.z));
    }
    Extrinsics::new(lidar_range - marker.z, marker.x)
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
