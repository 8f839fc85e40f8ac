//! Differential-drive kinematics and exact unicycle integration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose, Twist};
use crate::num::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("wheel radius must be positive, got {0}")]
    WheelRadius(f64),
    #[error("axle track must be positive, got {0}")]
    AxleTrack(f64),
}

/// Wheel angular velocities in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds<T> {
    pub left: T,
    pub right: T,
}

/// Wheel radius `r` and axle track `L` of a differential-drive base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffDrive<T> {
    pub wheel_radius: T,
    pub axle_track: T,
}

impl<T: Scalar> DiffDrive<T> {
    pub fn new(wheel_radius: T, axle_track: T) -> Result<Self, KinematicsError> {
        let d = Self {
            wheel_radius,
            axle_track,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.wheel_radius > T::zero()) {
            return Err(KinematicsError::WheelRadius(self.wheel_radius.to_f64_lossy()));
        }
        if !(self.axle_track > T::zero()) {
            return Err(KinematicsError::AxleTrack(self.axle_track.to_f64_lossy()));
        }
        Ok(())
    }

    /// `v = r (left + right) / 2`, `w = r (right - left) / L`.
    pub fn forward(&self, wheels: WheelSpeeds<T>) -> Twist<T> {
        forward_kinematics(wheels.left, wheels.right, self.wheel_radius, self.axle_track)
    }

    pub fn inverse(&self, twist: Twist<T>) -> WheelSpeeds<T> {
        let half = twist.w * self.axle_track / T::c(2.0);
        WheelSpeeds {
            left: (twist.v - half) / self.wheel_radius,
            right: (twist.v + half) / self.wheel_radius,
        }
    }
}

pub fn forward_kinematics<T: Scalar>(left: T, right: T, wheel_radius: T, axle_track: T) -> Twist<T> {
    Twist {
        v: wheel_radius * (left + right) / T::c(2.0),
        w: wheel_radius * (right - left) / axle_track,
    }
}

/// `left = (v - w L / 2) / r`, `right = (v + w L / 2) / r`.
pub fn inverse_kinematics<T: Scalar>(
    twist: Twist<T>,
    wheel_radius: T,
    axle_track: T,
) -> Result<WheelSpeeds<T>, KinematicsError> {
    DiffDrive::new(wheel_radius, axle_track).map(|d| d.inverse(twist))
}

/// Below this |w| the straight-line formula is used.
pub const STRAIGHT_EPS: f64 = 1e-9;

/// Exact constant-twist arc integration over `dt`; the result heading is wrapped
/// to `(-pi, pi]`.
pub fn integrate_arc<T: Scalar>(pose: Pose<T>, twist: Twist<T>, dt: T) -> Pose<T> {
    let Twist { v, w } = twist;
    let th = pose.theta;
    let (x, y) = if w.abs() < T::c(STRAIGHT_EPS) {
        (pose.x + v * th.cos() * dt, pose.y + v * th.sin() * dt)
    } else {
        let r = v / w;
        let th1 = th + w * dt;
        (
            pose.x + r * (th1.sin() - th.sin()),
            pose.y - r * (th1.cos() - th.cos()),
        )
    };
    Pose::new(x, y, wrap_angle(th + w * dt))
}
