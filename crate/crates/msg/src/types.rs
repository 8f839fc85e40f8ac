//! Standard message types shared by every node.

use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::InvariantError;
use crate::message;

message! {
    pub struct Time = "time_t" {
        pub sec: i64,
        pub nsec: i32,
    }
}

impl Time {
    pub fn now() -> Self {
        let d = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default();
        Self {
            sec: d.as_secs() as i64,
            nsec: d.subsec_nanos() as i32,
        }
    }

    pub fn from_micros(us: u64) -> Self {
        Self {
            sec: (us / 1_000_000) as i64,
            nsec: ((us % 1_000_000) * 1000) as i32,
        }
    }

    pub fn from_secs_f64(t: f64) -> Self {
        let sec = t.floor();
        Self {
            sec: sec as i64,
            nsec: ((t - sec) * 1e9).round().min(999_999_999.0) as i32,
        }
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.sec as f64 + f64::from(self.nsec) * 1e-9
    }
}

message! {
    pub struct Header = "header_t" {
        pub stamp: Time,
        pub frame: String,
    }
}

impl Header {
    pub fn new(stamp: Time, frame: impl Into<String>) -> Self {
        Self {
            stamp,
            frame: frame.into(),
        }
    }
}

message! {
    /// Planar pose in metres and radians.
    pub struct Pose2D = "pose_2d_t" {
        pub x: f64,
        pub y: f64,
        pub theta: f64 => angle,
    }
}

message! {
    /// Body-frame linear (m/s) and angular (rad/s) velocity.
    pub struct Twist2D = "twist_2d_t" {
        pub v: f64,
        pub w: f64,
    }
}

message! {
    /// Wheel angular velocities in rad/s.
    pub struct WheelCmd = "wheel_cmd_t" {
        pub left: f64,
        pub right: f64,
    }
}

message! {
    pub struct JointState = "joint_state_t" {
        pub names: Vec<String>,
        pub positions: Vec<f64>,
        pub velocities: Vec<f64>,
        pub efforts: Vec<f64>,
    }
}

impl JointState {
    /// Every array is either empty or as long as `names`.
    pub fn validate(&self) -> Result<(), InvariantError> {
        let n = self.names.len();
        for (label, len) in [
            ("positions", self.positions.len()),
            ("velocities", self.velocities.len()),
            ("efforts", self.efforts.len()),
        ] {
            if len != 0 && len != n {
                return Err(InvariantError {
                    type_name: "joint_state_t",
                    reason: format!("{label} has {len} entries for {n} names"),
                });
            }
        }
        Ok(())
    }
}

message! {
    /// Polar lidar scan: `angles[i]` (rad, sensor frame) pairs with `ranges[i]` (m).
    pub struct LaserScan = "laser_scan_t" {
        pub header: Header,
        pub angles: Vec<f64>,
        pub ranges: Vec<f64>,
        pub range_max: f64,
    }
}

impl LaserScan {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.angles.len() != self.ranges.len() {
            return Err(InvariantError {
                type_name: "laser_scan_t",
                reason: format!(
                    "{} angles but {} ranges",
                    self.angles.len(),
                    self.ranges.len()
                ),
            });
        }
        Ok(())
    }

    pub fn beams(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.angles.iter().copied().zip(self.ranges.iter().copied())
    }
}

message! {
    /// Occupancy probabilities, row-major from `origin`, `cells[row * width + col]`.
    pub struct OccupancyGridMsg = "occupancy_grid_t" {
        pub header: Header,
        pub origin: Pose2D,
        pub resolution: f64,
        pub width: i32,
        pub height: i32,
        pub cells: Vec<f32>,
    }
}

impl OccupancyGridMsg {
    pub fn validate(&self) -> Result<(), InvariantError> {
        let err = |reason: String| InvariantError {
            type_name: "occupancy_grid_t",
            reason,
        };
        if self.width < 0 || self.height < 0 {
            return Err(err(format!("negative size {}x{}", self.width, self.height)));
        }
        let n = self.width as usize * self.height as usize;
        if self.cells.len() != n {
            return Err(err(format!("{} cells for {n}", self.cells.len())));
        }
        if let Some(bad) = self.cells.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(err(format!("cell probability {bad} outside [0, 1]")));
        }
        if !(self.resolution > 0.0) {
            return Err(err(format!("resolution {}", self.resolution)));
        }
        Ok(())
    }
}

message! {
    pub struct Image = "image_t" {
        pub header: Header,
        pub width: i32,
        pub height: i32,
        pub encoding: String,
        pub data: Vec<i8>,
    }
}

message! {
    pub struct Transform = "transform_t" {
        pub header: Header,
        pub child: String,
        pub x: f64,
        pub y: f64,
        pub z: f64,
        pub qx: f64,
        pub qy: f64,
        pub qz: f64,
        pub qw: f64,
    }
}

impl Transform {
    pub fn validate(&self) -> Result<(), InvariantError> {
        let norm = (self.qx * self.qx + self.qy * self.qy + self.qz * self.qz + self.qw * self.qw)
            .sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(InvariantError {
                type_name: "transform_t",
                reason: format!("quaternion norm {norm}"),
            });
        }
        Ok(())
    }
}

message! {
    /// Ordered planar waypoints, `x[i]`, `y[i]` in metres.
    pub struct Path2D = "path_2d_t" {
        pub header: Header,
        pub x: Vec<f64>,
        pub y: Vec<f64>,
        pub cost: f64,
    }
}

message! {
    /// Reset request; the pose is used only when `has_pose` is set.
    pub struct ResetRequest = "reset_req_t" {
        pub has_pose: bool,
        pub pose: Pose2D,
    }
}

message! {
    pub struct ResetReply = "reset_rep_t" {
        pub episode_id: i64,
    }
}

message! {
    /// Marks an episode boundary on `__episode/<env>`.
    pub struct EpisodeMarker = "episode_t" {
        pub env: String,
        pub episode_id: i64,
        pub stamp: Time,
    }
}

message! {
    pub struct Empty = "empty_t" {}
}
