//! Rotate-then-drive PD waypoint follower.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Point, Pose, Twist};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
#[serde(default)]
pub struct Gains<T> {
    pub kp_ang: T,
    pub kd_ang: T,
    pub kp_lin: T,
    pub theta_tol: T,
    pub pos_tol: T,
    pub v_max: T,
    pub w_max: T,
}

impl<T: Scalar> Default for Gains<T> {
    fn default() -> Self {
        Self {
            kp_ang: T::c(2.0),
            kd_ang: T::c(0.1),
            kp_lin: T::c(0.8),
            theta_tol: T::c(0.1),
            pos_tol: T::c(0.1),
            v_max: T::c(0.5),
            w_max: T::c(1.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Rotate,
    Drive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState<T> {
    pub phase: Phase,
    /// Current target waypoint; equals the path length once finished.
    pub index: usize,
    pub prev_error: Option<T>,
    pub gains: Gains<T>,
}

impl<T: Scalar> ControllerState<T> {
    pub fn new(gains: Gains<T>) -> Self {
        Self {
            phase: Phase::Rotate,
            index: 0,
            prev_error: None,
            gains,
        }
    }

    /// Starts over on a new path.
    pub fn restart(&mut self) {
        self.phase = Phase::Rotate;
        self.index = 0;
        self.prev_error = None;
    }

    pub fn done(&self, path: &[Point<T>]) -> bool {
        self.index >= path.len()
    }

    /// One control step. Returns the clamped twist; zero once every waypoint
    /// has been reached.
    pub fn step(&mut self, pose: Pose<T>, path: &[Point<T>], dt: T) -> Twist<T> {
        let Some(&target) = path.get(self.index) else {
            self.index = path.len();
            return Twist::zero();
        };
        let g = self.gains;
        let dist = pose.position().distance(&target);
        if dist < g.pos_tol {
            self.index += 1;
            self.phase = Phase::Rotate;
            self.prev_error = None;
            return Twist::zero();
        }
        let e = wrap_angle((target.y - pose.y).atan2(target.x - pose.x) - pose.theta);
        let twist = match self.phase {
            Phase::Rotate if e.abs() >= g.theta_tol => {
                let de = match self.prev_error {
                    Some(prev) if dt > T::zero() => wrap_angle(e - prev) / dt,
                    _ => T::zero(),
                };
                Twist::new(T::zero(), g.kp_ang * e + g.kd_ang * de)
            }
            _ => {
                self.phase = Phase::Drive;
                Twist::new(g.kp_lin * dist, g.kp_ang * e)
            }
        };
        self.prev_error = Some(e);
        Twist::new(
            twist.v.max(T::zero()).min(g.v_max),
            twist.w.max(-g.w_max).min(g.w_max),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn at_waypoint_advances_with_no_forward_motion() {
        let mut c = ControllerState::new(Gains::default());
        let path = [Point::new(0.05, 0.0), Point::new(2.0, 0.0)];
        let t = c.step(Pose::new(0.0, 0.0, 1.0), &path, 0.05);
        assert_eq!(c.index, 1);
        assert_eq!(t.v, 0.0);
        assert_eq!(c.phase, Phase::Rotate);
    }

    #[test]
    fn aligned_rotate_goes_straight_to_drive() {
        let mut c = ControllerState::new(Gains::default());
        let t = c.step(Pose::new(0.0, 0.0, 0.0), &[Point::new(2.0, 0.0)], 0.05);
        assert_eq!(c.phase, Phase::Drive);
        assert_eq!(t.v, 0.5);
        assert_eq!(t.w, 0.0);
    }

    #[test]
    fn rotates_in_place_toward_target_behind() {
        let mut c = ControllerState::new(Gains::default());
        let t = c.step(Pose::new(0.0, 0.0, 0.0), &[Point::new(-1.0, 0.1)], 0.05);
        assert_eq!(c.phase, Phase::Rotate);
        assert_eq!(t.v, 0.0);
        assert_eq!(t.w, 1.5);
    }

    #[test]
    fn error_is_continuous_across_branch_cut() {
        let mut c = ControllerState::new(Gains::default());
        let target = [Point::new(-10.0, 0.0)];
        // Heading just either side of +-pi: error is small in both cases.
        c.step(Pose::new(0.0, 0.0, PI - 0.05), &target, 0.05);
        let e1 = c.prev_error.unwrap();
        c.step(Pose::new(0.0, 0.0, -PI + 0.05), &target, 0.05);
        let e2 = c.prev_error.unwrap();
        assert!(e1.abs() < 0.06 && e2.abs() < 0.06);
        assert!((e1 - e2).abs() < 0.11);
    }

    #[test]
    fn finished_path_is_zero() {
        let mut c = ControllerState::new(Gains::default());
        let path = [Point::new(0.0, 0.0)];
        c.step(Pose::default(), &path, 0.05);
        assert!(c.done(&path));
        assert_eq!(c.step(Pose::new(5.0, 5.0, 0.0), &path, 0.05), Twist::zero());
    }
}
