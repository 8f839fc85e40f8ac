//! Operator command state: incremental key control with a dead-man timeout,
//! and timed command scripts.

use crate::geometry::Twist;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Key {
    Forward,
    Backward,
    Left,
    Right,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleopLimits<T> {
    pub v_step: T,
    pub w_step: T,
    pub v_max: T,
    pub w_max: T,
    /// Seconds without input before the command drops to zero.
    pub deadman: T,
}

impl<T: Scalar> Default for TeleopLimits<T> {
    fn default() -> Self {
        Self {
            v_step: T::c(0.1),
            w_step: T::c(0.2),
            v_max: T::c(0.5),
            w_max: T::c(1.5),
            deadman: T::c(0.5),
        }
    }
}

/// Held command plus the time of the last operator input.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyTeleop<T> {
    pub limits: TeleopLimits<T>,
    command: Twist<T>,
    last_input: Option<T>,
}

impl<T: Scalar> KeyTeleop<T> {
    pub fn new(limits: TeleopLimits<T>) -> Self {
        Self {
            limits,
            command: Twist::zero(),
            last_input: None,
        }
    }

    pub fn key(&mut self, key: Key, now: T) {
        let l = self.limits;
        let c = &mut self.command;
        match key {
            Key::Forward => c.v = c.v + l.v_step,
            Key::Backward => c.v = c.v - l.v_step,
            Key::Left => c.w = c.w + l.w_step,
            Key::Right => c.w = c.w - l.w_step,
            Key::Stop => *c = Twist::zero(),
        }
        c.v = c.v.max(-l.v_max).min(l.v_max);
        c.w = c.w.max(-l.w_max).min(l.w_max);
        self.last_input = Some(now);
    }

    /// Replaces the held command outright (bridge-sourced input).
    pub fn set(&mut self, twist: Twist<T>, now: T) {
        let l = self.limits;
        self.command = Twist::new(twist.v.max(-l.v_max).min(l.v_max), twist.w.max(-l.w_max).min(l.w_max));
        self.last_input = Some(now);
    }

    /// Command to publish at `now`; zero (and forgotten) once input is stale.
    pub fn output(&mut self, now: T) -> Twist<T> {
        match self.last_input {
            Some(t) if now - t <= self.limits.deadman => self.command,
            _ => {
                self.command = Twist::zero();
                Twist::zero()
            }
        }
    }
}

/// `(t, twist)` rows sorted by time. The command at time `t` is the last row
/// at or before `t`, zero before the first row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script<T> {
    rows: Vec<(T, Twist<T>)>,
}

impl<T: Scalar> Script<T> {
    pub fn new(mut rows: Vec<(T, Twist<T>)>) -> Self {
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        Self { rows }
    }

    pub fn rows(&self) -> &[(T, Twist<T>)] {
        &self.rows
    }

    pub fn duration(&self) -> T {
        self.rows.last().map_or(T::zero(), |r| r.0)
    }

    pub fn at(&self, t: T) -> Twist<T> {
        let n = self.rows.partition_point(|r| r.0 <= t);
        if n == 0 {
            Twist::zero()
        } else {
            self.rows[n - 1].1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_key() {
        let mut k = KeyTeleop::<f64>::new(TeleopLimits::default());
        k.key(Key::Forward, 0.0);
        assert_eq!(k.output(0.1), Twist::new(0.1, 0.0));
        k.key(Key::Left, 0.2);
        assert_eq!(k.output(0.2), Twist::new(0.1, 0.2));
        k.key(Key::Stop, 0.3);
        assert_eq!(k.output(0.3), Twist::zero());
    }

    #[test]
    fn deadman_zeroes() {
        let mut k = KeyTeleop::<f64>::new(TeleopLimits::default());
        assert_eq!(k.output(0.0), Twist::zero());
        k.key(Key::Forward, 1.0);
        assert_eq!(k.output(1.5).v, 0.1);
        assert_eq!(k.output(2.0), Twist::zero());
        // The held command is forgotten, not resumed on the next key.
        k.key(Key::Left, 2.1);
        assert_eq!(k.output(2.1), Twist::new(0.0, 0.2));
    }

    #[test]
    fn steps_clamp() {
        let mut k = KeyTeleop::<f64>::new(TeleopLimits::default());
        for _ in 0..20 {
            k.key(Key::Forward, 0.0);
            k.key(Key::Right, 0.0);
        }
        assert_eq!(k.output(0.0), Twist::new(0.5, -1.5));
    }

    #[test]
    fn script_lookup() {
        let s = Script::new(vec![(1.0, Twist::new(0.2, 0.0)), (0.0, Twist::new(0.1, 0.1))]);
        assert_eq!(s.at(-0.5), Twist::zero());
        assert_eq!(s.at(0.0), Twist::new(0.1, 0.1));
        assert_eq!(s.at(0.99), Twist::new(0.1, 0.1));
        assert_eq!(s.at(1.0), Twist::new(0.2, 0.0));
        assert_eq!(s.at(50.0), Twist::new(0.2, 0.0));
        assert_eq!(s.duration(), 1.0);
    }
}
