//! Deterministic 2D differential-drive simulator with a raycast lidar.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Point, Pose, Twist};
use crate::grid::{BoolGrid, Cell, Grid, GridGeometry};
use crate::kinematics::{integrate_arc, DiffDrive, KinematicsError, WheelSpeeds};
use crate::num::Scalar;
use crate::raycast::first_hit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("pose ({x:.3}, {y:.3}) is in collision")]
    InCollision { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub width: T,
    pub height: T,
}

/// Axis-aligned obstacle with lower-left corner `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> Rect<T> {
    pub fn contains(&self, p: Point<T>) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig<T> {
    pub pose: Pose<T>,
    /// Wheel radius, m.
    pub r: T,
    /// Axle track, m.
    #[serde(rename = "L")]
    pub axle_track: T,
    pub half_width: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LidarConfig<T> {
    pub n: usize,
    pub fov: T,
    pub range_max: T,
    #[serde(default = "zero")]
    pub noise_std: T,
}

fn zero<T: Scalar>() -> T {
    T::zero()
}

fn default_dt<T: Scalar>() -> T {
    T::c(0.02)
}

/// The world file: bounds, obstacle rectangles, robot and lidar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct WorldConfig<T> {
    pub bounds: Bounds<T>,
    pub resolution: T,
    #[serde(default)]
    pub rectangles: Vec<Rect<T>>,
    pub robot: RobotConfig<T>,
    pub lidar: LidarConfig<T>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: T,
    /// Std-dev (rad/s) of zero-mean noise added to each wheel's speed every
    /// step. Zero gives ideal actuation.
    #[serde(default = "zero")]
    pub wheel_noise_std: T,
}

impl<T: Scalar> WorldConfig<T> {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Invalid(m));
        if !(self.bounds.width > T::zero() && self.bounds.height > T::zero()) {
            return bad("bounds must be positive".into());
        }
        if !(self.resolution > T::zero()) {
            return bad("resolution must be positive".into());
        }
        DiffDrive::new(self.robot.r, self.robot.axle_track)?;
        if !(self.robot.half_width > T::zero()) {
            return bad("robot.half_width must be positive".into());
        }
        if self.lidar.n < 2 {
            return bad(format!("lidar.n must be >= 2, got {}", self.lidar.n));
        }
        if !(self.lidar.fov > T::zero() && self.lidar.fov <= T::TAU()) {
            return bad(format!("lidar.fov must be in (0, 2pi], got {}", self.lidar.fov));
        }
        if !(self.lidar.range_max > T::zero()) || self.lidar.noise_std < T::zero() {
            return bad("lidar.range_max must be positive, noise_std non-negative".into());
        }
        if !(self.dt > T::zero()) {
            return bad("dt must be positive".into());
        }
        if self.wheel_noise_std < T::zero() {
            return bad("wheel_noise_std must be non-negative".into());
        }
        Ok(())
    }
}

/// Validated world: configuration plus the rasterized ground-truth grid.
#[derive(Debug, Clone)]
pub struct World<T> {
    pub config: WorldConfig<T>,
    pub occupancy: BoolGrid<T>,
    pub drive: DiffDrive<T>,
}

impl<T: Scalar> World<T> {
    pub fn new(config: WorldConfig<T>) -> Result<Self, WorldError> {
        config.validate()?;
        let occupancy = rasterize(
            GridGeometry::covering(config.bounds.width, config.bounds.height, config.resolution),
            &config.rectangles,
        );
        let drive = DiffDrive::new(config.robot.r, config.robot.axle_track)?;
        let world = Self {
            config,
            occupancy,
            drive,
        };
        let start = world.config.robot.pose;
        if world.disk_collides(start.position()) {
            return Err(WorldError::InCollision {
                x: start.x.to_f64_lossy(),
                y: start.y.to_f64_lossy(),
            });
        }
        Ok(world)
    }

    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.occupancy.geometry
    }

    /// Occupied, with everything outside the grid counting as wall.
    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupancy.get(cell).copied().unwrap_or(true)
    }

    /// Whether the robot disk centred at `p` overlaps any occupied cell.
    pub fn disk_collides(&self, p: Point<T>) -> bool {
        disk_collides(&self.occupancy, p, self.config.robot.half_width)
    }

    /// Noise-free range along a world-frame bearing.
    pub fn true_range(&self, origin: Point<T>, angle: T) -> T {
        let max = self.config.lidar.range_max;
        first_hit(self.geometry(), origin, angle, max, |c| self.is_occupied(c))
            .map_or(max, |d| d.min(max))
    }

    /// Body-frame bearing of beam `k`: `fov * (k / (n - 1) - 1/2)`.
    pub fn beam_angle(&self, k: usize) -> T {
        let n = self.config.lidar.n;
        self.config.lidar.fov * (T::c(k as f64) / T::c((n - 1) as f64) - T::c(0.5))
    }
}

pub fn rasterize<T: Scalar>(geometry: GridGeometry<T>, rects: &[Rect<T>]) -> BoolGrid<T> {
    let mut grid = Grid::filled(geometry, false);
    for idx in 0..geometry.len() {
        let c = geometry.center(geometry.cell_of_index(idx));
        grid.cells[idx] = rects.iter().any(|r| r.contains(c));
    }
    grid
}

pub fn disk_collides<T: Scalar>(grid: &BoolGrid<T>, p: Point<T>, radius: T) -> bool {
    let g = &grid.geometry;
    let lo = g.cell_at(Point::new(p.x - radius, p.y - radius));
    let hi = g.cell_at(Point::new(p.x + radius, p.y + radius));
    let r2 = radius * radius;
    for row in lo.row..=hi.row {
        for col in lo.col..=hi.col {
            let cell = Cell::new(col, row);
            if !grid.get(cell).copied().unwrap_or(true) {
                continue;
            }
            let c0 = g.corner(cell);
            let nx = p.x.max(c0.x).min(c0.x + g.resolution);
            let ny = p.y.max(c0.y).min(c0.y + g.resolution);
            let (dx, dy) = (p.x - nx, p.y - ny);
            if dx * dx + dy * dy < r2 {
                return true;
            }
        }
    }
    false
}

/// Polar scan: `ranges[i]` measured along body-frame bearing `angles[i]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LidarScan<T> {
    pub angles: Vec<T>,
    pub ranges: Vec<T>,
    pub range_max: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState<T> {
    pub pose: Pose<T>,
    pub wheels: WheelSpeeds<T>,
    pub collided: bool,
}

/// One dynamics step: exact arc motion under the commanded wheel speeds, or
/// no motion at all (and `collided`) if the swept disk touches an obstacle.
pub fn step_dynamics<T: Scalar>(world: &World<T>, state: &RobotState<T>, dt: T) -> RobotState<T> {
    let twist = world.drive.forward(state.wheels);
    let next = integrate_arc(state.pose, twist, dt);
    let travel = twist.v.abs() * dt;
    let substeps = (travel / (world.config.resolution * T::c(0.25)))
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let blocked = (1..=substeps).any(|k| {
        let p = if k == substeps {
            next
        } else {
            integrate_arc(state.pose, twist, dt * T::c(k as f64) / T::c(substeps as f64))
        };
        world.disk_collides(p.position())
    });
    if blocked {
        RobotState {
            collided: true,
            ..*state
        }
    } else {
        RobotState {
            pose: next,
            wheels: state.wheels,
            collided: false,
        }
    }
}

/// Stateful simulator: a world, the robot, a seeded noise source and an
/// optional one-step command delay (used for the stub-hardware role).
#[derive(Debug, Clone)]
pub struct Simulator<T> {
    pub world: World<T>,
    pub state: RobotState<T>,
    pub time: T,
    pub episode: u64,
    pub wheel_angles: WheelSpeeds<T>,
    rng: ChaCha8Rng,
    delayed: Option<WheelSpeeds<T>>,
    command_latency: bool,
}

impl<T: Scalar> Simulator<T> {
    pub fn new(world: World<T>) -> Self {
        let seed = world.config.seed;
        Self::with_seed(world, seed, false)
    }

    /// Same world, independent noise stream and commands applied one step late.
    pub fn stub_hardware(world: World<T>, seed: u64) -> Self {
        Self::with_seed(world, seed, true)
    }

    fn with_seed(world: World<T>, seed: u64, command_latency: bool) -> Self {
        let state = RobotState {
            pose: world.config.robot.pose,
            ..Default::default()
        };
        Self {
            world,
            state,
            time: T::zero(),
            episode: 0,
            wheel_angles: WheelSpeeds::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            delayed: None,
            command_latency,
        }
    }

    pub fn set_wheels(&mut self, wheels: WheelSpeeds<T>) {
        if self.command_latency {
            self.delayed = Some(wheels);
        } else {
            self.state.wheels = wheels;
        }
    }

    pub fn set_twist(&mut self, twist: Twist<T>) {
        let w = self.world.drive.inverse(twist);
        self.set_wheels(w);
    }

    pub fn twist(&self) -> Twist<T> {
        self.world.drive.forward(self.state.wheels)
    }

    fn gauss(&mut self, std: T) -> T {
        if std > T::zero() {
            let n: f64 = StandardNormal.sample(&mut self.rng);
            std * T::c(n)
        } else {
            T::zero()
        }
    }

    /// Advances the world by its configured `dt`.
    pub fn step(&mut self) {
        let dt = self.world.config.dt;
        let commanded = self.state.wheels;
        let sigma = self.world.config.wheel_noise_std;
        let noisy = WheelSpeeds {
            left: commanded.left + self.gauss(sigma),
            right: commanded.right + self.gauss(sigma),
        };
        let applied = RobotState {
            wheels: noisy,
            ..self.state
        };
        let next = step_dynamics(&self.world, &applied, dt);
        if !next.collided {
            self.wheel_angles.left = self.wheel_angles.left + noisy.left * dt;
            self.wheel_angles.right = self.wheel_angles.right + noisy.right * dt;
        }
        self.state = RobotState {
            wheels: commanded,
            ..next
        };
        if let Some(w) = self.delayed.take() {
            self.state.wheels = w;
        }
        self.time = self.time + dt;
    }

    pub fn scan(&mut self) -> LidarScan<T> {
        let pose = self.state.pose;
        let lidar = self.world.config.lidar;
        let mut angles = Vec::with_capacity(lidar.n);
        let mut ranges = Vec::with_capacity(lidar.n);
        for k in 0..lidar.n {
            let a = self.world.beam_angle(k);
            let clean = self.world.true_range(pose.position(), wrap_angle(pose.theta + a));
            // No return stays exactly range_max; noise would turn it into a phantom hit.
            let noisy = if clean >= lidar.range_max {
                lidar.range_max
            } else {
                (clean + self.gauss(lidar.noise_std)).max(T::zero()).min(lidar.range_max)
            };
            angles.push(a);
            ranges.push(noisy);
        }
        LidarScan {
            angles,
            ranges,
            range_max: lidar.range_max,
        }
    }

    /// Moves the robot to `pose` (or the configured start), zeroes commands and
    /// starts a new episode, returning its id.
    pub fn reset(&mut self, pose: Option<Pose<T>>) -> Result<u64, WorldError> {
        let pose = pose.unwrap_or(self.world.config.robot.pose);
        if !pose.is_finite() || self.world.disk_collides(pose.position()) {
            return Err(WorldError::InCollision {
                x: pose.x.to_f64_lossy(),
                y: pose.y.to_f64_lossy(),
            });
        }
        self.state = RobotState {
            pose: Pose::new(pose.x, pose.y, wrap_angle(pose.theta)),
            ..Default::default()
        };
        self.delayed = None;
        self.episode += 1;
        Ok(self.episode)
    }
}
