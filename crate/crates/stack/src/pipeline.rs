//! Headless lockstep runs of sim, SLAM and nav in one thread: the same cores
//! the nodes use, driven by simulated time instead of the wall clock, so a
//! seeded run is exactly repeatable.

use std::f64::consts::FRAC_PI_2;

use robomesh_core::geometry::{angle_diff, Pose, Twist};
use robomesh_core::nav::{binarize, distance_transform};
use robomesh_core::sim::{Bounds, LidarConfig, Rect, RobotConfig};
use robomesh_core::slam::SlamError;
use robomesh_core::teleop::Script;
use robomesh_core::{DistanceField, OccGrid, Point2, Pose2, ProbGrid, SlamConfig, Simulator, Twist2, World, WorldConfig};

use crate::nodes::nav::{NavConfig, NavCore, PlannedPath};
use crate::nodes::slam::SlamCore;

/// The 10 m x 10 m desk world: walls, a long block in the middle and a few
/// boxes for the scan matcher to lock onto.
pub fn desk_world(seed: u64) -> WorldConfig {
    let rect = |x, y, w, h| Rect { x, y, w, h };
    WorldConfig {
        bounds: Bounds { width: 10.0, height: 10.0 },
        resolution: 0.1,
        rectangles: vec![
            rect(0.0, 0.0, 10.0, 0.2),
            rect(0.0, 9.8, 10.0, 0.2),
            rect(0.0, 0.0, 0.2, 10.0),
            rect(9.8, 0.0, 0.2, 10.0),
            rect(3.0, 3.0, 1.0, 4.0),
            rect(6.0, 5.5, 1.0, 1.0),
            rect(5.5, 3.0, 0.5, 0.5),
            rect(0.2, 4.5, 0.6, 1.0),
            rect(9.2, 2.0, 0.6, 0.6),
            rect(4.5, 9.2, 1.0, 0.6),
        ],
        robot: RobotConfig {
            pose: Pose::new(1.5, 1.5, 0.0),
            r: 0.1,
            axle_track: 0.4,
            half_width: 0.2,
        },
        lidar: LidarConfig {
            n: 180,
            fov: 6.2,
            range_max: 8.0,
            noise_std: 0.02,
        },
        seed,
        dt: 0.02,
        wheel_noise_std: 0.15,
    }
}

/// Counter-clockwise square loop: `side` metres at `v`, then a quarter turn
/// in place at 0.5 rad/s, four times, then stop.
pub fn loop_script(side: f64, v: f64) -> Script<f64> {
    let mut rows = Vec::new();
    let mut t = 0.0;
    for _ in 0..4 {
        rows.push((t, Twist::new(v, 0.0)));
        t += side / v;
        rows.push((t, Twist::new(0.0, 0.5)));
        t += FRAC_PI_2 / 0.5;
    }
    rows.push((t, Twist::zero()));
    Script::new(rows)
}

pub fn desk_slam_config(seed: u64, initial_pose: Pose2) -> SlamConfig {
    SlamConfig {
        particles: 50,
        seed,
        initial_pose,
        beam_stride: 2,
        ..Default::default()
    }
}

/// Simulator and SLAM stepped together; a scan is taken every
/// `scan_every` physics steps.
pub struct Lockstep {
    pub sim: Simulator,
    pub slam: SlamCore,
    pub scan_every: u64,
    steps: u64,
    scans: u64,
}

impl Lockstep {
    pub fn new(world: World, slam: SlamConfig, scan_every: u64) -> Result<Self, SlamError> {
        Ok(Self {
            sim: Simulator::new(world),
            slam: SlamCore::new(slam, f64::INFINITY)?,
            scan_every: scan_every.max(1),
            steps: 0,
            scans: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.sim.time
    }

    pub fn scans(&self) -> u64 {
        self.scans
    }

    pub fn true_pose(&self) -> Pose2 {
        self.sim.state.pose
    }

    /// Applies `cmd` for one physics step. On scan steps SLAM first catches
    /// up with the command held since the previous scan, then adopts `cmd`.
    pub fn step(&mut self, cmd: Twist2) -> Result<(), SlamError> {
        self.sim.set_twist(cmd);
        if self.steps % self.scan_every == 0 {
            let scan = self.sim.scan();
            self.slam.on_scan(self.sim.time, &scan)?;
            self.slam.command(cmd);
            self.scans += 1;
        }
        self.sim.step();
        self.steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingReport {
    pub true_pose: Pose2,
    pub estimate: Pose2,
    pub position_error: f64,
    /// Absolute heading error, degrees.
    pub heading_error_deg: f64,
    /// Fraction of cells hit by at least `min_beams` beams whose binarized
    /// state matches the ground-truth raster.
    pub agreement: f64,
    pub observed_cells: usize,
    pub collided: bool,
    pub sim_time: f64,
}

/// Map agreement over cells the best particle saw at least `min_beams` times.
pub fn map_agreement(map: &ProbGrid, observed: &[u16], truth: &OccGrid, threshold: f32, min_beams: u16) -> (f64, usize) {
    let bin = binarize(map, threshold);
    let (mut agree, mut n) = (0usize, 0usize);
    for (i, &hits) in observed.iter().enumerate() {
        if hits >= min_beams {
            n += 1;
            if bin.cells[i] == truth.cells[i] {
                agree += 1;
            }
        }
    }
    (if n == 0 { 0.0 } else { agree as f64 / n as f64 }, n)
}

/// Drives `script` (plus one second of idling) and scores the best particle.
pub fn run_mapping(run: &mut Lockstep, script: &Script<f64>) -> Result<MappingReport, SlamError> {
    let end = script.duration() + 1.0;
    let mut collided = false;
    // Step count rather than accumulated time keeps the schedule exact.
    let steps = (end / run.sim.world.config.dt).ceil() as u64;
    for k in 0..steps {
        let t = k as f64 * run.sim.world.config.dt;
        run.step(script.at(t))?;
        if run.sim.state.collided {
            collided = true;
            break;
        }
    }
    let best = run.slam.set.best();
    let estimate = best.pose;
    let truth = run.true_pose();
    let (agreement, observed_cells) = map_agreement(&best.probabilities(), &best.observed.cells, &run.sim.world.occupancy, 0.5, 3);
    Ok(MappingReport {
        true_pose: truth,
        estimate,
        position_error: estimate.position().distance(&truth.position()),
        heading_error_deg: angle_diff(estimate.theta, truth.theta).abs().to_degrees(),
        agreement,
        observed_cells,
        collided,
        sim_time: run.sim.time,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavReport {
    pub plan: PlannedPath,
    /// The controller finished the path: its pose estimate came within
    /// `pos_tol` of the goal.
    pub reached: bool,
    /// Distance from the final pose estimate to the goal.
    pub estimate_error: f64,
    /// Distance from the true final position to the goal.
    pub final_error: f64,
    /// Smallest ground-truth obstacle distance seen at the true pose's cell.
    pub min_true_clearance: f64,
    /// True when that distance never fell below `clearance - resolution`.
    pub clearance_held: bool,
    pub collided: bool,
    pub sim_time: f64,
}

/// Ground-truth obstacle distance (metres) at the cell holding `p`.
pub fn clearance_at(edt: &DistanceField, p: Point2) -> f64 {
    let cell = edt.geometry.cell_at(p);
    edt.get(cell).copied().unwrap_or(0.0)
}

/// Plans on the SLAM map from the SLAM pose and follows the path with the
/// controller fed by SLAM at `nav.control_rate_hz`, while mapping goes on.
pub fn run_navigation(run: &mut Lockstep, nav: NavConfig, goal: Point2, time_limit_s: f64) -> Result<NavReport, String> {
    let dt = run.sim.world.config.dt;
    let resolution = run.sim.world.config.resolution;
    let edt = distance_transform(&run.sim.world.occupancy);
    let floor = nav.clearance() - resolution;
    // The node gets a fresh map once a second and replans on each.
    let replan_every = (1.0 / dt).round() as u64;
    let control_every = ((1.0 / nav.control_rate_hz) / dt).round().max(1.0) as u64;
    let pos_tol = nav.gains.pos_tol;
    let mut core = NavCore::new(nav);
    core.set_map(run.slam.map());
    let plan = core.set_goal(run.slam.pose(), goal)?;
    let mut min_clear = clearance_at(&edt, run.true_pose().position());
    let mut cmd = Twist::zero();
    let mut collided = false;
    let steps = (time_limit_s / dt).ceil() as u64;
    for k in 0..steps {
        if k > 0 && k % replan_every == 0 {
            core.set_map(run.slam.map());
            core.replan(run.slam.pose());
        }
        if k % control_every == 0 {
            match core.control(run.slam.pose(), dt * control_every as f64) {
                Some(t) => cmd = t,
                None => break,
            }
        }
        run.step(cmd).map_err(|e| e.to_string())?;
        min_clear = min_clear.min(clearance_at(&edt, run.true_pose().position()));
        if run.sim.state.collided {
            collided = true;
            break;
        }
    }
    let estimate_error = run.slam.pose().position().distance(&goal);
    Ok(NavReport {
        plan,
        reached: !core.is_active() && !collided && estimate_error <= pos_tol,
        estimate_error,
        final_error: run.true_pose().position().distance(&goal),
        min_true_clearance: min_clear,
        clearance_held: min_clear >= floor,
        collided,
        sim_time: run.sim.time,
    })
}
