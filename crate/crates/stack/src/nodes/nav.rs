use std::sync::{Arc, Mutex};

use robomesh_core::geometry::Twist;
use robomesh_core::kinematics::{DiffDrive, WheelSpeeds};
use robomesh_core::nav::{binarize, downsample, Traversability};
use robomesh_core::{Controller, Gains, Point2, Pose2, ProbGrid, Twist2};
use robomesh_msg::types::{OccupancyGridMsg, Path2D, Pose2D, Time, WheelCmd};
use robomesh_net::{Flow, Node, NodeOptions, RuntimeError};
use serde::{Deserialize, Serialize};

use super::convert::{grid_from_msg, path_to_msg, pose_from_msg};
use super::Running;

fn default_name() -> String {
    "nav".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    pub name: String,
    pub gains: Gains,
    pub half_width: f64,
    pub margin: f64,
    pub threshold: f32,
    /// Waypoint spacing after downsampling, m.
    pub spacing: f64,
    pub control_rate_hz: f64,
    pub wheel_radius: f64,
    pub axle_track: f64,
    pub pose_channel: String,
    pub map_channel: String,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            name: default_name(),
            gains: Gains::default(),
            half_width: 0.2,
            margin: 0.1,
            threshold: 0.5,
            spacing: 0.5,
            control_rate_hz: 25.0,
            wheel_radius: 0.1,
            axle_track: 0.4,
            pose_channel: "slam/pose".into(),
            map_channel: "slam/map".into(),
        }
    }
}

impl NavConfig {
    pub fn clearance(&self) -> f64 {
        self.half_width + self.margin
    }
}

/// Planner and waypoint follower without any transport.
pub struct NavCore {
    pub config: NavConfig,
    map: Option<ProbGrid>,
    goal: Option<Point2>,
    path: Vec<Point2>,
    controller: Controller,
    active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub waypoints: Vec<Point2>,
    /// Path length in metres.
    pub cost: f64,
}

impl NavCore {
    pub fn new(config: NavConfig) -> Self {
        let gains = config.gains;
        Self {
            config,
            map: None,
            goal: None,
            path: Vec::new(),
            controller: Controller::new(gains),
            active: false,
        }
    }

    pub fn set_map(&mut self, map: ProbGrid) {
        self.map = Some(map);
    }

    pub fn map(&self) -> Option<&ProbGrid> {
        self.map.as_ref()
    }

    pub fn path(&self) -> &[Point2] {
        &self.path
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    /// Plans from `start` to `goal` on the current map and makes the
    /// downsampled path active, replacing any previous one.
    pub fn set_goal(&mut self, start: Pose2, goal: Point2) -> Result<PlannedPath, String> {
        let planned = self.plan(start, goal)?;
        self.goal = Some(goal);
        self.active = true;
        Ok(planned)
    }

    /// Plans again from `start` to the active goal, typically on a fresh
    /// map. On failure the current path is kept.
    pub fn replan(&mut self, start: Pose2) -> Option<PlannedPath> {
        let goal = self.goal.filter(|_| self.active)?;
        match self.plan(start, goal) {
            Ok(p) => Some(p),
            Err(e) => {
                log::debug!("replan kept the old path: {e}");
                None
            }
        }
    }

    fn plan(&mut self, start: Pose2, goal: Point2) -> Result<PlannedPath, String> {
        let map = self.map.as_ref().ok_or("no map received yet")?;
        let occupied = binarize(map, self.config.threshold);
        let trav = Traversability::new(&occupied, self.config.clearance());
        let found = trav.plan(start.position(), goal).map_err(|e| e.to_string())?;
        let path = found.ok_or_else(|| format!("no path to ({:.2}, {:.2})", goal.x, goal.y))?;
        let waypoints = downsample(&path.waypoints, self.config.spacing);
        self.path = waypoints.clone();
        self.controller.restart();
        Ok(PlannedPath {
            waypoints,
            cost: path.cost.meters(map.geometry.resolution),
        })
    }

    pub fn cancel(&mut self) {
        self.active = false;
        self.goal = None;
        self.path.clear();
    }

    /// Control output while a path is active; the step that finishes the
    /// path returns zero and deactivates.
    pub fn control(&mut self, pose: Pose2, dt: f64) -> Option<Twist2> {
        if !self.active {
            return None;
        }
        let twist = self.controller.step(pose, &self.path, dt);
        if self.controller.done(&self.path) {
            self.active = false;
            return Some(Twist::zero());
        }
        Some(twist)
    }
}

pub fn start_nav(options: &NodeOptions, config: NavConfig) -> Result<Running, RuntimeError> {
    let drive = DiffDrive::new(config.wheel_radius, config.axle_track).map_err(|e| RuntimeError::Callback(e.to_string()))?;
    let node = Node::create(&config.name, options)?;
    let poses = node.create_subscriber::<Pose2D>(&config.pose_channel, 16)?;
    let maps = node.create_subscriber::<OccupancyGridMsg>(&config.map_channel, 2)?;
    let path_pub = Arc::new(node.create_publisher::<Path2D>("path")?);
    let wheel_pub = node.create_publisher::<WheelCmd>("wheel_cmd")?;
    let rate = config.control_rate_hz;
    let core = Arc::new(Mutex::new(NavCore::new(config)));
    let pose: Arc<Mutex<Option<Pose2>>> = Arc::new(Mutex::new(None));
    {
        let core = Arc::clone(&core);
        let pose = Arc::clone(&pose);
        let path_pub = Arc::clone(&path_pub);
        node.advertise_service::<Pose2D, Path2D, _>("set_goal", move |goal| {
            let start = pose.lock().unwrap().ok_or("no pose estimate yet")?;
            let mut core = core.lock().unwrap();
            let planned = core.set_goal(start, robomesh_core::geometry::Point::new(goal.x, goal.y))?;
            let msg = path_to_msg(&planned.waypoints, planned.cost, Time::now(), "map");
            path_pub.publish(&msg).map_err(|e| e.to_string())?;
            Ok(msg)
        })?;
    }
    Ok(Running::spawn(node, rate, move |dt| {
        if let Some(s) = poses.drain().pop() {
            *pose.lock().unwrap() = Some(pose_from_msg(&s.value));
        }
        let current = *pose.lock().unwrap();
        let mut core = core.lock().unwrap();
        if let Some(m) = maps.drain().pop() {
            match grid_from_msg(&m.value) {
                Ok(g) => {
                    core.set_map(g);
                    if let Some(planned) = current.and_then(|p| core.replan(p)) {
                        path_pub.publish(&path_to_msg(&planned.waypoints, planned.cost, Time::now(), "map"))?;
                    }
                }
                Err(e) => log::warn!("nav: bad map: {e}"),
            }
        }
        let Some(p) = current else {
            return Ok(Flow::Continue);
        };
        if let Some(tw) = core.control(p, dt) {
            let WheelSpeeds { left, right } = drive.inverse(tw);
            wheel_pub.publish(&WheelCmd { left, right })?;
        }
        Ok(Flow::Continue)
    }))
}
