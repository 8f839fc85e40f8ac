use std::time::{Duration, Instant};

use robomesh_core::geometry::Twist;
use robomesh_core::kinematics::{DiffDrive, WheelSpeeds};
use robomesh_core::slam::SlamError;
use robomesh_core::{ParticleSet, Pose2, ProbGrid, Scan, SlamConfig, Twist2};
use robomesh_msg::types::{LaserScan, OccupancyGridMsg, Pose2D, Time, Twist2D, WheelCmd};
use robomesh_net::{Flow, Node, NodeOptions, RuntimeError};
use serde::{Deserialize, Serialize};

use super::convert::{grid_to_msg, pose_to_msg, scan_from_msg, twist_from_msg};
use super::Running;

/// Filter state plus the command held since the previous scan.
pub struct SlamCore {
    pub set: ParticleSet,
    command: Twist2,
    last_stamp: Option<f64>,
    max_dt: f64,
}

impl SlamCore {
    pub fn new(config: SlamConfig, max_dt: f64) -> Result<Self, SlamError> {
        Ok(Self {
            set: ParticleSet::new(config)?,
            command: Twist::zero(),
            last_stamp: None,
            max_dt,
        })
    }

    /// Command assumed in force until the next scan.
    pub fn command(&mut self, twist: Twist2) {
        self.command = twist;
    }

    /// Predicts over the gap since the previous scan, then weights, maps and
    /// resamples. Returns the best particle's pose.
    pub fn on_scan(&mut self, stamp_s: f64, scan: &Scan) -> Result<Pose2, SlamError> {
        if let Some(prev) = self.last_stamp {
            let dt = stamp_s - prev;
            if dt > 0.0 {
                self.set.predict(self.command, dt.min(self.max_dt));
            }
        }
        self.last_stamp = Some(stamp_s);
        self.set.process_scan(scan)?;
        Ok(self.pose())
    }

    pub fn pose(&self) -> Pose2 {
        self.set.best().pose
    }

    pub fn map(&self) -> ProbGrid {
        self.set.best().probabilities()
    }
}

fn default_twist_channels() -> Vec<String> {
    vec!["teleop/twist".into()]
}

fn default_wheel_channels() -> Vec<String> {
    vec!["nav/wheel_cmd".into()]
}

fn default_scan_channel() -> String {
    "sim/scan".into()
}

fn default_map_period() -> f64 {
    1.0
}

fn default_max_dt() -> f64 {
    0.5
}

fn default_name() -> String {
    "slam".into()
}

/// SLAM node file: filter constants plus wiring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamNodeConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub filter: SlamConfig,
    #[serde(default = "default_twist_channels")]
    pub twist_channels: Vec<String>,
    /// Wheel commands are turned into twists with `wheel_radius` and `axle_track`.
    #[serde(default = "default_wheel_channels")]
    pub wheel_channels: Vec<String>,
    #[serde(default)]
    pub wheel_radius: Option<f64>,
    #[serde(default)]
    pub axle_track: Option<f64>,
    #[serde(default = "default_scan_channel")]
    pub scan_channel: String,
    #[serde(default = "default_map_period")]
    pub map_period_s: f64,
    /// Longest gap integrated by a single prediction.
    #[serde(default = "default_max_dt")]
    pub max_predict_dt: f64,
}

impl Default for SlamNodeConfig {
    fn default() -> Self {
        serde_yaml::from_str("{}").expect("defaults")
    }
}

pub fn start_slam(options: &NodeOptions, config: SlamNodeConfig) -> Result<Running, RuntimeError> {
    let mut core = SlamCore::new(config.filter.clone(), config.max_predict_dt).map_err(|e| RuntimeError::Callback(e.to_string()))?;
    let drive = match (config.wheel_radius, config.axle_track) {
        (Some(r), Some(l)) => Some(DiffDrive::new(r, l).map_err(|e| RuntimeError::Callback(e.to_string()))?),
        _ => None,
    };
    let node = Node::create(&config.name, options)?;
    let twists = config
        .twist_channels
        .iter()
        .map(|c| node.create_subscriber::<Twist2D>(c, 64))
        .collect::<Result<Vec<_>, _>>()?;
    let wheels = match drive {
        Some(_) => config
            .wheel_channels
            .iter()
            .map(|c| node.create_subscriber::<WheelCmd>(c, 64))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let scans = node.create_subscriber::<LaserScan>(&config.scan_channel, 16)?;
    let pose_pub = node.create_publisher::<Pose2D>("pose")?;
    let map_pub = node.create_publisher::<OccupancyGridMsg>("map")?;
    let map_period = Duration::from_secs_f64(config.map_period_s);
    let mut last_map: Option<Instant> = None;
    Ok(Running::spawn(node, 200.0, move |_| {
        // Latest command by receive time across every source.
        let mut newest: Option<(u64, Twist2)> = None;
        let mut offer = |t: u64, tw: Twist2| {
            if newest.is_none_or(|(n, _)| t >= n) {
                newest = Some((t, tw));
            }
        };
        for s in twists.iter().flat_map(|s| s.drain()) {
            offer(s.recv_time_us, twist_from_msg(&s.value));
        }
        if let Some(d) = &drive {
            for s in wheels.iter().flat_map(|s| s.drain()) {
                offer(s.recv_time_us, d.forward(WheelSpeeds { left: s.value.left, right: s.value.right }));
            }
        }
        if let Some((_, tw)) = newest {
            core.command(tw);
        }
        let mut updated = false;
        for s in scans.drain() {
            let scan = scan_from_msg(&s.value);
            core.on_scan(s.value.header.stamp.as_secs_f64(), &scan)?;
            pose_pub.publish(&pose_to_msg(core.pose()))?;
            updated = true;
        }
        if updated && last_map.is_none_or(|t| t.elapsed() >= map_period) {
            map_pub.publish(&grid_to_msg(&core.map(), Time::now(), "map"))?;
            last_map = Some(Instant::now());
        }
        Ok(Flow::Continue)
    }))
}
