use std::path::Path;
use std::sync::{Arc, Mutex};

use robomesh_core::kinematics::WheelSpeeds;
use robomesh_core::{Simulator, World, WorldConfig};
use robomesh_msg::types::{JointState, LaserScan, Pose2D, ResetReply, ResetRequest, Time, Twist2D, WheelCmd};
use robomesh_net::{Flow, Node, NodeOptions, RuntimeError};
use serde::{Deserialize, Serialize};

use super::convert::{pose_from_msg, pose_to_msg, scan_to_msg, twist_from_msg, twist_to_msg};
use super::Running;

/// Who the node pretends to be: the simulator, or stand-in hardware with
/// its own noise stream and a one-step command delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimRole {
    Sim,
    StubHardware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimNodeConfig {
    pub name: String,
    pub role: SimRole,
    pub twist_channels: Vec<String>,
    pub wheel_channels: Vec<String>,
    pub scan_period_s: f64,
    /// Noise seed for the stub role; the world seed drives the sim role.
    pub stub_seed: u64,
}

impl Default for SimNodeConfig {
    fn default() -> Self {
        Self {
            name: "sim".into(),
            role: SimRole::Sim,
            twist_channels: vec!["teleop/twist".into()],
            wheel_channels: vec!["nav/wheel_cmd".into()],
            scan_period_s: 0.1,
            stub_seed: 0x5eed,
        }
    }
}

pub fn load_world(path: impl AsRef<Path>) -> Result<World, String> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| format!("{}: {e}", path.as_ref().display()))?;
    parse_world(&text)
}

pub fn parse_world(text: &str) -> Result<World, String> {
    let cfg: WorldConfig = serde_yaml::from_str(text).map_err(|e| e.to_string())?;
    World::new(cfg).map_err(|e| e.to_string())
}

/// Shared simulator handle, for tests that need the ground truth.
pub type SharedSim = Arc<Mutex<Simulator>>;

pub fn start_sim(options: &NodeOptions, world: World, config: SimNodeConfig) -> Result<(Running, SharedSim), RuntimeError> {
    let dt = world.config.dt;
    let sim = match config.role {
        SimRole::Sim => Simulator::new(world),
        SimRole::StubHardware => Simulator::stub_hardware(world, config.stub_seed),
    };
    let sim = Arc::new(Mutex::new(sim));
    let node = Node::create(&config.name, options)?;
    let twists = config
        .twist_channels
        .iter()
        .map(|c| node.create_subscriber::<Twist2D>(c, 64))
        .collect::<Result<Vec<_>, _>>()?;
    let wheels = config
        .wheel_channels
        .iter()
        .map(|c| node.create_subscriber::<WheelCmd>(c, 64))
        .collect::<Result<Vec<_>, _>>()?;
    let pose_pub = node.create_publisher::<Pose2D>("pose")?;
    let scan_pub = node.create_publisher::<LaserScan>("scan")?;
    let joint_pub = node.create_publisher::<JointState>("joint_state")?;
    let twist_pub = node.create_publisher::<Twist2D>("twist")?;
    {
        let sim = Arc::clone(&sim);
        node.advertise_service::<ResetRequest, ResetReply, _>("reset", move |req| {
            let pose = req.has_pose.then(|| pose_from_msg(&req.pose));
            let episode_id = sim.lock().unwrap().reset(pose).map_err(|e| e.to_string())?;
            Ok(ResetReply { episode_id: episode_id as i64 })
        })?;
    }
    let scan_every = ((config.scan_period_s / dt).round() as u64).max(1);
    let frame = config.name.clone();
    let mut k = 0u64;
    let shared = Arc::clone(&sim);
    let running = Running::spawn(node, 1.0 / dt, move |_| {
        enum Cmd {
            Wheels(WheelSpeeds<f64>),
            Twist(Twist2D),
        }
        let mut newest: Option<(u64, Cmd)> = None;
        for s in wheels.iter().flat_map(|s| s.drain()) {
            if newest.as_ref().is_none_or(|(t, _)| s.recv_time_us >= *t) {
                newest = Some((s.recv_time_us, Cmd::Wheels(WheelSpeeds { left: s.value.left, right: s.value.right })));
            }
        }
        for s in twists.iter().flat_map(|s| s.drain()) {
            if newest.as_ref().is_none_or(|(t, _)| s.recv_time_us >= *t) {
                newest = Some((s.recv_time_us, Cmd::Twist(s.value)));
            }
        }
        let mut sim = sim.lock().unwrap();
        match newest {
            Some((_, Cmd::Wheels(w))) => sim.set_wheels(w),
            Some((_, Cmd::Twist(t))) => sim.set_twist(twist_from_msg(&t)),
            None => {}
        }
        sim.step();
        let stamp = Time::from_secs_f64(sim.time);
        pose_pub.publish(&pose_to_msg(sim.state.pose))?;
        twist_pub.publish(&twist_to_msg(sim.twist()))?;
        joint_pub.publish(&JointState {
            names: vec!["left_wheel".into(), "right_wheel".into()],
            positions: vec![sim.wheel_angles.left, sim.wheel_angles.right],
            velocities: vec![sim.state.wheels.left, sim.state.wheels.right],
            efforts: Vec::new(),
        })?;
        if k % scan_every == 0 {
            let scan = sim.scan();
            scan_pub.publish(&scan_to_msg(&scan, stamp, &frame))?;
        }
        k += 1;
        Ok(Flow::Continue)
    });
    Ok((running, shared))
}
