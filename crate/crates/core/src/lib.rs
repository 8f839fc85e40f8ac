//! Mobile-robot math shared by the robomesh nodes: diff-drive kinematics, a
//! 2D lidar simulator, grid FastSLAM and clearance-aware grid navigation.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix `f64`, which is what the nodes use.

pub mod geometry;
pub mod grid;
pub mod kinematics;
pub mod nav;
pub mod num;
pub mod raycast;
pub mod sim;
pub mod slam;
pub mod teleop;

pub use num::Scalar;

pub type Point2 = geometry::Point<f64>;
pub type Pose2 = geometry::Pose<f64>;
pub type Twist2 = geometry::Twist<f64>;
pub type Wheels = kinematics::WheelSpeeds<f64>;
pub type GridGeom = grid::GridGeometry<f64>;
pub type OccGrid = grid::BoolGrid<f64>;
pub type ProbGrid = grid::Grid<f64, f32>;
pub type DistanceField = grid::Grid<f64, f64>;
pub type WorldConfig = sim::WorldConfig<f64>;
pub type World = sim::World<f64>;
pub type Simulator = sim::Simulator<f64>;
pub type Scan = sim::LidarScan<f64>;
pub type SlamConfig = slam::SlamConfig<f64>;
pub type ParticleSet = slam::ParticleSet<f64>;
pub type Path = nav::PlanPath<f64>;
pub type Controller = nav::ControllerState<f64>;
pub type Gains = nav::Gains<f64>;
