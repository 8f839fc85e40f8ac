//! Message <-> core type conversions.

use robomesh_core::geometry::{Point, Pose, Twist};
use robomesh_core::grid::{Grid, GridGeometry};
use robomesh_core::{Point2, Pose2, ProbGrid, Scan, Twist2};
use robomesh_msg::types::{Header, LaserScan, OccupancyGridMsg, Path2D, Pose2D, Time, Twist2D};

pub fn pose_to_msg(p: Pose2) -> Pose2D {
    Pose2D { x: p.x, y: p.y, theta: p.theta }
}

pub fn pose_from_msg(p: &Pose2D) -> Pose2 {
    Pose::new(p.x, p.y, p.theta)
}

pub fn twist_to_msg(t: Twist2) -> Twist2D {
    Twist2D { v: t.v, w: t.w }
}

pub fn twist_from_msg(t: &Twist2D) -> Twist2 {
    Twist::new(t.v, t.w)
}

pub fn scan_to_msg(scan: &Scan, stamp: Time, frame: &str) -> LaserScan {
    LaserScan {
        header: Header::new(stamp, frame),
        angles: scan.angles.clone(),
        ranges: scan.ranges.clone(),
        range_max: scan.range_max,
    }
}

pub fn scan_from_msg(msg: &LaserScan) -> Scan {
    Scan {
        angles: msg.angles.clone(),
        ranges: msg.ranges.clone(),
        range_max: msg.range_max,
    }
}

pub fn grid_to_msg(grid: &ProbGrid, stamp: Time, frame: &str) -> OccupancyGridMsg {
    let g = grid.geometry;
    OccupancyGridMsg {
        header: Header::new(stamp, frame),
        origin: Pose2D { x: g.origin.x, y: g.origin.y, theta: 0.0 },
        resolution: g.resolution,
        width: g.width as i32,
        height: g.height as i32,
        cells: grid.cells.iter().map(|p| p.clamp(0.0, 1.0)).collect(),
    }
}

pub fn grid_from_msg(msg: &OccupancyGridMsg) -> Result<ProbGrid, String> {
    msg.validate().map_err(|e| e.to_string())?;
    Ok(Grid {
        geometry: GridGeometry::new(Point::new(msg.origin.x, msg.origin.y), msg.resolution, msg.width as usize, msg.height as usize),
        cells: msg.cells.clone(),
    })
}

pub fn path_to_msg(points: &[Point2], cost: f64, stamp: Time, frame: &str) -> Path2D {
    Path2D {
        header: Header::new(stamp, frame),
        x: points.iter().map(|p| p.x).collect(),
        y: points.iter().map(|p| p.y).collect(),
        cost,
    }
}

pub fn path_from_msg(msg: &Path2D) -> Vec<Point2> {
    msg.x.iter().zip(&msg.y).map(|(&x, &y)| Point::new(x, y)).collect()
}
