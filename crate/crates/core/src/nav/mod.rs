//! Occupancy thresholding, distance transform, A* planning, path
//! downsampling and the waypoint controller.

mod astar;
mod controller;
mod edt;

pub use astar::{plan, Endpoint, OctileCost, PlanError, PlanPath, Traversability};
pub use controller::{ControllerState, Gains, Phase};
pub use edt::{distance_transform, squared_distance_cells, UNREACHED};

use crate::geometry::Point;
use crate::grid::{BoolGrid, Grid};
use crate::num::Scalar;

/// Occupied iff probability `>= threshold`.
pub fn binarize<T: Scalar>(probabilities: &Grid<T, f32>, threshold: f32) -> BoolGrid<T> {
    probabilities.map(|&p| p >= threshold)
}

/// Keeps the first waypoint, then each waypoint at least `spacing` of arc
/// length past the last kept one, and always the last.
pub fn downsample<T: Scalar>(path: &[Point<T>], spacing: T) -> Vec<Point<T>> {
    let Some((&first, rest)) = path.split_first() else {
        return Vec::new();
    };
    let mut out = vec![first];
    let mut arc = T::zero();
    let mut prev = first;
    for (i, &p) in rest.iter().enumerate() {
        arc = arc + prev.distance(&p);
        prev = p;
        if arc >= spacing || i + 1 == rest.len() {
            out.push(p);
            arc = T::zero();
        }
    }
    out
}
