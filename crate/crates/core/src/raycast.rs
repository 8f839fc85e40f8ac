//! Grid traversal along a ray (Amanatides & Woo DDA).

use crate::geometry::Point;
use crate::grid::{Cell, GridGeometry};
use crate::num::Scalar;

/// One visited cell and the ray distance at which it is entered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayStep<T> {
    pub cell: Cell,
    pub t_enter: T,
}

/// Visits every cell the ray from `origin` at `angle` passes through, in order,
/// while the entry distance is at most `max_t`. Cells outside the grid are
/// yielded too; callers decide what leaving the grid means.
pub struct RayWalk<T> {
    cell: Cell,
    step_col: i64,
    step_row: i64,
    t_max_x: T,
    t_max_y: T,
    t_delta_x: T,
    t_delta_y: T,
    t_enter: T,
    max_t: T,
    done: bool,
}

impl<T: Scalar> RayWalk<T> {
    pub fn new(geometry: &GridGeometry<T>, origin: Point<T>, angle: T, max_t: T) -> Self {
        let (dy, dx) = angle.sin_cos();
        let cell = geometry.cell_at(origin);
        let corner = geometry.corner(cell);
        let res = geometry.resolution;
        let axis = |d: T, o: T, lo: T| -> (i64, T, T) {
            if d > T::zero() {
                (1, (lo + res - o) / d, res / d)
            } else if d < T::zero() {
                (-1, (lo - o) / d, -res / d)
            } else {
                (0, T::infinity(), T::infinity())
            }
        };
        let (step_col, t_max_x, t_delta_x) = axis(dx, origin.x, corner.x);
        let (step_row, t_max_y, t_delta_y) = axis(dy, origin.y, corner.y);
        Self {
            cell,
            step_col,
            step_row,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            t_enter: T::zero(),
            max_t,
            done: !(max_t >= T::zero()),
        }
    }
}

impl<T: Scalar> Iterator for RayWalk<T> {
    type Item = RayStep<T>;

    fn next(&mut self) -> Option<RayStep<T>> {
        if self.done || self.t_enter > self.max_t {
            return None;
        }
        let out = RayStep {
            cell: self.cell,
            t_enter: self.t_enter,
        };
        if self.t_max_x < self.t_max_y {
            self.cell.col += self.step_col;
            self.t_enter = self.t_max_x;
            self.t_max_x = self.t_max_x + self.t_delta_x;
        } else if self.t_max_y.is_finite() {
            self.cell.row += self.step_row;
            self.t_enter = self.t_max_y;
            self.t_max_y = self.t_max_y + self.t_delta_y;
        } else {
            self.done = true;
        }
        Some(out)
    }
}

/// Distance to the first cell for which `occupied` holds, entering at the
/// cell boundary; `None` if the ray leaves the grid or passes `max_t` first.
pub fn first_hit<T: Scalar>(
    geometry: &GridGeometry<T>,
    origin: Point<T>,
    angle: T,
    max_t: T,
    mut occupied: impl FnMut(Cell) -> bool,
) -> Option<T> {
    for step in RayWalk::new(geometry, origin, angle, max_t) {
        if !geometry.contains(step.cell) {
            return None;
        }
        if occupied(step.cell) {
            return Some(step.t_enter);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> GridGeometry<f64> {
        GridGeometry::new(Point::new(0.0, 0.0), 1.0, 10, 10)
    }

    #[test]
    fn axis_aligned_walk() {
        let cells: Vec<_> = RayWalk::new(&geom(), Point::new(0.5, 0.5), 0.0, 3.0)
            .map(|s| (s.cell.col, s.t_enter))
            .collect();
        assert_eq!(cells, vec![(0, 0.0), (1, 0.5), (2, 1.5), (3, 2.5)]);
    }

    #[test]
    fn diagonal_walk_is_connected() {
        let steps: Vec<_> =
            RayWalk::new(&geom(), Point::new(0.3, 0.1), 0.7, 8.0).collect();
        for w in steps.windows(2) {
            let d = (w[1].cell.col - w[0].cell.col).abs() + (w[1].cell.row - w[0].cell.row).abs();
            assert_eq!(d, 1);
            assert!(w[1].t_enter >= w[0].t_enter);
        }
    }

    #[test]
    fn hit_distance_is_boundary_entry() {
        let d = first_hit(&geom(), Point::new(0.5, 0.5), 0.0, 20.0, |c| c.col == 5).unwrap();
        assert!((d - 4.5).abs() < 1e-12);
        let d = first_hit(&geom(), Point::new(5.5, 0.5), std::f64::consts::PI, 20.0, |c| c.col == 2)
            .unwrap();
        assert!((d - 2.5).abs() < 1e-12);
        assert!(first_hit(&geom(), Point::new(0.5, 0.5), 0.0, 20.0, |_| false).is_none());
    }
}
