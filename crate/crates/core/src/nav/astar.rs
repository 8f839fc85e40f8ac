//! 8-connected A* with exact octile path costs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geometry::Point;
use crate::grid::{BoolGrid, Cell, Grid, GridGeometry};
use crate::num::Scalar;

use super::edt::distance_transform;

/// `straight + diagonal * sqrt(2)` grid steps, ordered exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct OctileCost {
    pub straight: i64,
    pub diagonal: i64,
}

impl OctileCost {
    pub const ZERO: Self = Self { straight: 0, diagonal: 0 };
    pub const STRAIGHT: Self = Self { straight: 1, diagonal: 0 };
    pub const DIAGONAL: Self = Self { straight: 0, diagonal: 1 };

    pub fn new(straight: i64, diagonal: i64) -> Self {
        Self { straight, diagonal }
    }

    /// Octile distance between two cells.
    pub fn between(a: Cell, b: Cell) -> Self {
        let dx = (a.col - b.col).abs();
        let dy = (a.row - b.row).abs();
        Self::new((dx - dy).abs(), dx.min(dy))
    }

    pub fn to_f64(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }

    /// Length in meters at the given resolution.
    pub fn meters<T: Scalar>(self, resolution: T) -> T {
        T::c(self.to_f64()) * resolution
    }
}

impl std::ops::Add for OctileCost {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.straight + o.straight, self.diagonal + o.diagonal)
    }
}

impl Ord for OctileCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // a1 + b1 r  vs  a2 + b2 r  <=>  da  vs  db r, with r = sqrt(2)
        let da = (self.straight - other.straight) as i128;
        let db = (other.diagonal - self.diagonal) as i128;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (x, y) if x >= 0 && y <= 0 => Ordering::Greater,
            (x, y) if x <= 0 && y >= 0 => Ordering::Less,
            (1, 1) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for OctileCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Start,
    Goal,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Endpoint::Start => "start",
            Endpoint::Goal => "goal",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{0} is outside the map")]
    OutOfBounds(Endpoint),
    #[error("{0} is blocked or too close to an obstacle")]
    Blocked(Endpoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanPath<T> {
    pub cells: Vec<Cell>,
    /// Cell centers, start to goal.
    pub waypoints: Vec<Point<T>>,
    pub cost: OctileCost,
}

/// Occupancy plus clearance: a cell is traversable iff it is free and its
/// distance to the nearest occupied cell is at least `clearance` meters.
#[derive(Debug, Clone)]
pub struct Traversability<T> {
    pub distance: Grid<T, T>,
    pub clearance: T,
    free: Vec<bool>,
}

impl<T: Scalar> Traversability<T> {
    pub fn new(occupied: &BoolGrid<T>, clearance: T) -> Self {
        let distance = distance_transform(occupied);
        let free = occupied
            .cells
            .iter()
            .zip(&distance.cells)
            .map(|(&o, &d)| !o && d >= clearance)
            .collect();
        Self { distance, clearance, free }
    }

    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.distance.geometry
    }

    pub fn traversable(&self, cell: Cell) -> bool {
        self.geometry().index(cell).is_some_and(|i| self.free[i])
    }

    /// Neighbours of `cell` with their step cost; diagonals need both
    /// orthogonal cells traversable.
    pub fn neighbours(&self, cell: Cell) -> impl Iterator<Item = (Cell, OctileCost)> + '_ {
        const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        STEPS.iter().filter_map(move |&(dc, dr)| {
            let next = Cell::new(cell.col + dc, cell.row + dr);
            if !self.traversable(next) {
                return None;
            }
            if dc != 0 && dr != 0 {
                let side_a = Cell::new(cell.col + dc, cell.row);
                let side_b = Cell::new(cell.col, cell.row + dr);
                if !(self.traversable(side_a) && self.traversable(side_b)) {
                    return None;
                }
                return Some((next, OctileCost::DIAGONAL));
            }
            Some((next, OctileCost::STRAIGHT))
        })
    }

    fn endpoint(&self, p: Point<T>, which: Endpoint) -> Result<Cell, PlanError> {
        let cell = self.geometry().cell_at(p);
        if !self.geometry().contains(cell) {
            return Err(PlanError::OutOfBounds(which));
        }
        if !self.traversable(cell) {
            return Err(PlanError::Blocked(which));
        }
        Ok(cell)
    }

    /// `Ok(None)` means the goal is unreachable.
    pub fn plan(&self, start: Point<T>, goal: Point<T>) -> Result<Option<PlanPath<T>>, PlanError> {
        let s = self.endpoint(start, Endpoint::Start)?;
        let g = self.endpoint(goal, Endpoint::Goal)?;
        Ok(self.plan_cells(s, g))
    }

    /// A* between two traversable cells.
    pub fn plan_cells(&self, start: Cell, goal: Cell) -> Option<PlanPath<T>> {
        let geom = *self.geometry();
        let n = geom.len();
        let idx = |c: Cell| geom.index(c).expect("cell inside grid");
        let mut best: Vec<Option<OctileCost>> = vec![None; n];
        let mut parent = vec![usize::MAX; n];
        let mut closed = vec![false; n];
        let mut open = BinaryHeap::new();
        best[idx(start)] = Some(OctileCost::ZERO);
        open.push(Entry {
            f: OctileCost::between(start, goal),
            g: OctileCost::ZERO,
            cell: start,
        });
        while let Some(Entry { g, cell, .. }) = open.pop() {
            let i = idx(cell);
            if closed[i] {
                continue;
            }
            closed[i] = true;
            if cell == goal {
                let mut cells = vec![cell];
                let mut at = i;
                while parent[at] != usize::MAX {
                    at = parent[at];
                    cells.push(geom.cell_of_index(at));
                }
                cells.reverse();
                return Some(PlanPath {
                    waypoints: cells.iter().map(|&c| geom.center(c)).collect(),
                    cells,
                    cost: g,
                });
            }
            for (next, step) in self.neighbours(cell) {
                let j = idx(next);
                if closed[j] {
                    continue;
                }
                let ng = g + step;
                if best[j].is_none_or(|old| ng < old) {
                    best[j] = Some(ng);
                    parent[j] = i;
                    open.push(Entry {
                        f: ng + OctileCost::between(next, goal),
                        g: ng,
                        cell: next,
                    });
                }
            }
        }
        None
    }
}

#[derive(PartialEq, Eq)]
struct Entry {
    f: OctileCost,
    g: OctileCost,
    cell: Cell,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: smallest f first, then largest g.
        other
            .f
            .cmp(&self.f)
            .then_with(|| self.g.cmp(&other.g))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Plans from `start` to `goal` keeping `half_width + margin` clearance.
pub fn plan<T: Scalar>(
    occupied: &BoolGrid<T>,
    start: Point<T>,
    goal: Point<T>,
    half_width: T,
    margin: T,
) -> Result<Option<PlanPath<T>>, PlanError> {
    Traversability::new(occupied, half_width + margin).plan(start, goal)
}
