//! Row-major 2D grids anchored at a world origin.
//!
//! Cell `(col, row)` covers `[ox + col*res, ox + (col+1)*res) x [oy + row*res, oy + (row+1)*res)`
//! and is stored at `row * width + col`.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: i64,
    pub row: i64,
}

impl Cell {
    pub fn new(col: i64, row: i64) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry<T> {
    pub origin: Point<T>,
    pub resolution: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Scalar> GridGeometry<T> {
    pub fn new(origin: Point<T>, resolution: T, width: usize, height: usize) -> Self {
        Self {
            origin,
            resolution,
            width,
            height,
        }
    }

    /// Smallest grid at `resolution` covering `[0, width_m] x [0, height_m]`.
    pub fn covering(width_m: T, height_m: T, resolution: T) -> Self {
        let cells = |len: T| {
            let n = (len / resolution).to_f64_lossy();
            // Tolerate 10.0 / 0.1 landing a hair above 100.
            (n - 1e-9).ceil().max(1.0) as usize
        };
        Self::new(
            Point::new(T::zero(), T::zero()),
            resolution,
            cells(width_m),
            cells(height_m),
        )
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col >= 0
            && cell.row >= 0
            && (cell.col as usize) < self.width
            && (cell.row as usize) < self.height
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.contains(cell)
            .then(|| cell.row as usize * self.width + cell.col as usize)
    }

    pub fn cell_of_index(&self, idx: usize) -> Cell {
        Cell::new((idx % self.width) as i64, (idx / self.width) as i64)
    }

    /// Cell containing a world point (may lie outside the grid).
    pub fn cell_at(&self, p: Point<T>) -> Cell {
        let col = ((p.x - self.origin.x) / self.resolution).floor();
        let row = ((p.y - self.origin.y) / self.resolution).floor();
        Cell::new(
            col.to_i64().unwrap_or(i64::MIN),
            row.to_i64().unwrap_or(i64::MIN),
        )
    }

    pub fn center(&self, cell: Cell) -> Point<T> {
        let half = T::c(0.5);
        Point::new(
            self.origin.x + (T::c(cell.col as f64) + half) * self.resolution,
            self.origin.y + (T::c(cell.row as f64) + half) * self.resolution,
        )
    }

    /// Lower-left corner of a cell.
    pub fn corner(&self, cell: Cell) -> Point<T> {
        Point::new(
            self.origin.x + T::c(cell.col as f64) * self.resolution,
            self.origin.y + T::c(cell.row as f64) * self.resolution,
        )
    }

    pub fn cell_diagonal(&self) -> T {
        self.resolution * T::SQRT_2()
    }

    pub fn world_width(&self) -> T {
        self.resolution * T::c(self.width as f64)
    }

    pub fn world_height(&self) -> T {
        self.resolution * T::c(self.height as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T, C> {
    pub geometry: GridGeometry<T>,
    pub cells: Vec<C>,
}

impl<T: Scalar, C: Clone> Grid<T, C> {
    pub fn filled(geometry: GridGeometry<T>, value: C) -> Self {
        Self {
            cells: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn get(&self, cell: Cell) -> Option<&C> {
        self.geometry.index(cell).map(|i| &self.cells[i])
    }

    pub fn get_mut(&mut self, cell: Cell) -> Option<&mut C> {
        self.geometry.index(cell).map(move |i| &mut self.cells[i])
    }

    pub fn map<D>(&self, f: impl Fn(&C) -> D) -> Grid<T, D> {
        Grid {
            geometry: self.geometry,
            cells: self.cells.iter().map(f).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }
}

/// Occupied/free cells.
pub type BoolGrid<T> = Grid<T, bool>;
