//! Exact Euclidean distance transform (Felzenszwalb & Huttenlocher).

use crate::grid::{BoolGrid, Grid};
use crate::num::Scalar;

/// Marks cells with no occupied cell anywhere in the grid.
pub const UNREACHED: u64 = u64::MAX;

/// Squared distance in cells from every cell to the nearest occupied cell.
pub fn squared_distance_cells<T: Scalar>(occupied: &BoolGrid<T>) -> Grid<T, u64> {
    let (w, h) = (occupied.width(), occupied.height());
    let mut out = occupied.map(|&o| if o { 0 } else { UNREACHED });

    // Columns: 1-D distance to the nearest occupied cell, by two sweeps.
    for col in 0..w {
        let mut last: Option<usize> = None;
        for row in 0..h {
            let i = row * w + col;
            if out.cells[i] == 0 {
                last = Some(row);
            } else if let Some(r) = last {
                out.cells[i] = ((row - r) as u64).pow(2);
            }
        }
        last = None;
        for row in (0..h).rev() {
            let i = row * w + col;
            if out.cells[i] == 0 {
                last = Some(row);
            } else if let Some(r) = last {
                out.cells[i] = out.cells[i].min(((r - row) as u64).pow(2));
            }
        }
    }

    // Rows: lower envelope of parabolas (q - v)^2 + f(v).
    let mut f = vec![0u64; w];
    let mut v = vec![0usize; w];
    let mut z = vec![0f64; w + 1];
    for row in 0..h {
        let line = &mut out.cells[row * w..(row + 1) * w];
        f.copy_from_slice(line);
        let mut k: usize = 0;
        let mut any = false;
        for q in 0..w {
            if f[q] == UNREACHED {
                continue;
            }
            if !any {
                any = true;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                continue;
            }
            let mut s;
            loop {
                let p = v[k];
                s = ((f[q] as f64 + (q * q) as f64) - (f[p] as f64 + (p * p) as f64))
                    / (2.0 * (q as f64 - p as f64));
                // z[0] is -inf, so this stops at k = 0.
                if s <= z[k] {
                    k -= 1;
                } else {
                    break;
                }
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        if !any {
            continue;
        }
        let mut k = 0;
        for (q, cell) in line.iter_mut().enumerate() {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let d = q.abs_diff(v[k]) as u64;
            *cell = d * d + f[v[k]];
        }
    }
    out
}

/// Distance in meters to the nearest occupied cell center; `+inf` everywhere
/// when nothing is occupied.
pub fn distance_transform<T: Scalar>(occupied: &BoolGrid<T>) -> Grid<T, T> {
    let res = occupied.geometry.resolution;
    squared_distance_cells(occupied).map(|&d2| {
        if d2 == UNREACHED {
            T::infinity()
        } else {
            T::c((d2 as f64).sqrt()) * res
        }
    })
}
