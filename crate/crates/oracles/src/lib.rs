//! Slow, obviously-correct reference implementations. Test code compares the
//! production algorithms against these; nothing here is used at runtime.
//!
//! Grids are plain row-major `&[bool]` slices so the oracles share no types
//! with the code under test.

use std::collections::{BinaryHeap, VecDeque};

/// Squared distance in cells from each cell to the nearest `true` cell, by
/// exhaustive search. `None` when the grid has no `true` cell.
pub fn edt_brute(occ: &[bool], w: usize, h: usize) -> Vec<Option<u64>> {
    let occupied: Vec<(i64, i64)> = (0..w * h)
        .filter(|&i| occ[i])
        .map(|i| ((i % w) as i64, (i / w) as i64))
        .collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            occupied
                .iter()
                .map(|&(ox, oy)| ((ox - x).pow(2) + (oy - y).pow(2)) as u64)
                .min()
        })
        .collect()
}

fn neighbours(free: &[bool], w: usize, h: usize, i: usize) -> Vec<(usize, f64)> {
    let (x, y) = ((i % w) as i64, (i / w) as i64);
    let ok = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && free[y as usize * w + x as usize];
    let mut out = Vec::new();
    for dy in -1..=1i64 {
        for dx in -1..=1i64 {
            if (dx, dy) == (0, 0) || !ok(x + dx, y + dy) {
                continue;
            }
            if dx != 0 && dy != 0 {
                if !(ok(x + dx, y) && ok(x, y + dy)) {
                    continue;
                }
                out.push(((y + dy) as usize * w + (x + dx) as usize, std::f64::consts::SQRT_2));
            } else {
                out.push(((y + dy) as usize * w + (x + dx) as usize, 1.0));
            }
        }
    }
    out
}

/// Shortest 8-connected path length in cells (diagonal = sqrt 2, diagonals
/// need both orthogonal neighbours free).
pub fn dijkstra(free: &[bool], w: usize, h: usize, start: usize, goal: usize) -> Option<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0)
        }
    }
    if !free[start] || !free[goal] {
        return None;
    }
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Item(0.0, start));
    while let Some(Item(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == goal {
            return Some(d);
        }
        for (j, c) in neighbours(free, w, h, i) {
            if d + c < dist[j] {
                dist[j] = d + c;
                heap.push(Item(d + c, j));
            }
        }
    }
    None
}

/// Whether `goal` is reachable from `start` through free cells.
pub fn bfs_reachable(free: &[bool], w: usize, h: usize, start: usize, goal: usize) -> bool {
    if !free[start] || !free[goal] {
        return false;
    }
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        if i == goal {
            return true;
        }
        for (j, _) in neighbours(free, w, h, i) {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    false
}

/// Distance along the ray `(ox, oy) + t (cos a, sin a)`, `t >= 0`, to the
/// closed axis-aligned box `[x0, x1] x [y0, y1]` (slab method).
pub fn ray_box(ox: f64, oy: f64, angle: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<f64> {
    let (dy, dx) = angle.sin_cos();
    let mut t_lo = 0.0f64;
    let mut t_hi = f64::INFINITY;
    for (o, d, lo, hi) in [(ox, dx, x0, x1), (oy, dy, y0, y1)] {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (a, b) = ((lo - o) / d, (hi - o) / d);
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
    }
    (t_lo <= t_hi).then_some(t_lo)
}

/// Nearest hit over many boxes, `None` if the ray misses all of them.
pub fn ray_boxes(ox: f64, oy: f64, angle: f64, boxes: &[[f64; 4]]) -> Option<f64> {
    boxes
        .iter()
        .filter_map(|b| ray_box(ox, oy, angle, b[0], b[1], b[2], b[3]))
        .min_by(f64::total_cmp)
}
