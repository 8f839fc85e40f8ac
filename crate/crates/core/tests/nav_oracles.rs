use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robomesh_core::geometry::{Point, Pose};
use robomesh_core::grid::{BoolGrid, Cell, Grid, GridGeometry};
use robomesh_core::nav::{distance_transform, downsample, squared_distance_cells, ControllerState, Gains, Traversability, UNREACHED};
use robomesh_core::sim::{Bounds, LidarConfig, Rect, RobotConfig, Simulator, World, WorldConfig};
use robomesh_oracles::{bfs_reachable, dijkstra, edt_brute};

const N: usize = 64;

fn random_grid(rng: &mut ChaCha8Rng, density: f64) -> BoolGrid<f64> {
    let geom = GridGeometry::new(Point::new(0.0, 0.0), 0.1, N, N);
    let mut g = Grid::filled(geom, false);
    for c in &mut g.cells {
        *c = rng.random_bool(density);
    }
    g
}

#[test]
fn edt_matches_brute_force_on_100_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let density = [0.0, 0.002, 0.02, 0.1, 0.4][k % 5];
        let g = random_grid(&mut rng, density);
        let fast = squared_distance_cells(&g);
        let slow = edt_brute(&g.cells, N, N);
        for (i, (&a, b)) in fast.cells.iter().zip(&slow).enumerate() {
            assert_eq!(a, b.unwrap_or(UNREACHED), "grid {k} cell {i}");
        }
        let d = distance_transform(&g);
        for (&m, b) in d.cells.iter().zip(&slow) {
            match b {
                Some(d2) => assert_eq!(m, (*d2 as f64).sqrt() * 0.1),
                None => assert!(m.is_infinite()),
            }
        }
    }
}

#[test]
fn astar_matches_dijkstra_and_bfs_on_100_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut found, mut unreachable) = (0, 0);
    for k in 0..100 {
        let g = random_grid(&mut rng, [0.05, 0.15, 0.3, 0.45][k % 4]);
        let clearance = [0.0, 0.1, 0.15, 0.2][k % 4 / 2 + k % 2];
        let t = Traversability::new(&g, clearance);
        let free: Vec<bool> = (0..N * N).map(|i| t.traversable(g.geometry.cell_of_index(i))).collect();
        let brute = edt_brute(&g.cells, N, N);
        let candidates: Vec<usize> = (0..N * N).filter(|&i| free[i]).collect();
        if candidates.len() < 2 {
            continue;
        }
        for _ in 0..5 {
            let s = candidates[rng.random_range(0..candidates.len())];
            let e = candidates[rng.random_range(0..candidates.len())];
            let (sc, ec) = (g.geometry.cell_of_index(s), g.geometry.cell_of_index(e));
            let got = t.plan(g.geometry.center(sc), g.geometry.center(ec)).unwrap();
            let reachable = bfs_reachable(&free, N, N, s, e);
            assert_eq!(got.is_some(), reachable, "grid {k}: existence differs from BFS");
            let Some(path) = got else {
                assert!(dijkstra(&free, N, N, s, e).is_none());
                unreachable += 1;
                continue;
            };
            found += 1;
            let want = dijkstra(&free, N, N, s, e).unwrap();
            assert!((path.cost.to_f64() - want).abs() < 1e-9, "grid {k}: cost {} vs {want}", path.cost.to_f64());
            assert_eq!(path.cells.first(), Some(&sc));
            assert_eq!(path.cells.last(), Some(&ec));
            // Clearance and connectivity checked against the brute-force field.
            for w in path.cells.windows(2) {
                assert!((w[0].col - w[1].col).abs() <= 1 && (w[0].row - w[1].row).abs() <= 1);
            }
            for (c, p) in path.cells.iter().zip(&path.waypoints) {
                let i = g.geometry.index(*c).unwrap();
                let d = brute[i].map_or(f64::INFINITY, |d2| (d2 as f64).sqrt() * 0.1);
                assert!(!g.cells[i] && d >= clearance);
                assert_eq!(*p, g.geometry.center(*c));
            }
        }
    }
    assert!(found > 100 && unreachable > 10, "found {found}, unreachable {unreachable}");
}

fn line_grid(cells: Vec<bool>, w: usize) -> BoolGrid<f64> {
    let h = cells.len() / w;
    Grid { geometry: GridGeometry::new(Point::new(0.0, 0.0), 0.1, w, h), cells }
}

proptest! {
    #[test]
    fn distance_field_is_lipschitz(cells in proptest::collection::vec(proptest::bool::weighted(0.05), 20 * 15)) {
        let g = line_grid(cells, 20);
        let d = distance_transform(&g);
        for i in 0..g.cells.len() {
            if g.cells[i] {
                prop_assert_eq!(d.cells[i], 0.0);
            }
            let a = g.geometry.cell_of_index(i);
            for (dc, dr) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
                let b = Cell::new(a.col + dc, a.row + dr);
                if let Some(&db) = d.get(b) {
                    let da = d.cells[i];
                    if da.is_finite() {
                        let step = 0.1 * ((dc * dc + dr * dr) as f64).sqrt();
                        prop_assert!((da - db).abs() <= step + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn downsample_keeps_endpoints_and_order(n in 1usize..60, spacing in 0.05f64..3.0) {
        let pts: Vec<_> = (0..n).map(|i| Point::new(i as f64 * 0.1, (i as f64 * 0.3).sin())).collect();
        let d = downsample(&pts, spacing);
        prop_assert_eq!(d.first(), pts.first());
        prop_assert_eq!(d.last(), pts.last());
        let mut last = 0;
        for p in &d[1..] {
            let j = pts.iter().position(|q| q == p).unwrap();
            prop_assert!(j > last);
            last = j;
        }
    }

    #[test]
    fn controller_outputs_are_bounded(
        x in -5.0f64..5.0, y in -5.0f64..5.0, th in -10.0f64..10.0,
        tx in -5.0f64..5.0, ty in -5.0f64..5.0, prev in proptest::option::of(-3.2f64..3.2),
        dt in 0.001f64..0.5,
    ) {
        let g = Gains::default();
        let mut c = ControllerState::new(g);
        c.prev_error = prev;
        let t = c.step(Pose::new(x, y, th), &[Point::new(tx, ty)], dt);
        prop_assert!(t.v >= 0.0 && t.v <= g.v_max);
        prop_assert!(t.w.abs() <= g.w_max);
    }
}

fn room() -> WorldConfig<f64> {
    WorldConfig {
        bounds: Bounds { width: 8.0, height: 6.0 },
        resolution: 0.1,
        rectangles: vec![
            Rect { x: 0.0, y: 0.0, w: 8.0, h: 0.2 },
            Rect { x: 0.0, y: 5.8, w: 8.0, h: 0.2 },
            Rect { x: 0.0, y: 0.0, w: 0.2, h: 6.0 },
            Rect { x: 7.8, y: 0.0, w: 0.2, h: 6.0 },
            Rect { x: 3.0, y: 0.0, w: 0.4, h: 4.0 },
            Rect { x: 5.0, y: 2.0, w: 0.4, h: 4.0 },
        ],
        robot: RobotConfig { pose: Pose::new(1.0, 1.0, 0.0), r: 0.05, axle_track: 0.3, half_width: 0.18 },
        lidar: LidarConfig { n: 8, fov: 6.0, range_max: 5.0, noise_std: 0.0 },
        seed: 0,
        dt: 0.02,
        wheel_noise_std: 0.0,
    }
}

#[test]
fn closed_loop_reaches_every_waypoint() {
    let world = World::new(room()).unwrap();
    let t = Traversability::new(&world.occupancy, 0.18 + 0.1);
    let path = t.plan(Point::new(1.0, 1.0), Point::new(7.0, 1.0)).unwrap().expect("route exists");
    let waypoints = downsample(&path.waypoints, 0.3);
    let mut sim = Simulator::new(world);
    let mut ctrl = ControllerState::new(Gains::default());
    let mut reached = Vec::new();
    for step in 0..20_000 {
        if step % 2 == 0 {
            let before = ctrl.index;
            let pose = sim.state.pose;
            let twist = ctrl.step(pose, &waypoints, 0.04);
            if ctrl.index > before {
                reached.push(pose.position().distance(&waypoints[before]));
            }
            sim.set_twist(twist);
        }
        sim.step();
        assert!(!sim.state.collided, "collided at {:?}", sim.state.pose);
        if ctrl.done(&waypoints) {
            break;
        }
    }
    assert!(ctrl.done(&waypoints), "stuck at waypoint {} of {}", ctrl.index, waypoints.len());
    assert_eq!(reached.len(), waypoints.len());
    assert!(reached.iter().all(|&d| d < 0.1));
}
