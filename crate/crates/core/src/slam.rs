//! Grid FastSLAM: a Rao-Blackwellized particle filter where every particle
//! carries a pose hypothesis and its own log-odds occupancy grid.
//!
//! One scan cycle is [`ParticleSet::predict`] for the elapsed motion, then
//! [`ParticleSet::weight`], [`ParticleSet::update_maps`] and
//! [`ParticleSet::resample_if_needed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Pose, Twist};
use crate::grid::{Grid, GridGeometry};
use crate::kinematics::integrate_arc;
use crate::num::Scalar;
use crate::raycast::RayWalk;
use crate::sim::LidarScan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlamError {
    #[error("scan has {angles} angles but {ranges} ranges")]
    ScanShape { angles: usize, ranges: usize },
    #[error("invalid slam config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
#[serde(default)]
pub struct SlamConfig<T> {
    pub particles: usize,
    pub seed: u64,
    /// Per-prediction std-dev of the linear velocity noise, m/s.
    pub sigma_v: T,
    /// Per-prediction std-dev of the angular velocity noise, rad/s.
    pub sigma_w: T,
    /// Per-prediction heading jitter, rad.
    pub sigma_theta: T,
    pub z_hit: T,
    pub z_rand: T,
    pub beam_stride: usize,
    pub l_occ: f32,
    pub l_free: f32,
    pub l_clamp: f32,
    pub origin: Point<T>,
    pub width_m: T,
    pub height_m: T,
    pub resolution: T,
    pub initial_pose: Pose<T>,
}

impl<T: Scalar> Default for SlamConfig<T> {
    fn default() -> Self {
        Self {
            particles: 50,
            seed: 0,
            sigma_v: T::c(0.02),
            sigma_w: T::c(0.02),
            sigma_theta: T::c(0.002),
            z_hit: T::c(0.75),
            z_rand: T::c(0.25),
            beam_stride: 2,
            l_occ: 0.85,
            l_free: -0.4,
            l_clamp: 6.0,
            origin: Point::new(T::zero(), T::zero()),
            width_m: T::c(10.0),
            height_m: T::c(10.0),
            resolution: T::c(0.1),
            initial_pose: Pose::default(),
        }
    }
}

impl<T: Scalar> SlamConfig<T> {
    pub fn validate(&self) -> Result<(), SlamError> {
        let bad = |m: &str| Err(SlamError::Config(m.to_string()));
        if self.particles < 2 {
            return bad("particles must be >= 2");
        }
        if self.beam_stride == 0 {
            return bad("beam_stride must be >= 1");
        }
        if !(self.resolution > T::zero() && self.width_m > T::zero() && self.height_m > T::zero()) {
            return bad("grid size and resolution must be positive");
        }
        if !(self.z_hit >= T::zero() && self.z_rand > T::zero()) {
            return bad("z_hit must be >= 0 and z_rand > 0");
        }
        if self.sigma_v < T::zero() || self.sigma_w < T::zero() || self.sigma_theta < T::zero() {
            return bad("noise std-devs must be non-negative");
        }
        if !(self.l_clamp > 0.0) {
            return bad("l_clamp must be positive");
        }
        Ok(())
    }

    pub fn geometry(&self) -> GridGeometry<T> {
        let g = GridGeometry::covering(self.width_m, self.height_m, self.resolution);
        GridGeometry::new(self.origin, self.resolution, g.width, g.height)
    }
}

pub fn logistic(l: f32) -> f32 {
    1.0 / (1.0 + (-l).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle<T> {
    pub pose: Pose<T>,
    pub log_weight: T,
    /// Log-odds, 0.0 = unknown.
    pub grid: Grid<T, f32>,
    /// Number of beams that touched each cell.
    pub observed: Grid<T, u16>,
}

impl<T: Scalar> Particle<T> {
    fn occupancy(&self, p: Point<T>) -> f32 {
        let cell = self.grid.geometry.cell_at(p);
        self.grid.get(cell).map_or(0.5, |&l| logistic(l))
    }

    fn scan_log_likelihood(&self, scan: &LidarScan<T>, cfg: &SlamConfig<T>) -> T {
        let mut sum = T::zero();
        for (k, (&angle, &range)) in scan.angles.iter().zip(&scan.ranges).enumerate() {
            if k % cfg.beam_stride != 0 || !(range < scan.range_max) {
                continue;
            }
            let p_occ = T::c(f64::from(self.occupancy(self.pose.project(range, angle))));
            sum = sum + (cfg.z_hit * p_occ + cfg.z_rand).ln();
        }
        sum
    }

    fn integrate_scan(&mut self, scan: &LidarScan<T>, cfg: &SlamConfig<T>) {
        let geom = self.grid.geometry;
        let origin = self.pose.position();
        for (&angle, &range) in scan.angles.iter().zip(&scan.ranges) {
            let range = range.max(T::zero()).min(scan.range_max);
            let end_cell = geom.cell_at(self.pose.project(range, angle));
            let Some(end_idx) = geom.index(end_cell) else {
                continue;
            };
            for step in RayWalk::new(&geom, origin, self.pose.theta + angle, range) {
                if step.cell == end_cell {
                    break;
                }
                if let Some(i) = geom.index(step.cell) {
                    let l = &mut self.grid.cells[i];
                    *l = (*l + cfg.l_free).clamp(-cfg.l_clamp, cfg.l_clamp);
                    self.observed.cells[i] = self.observed.cells[i].saturating_add(1);
                }
            }
            if range < scan.range_max {
                let l = &mut self.grid.cells[end_idx];
                *l = (*l + cfg.l_occ).clamp(-cfg.l_clamp, cfg.l_clamp);
            }
            self.observed.cells[end_idx] = self.observed.cells[end_idx].saturating_add(1);
        }
    }

    /// Cell probabilities in `[0, 1]`.
    pub fn probabilities(&self) -> Grid<T, f32> {
        self.grid.map(|&l| logistic(l))
    }
}

/// Effective sample size `1 / sum(w^2)` of normalized weights.
pub fn effective_sample_size<T: Scalar>(weights: &[T]) -> T {
    let s = weights.iter().fold(T::zero(), |acc, &w| acc + w * w);
    T::one() / s
}

/// Low-variance resampling: with `offset` in `[0, 1/M)`, pointer `k` sits at
/// `offset + k/M` on the cumulative weight line. Returns the chosen indices.
pub fn systematic_resample<T: Scalar>(weights: &[T], offset: T) -> Vec<usize> {
    let m = weights.len();
    let step = T::one() / T::c(m as f64);
    let mut out = Vec::with_capacity(m);
    let mut i = 0;
    let mut cumulative = weights.first().copied().unwrap_or_else(T::zero);
    for k in 0..m {
        let u = offset + T::c(k as f64) * step;
        while u > cumulative && i + 1 < m {
            i += 1;
            cumulative = cumulative + weights[i];
        }
        out.push(i);
    }
    out
}

#[derive(Debug, Clone)]
pub struct ParticleSet<T> {
    pub particles: Vec<Particle<T>>,
    pub config: SlamConfig<T>,
    rngs: Vec<ChaCha8Rng>,
    resample_rng: ChaCha8Rng,
    resample_count: usize,
}

impl<T: Scalar> ParticleSet<T> {
    pub fn new(config: SlamConfig<T>) -> Result<Self, SlamError> {
        let geometry = config.geometry();
        Self::with_prior(config, Grid::filled(geometry, 0.0))
    }

    /// Every particle starts from `prior` log-odds instead of an unknown map.
    pub fn with_prior(config: SlamConfig<T>, prior: Grid<T, f32>) -> Result<Self, SlamError> {
        config.validate()?;
        let m = config.particles;
        let uniform = -T::c(m as f64).ln();
        let observed = prior.map(|_| 0u16);
        let particles = (0..m)
            .map(|_| Particle {
                pose: config.initial_pose,
                log_weight: uniform,
                grid: prior.clone(),
                observed: observed.clone(),
            })
            .collect();
        let stream = |i: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(i);
            r
        };
        Ok(Self {
            rngs: (0..m as u64).map(stream).collect(),
            resample_rng: stream(m as u64),
            particles,
            config,
            resample_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn resample_count(&self) -> usize {
        self.resample_count
    }

    pub fn weights(&self) -> Vec<T> {
        self.particles.iter().map(|p| p.log_weight.exp()).collect()
    }

    /// Advances every particle along the commanded twist with independent
    /// velocity noise and heading jitter. Weights are unchanged.
    pub fn predict(&mut self, twist: Twist<T>, dt: T) {
        if !(dt > T::zero()) {
            return;
        }
        let cfg = &self.config;
        for (p, rng) in self.particles.iter_mut().zip(&mut self.rngs) {
            let mut gauss = |s: T| {
                if s > T::zero() {
                    let n: f64 = StandardNormal.sample(rng);
                    s * T::c(n)
                } else {
                    T::zero()
                }
            };
            let noisy = Twist::new(twist.v + gauss(cfg.sigma_v), twist.w + gauss(cfg.sigma_w));
            let jitter = gauss(cfg.sigma_theta);
            let mut next = integrate_arc(p.pose, noisy, dt);
            next.theta = crate::geometry::wrap_angle(next.theta + jitter);
            p.pose = next;
        }
    }

    /// Endpoint-likelihood update: `log w += sum log(z_hit * p_occ(endpoint) + z_rand)`
    /// over every stride-th beam shorter than `range_max`, then renormalizes.
    pub fn weight(&mut self, scan: &LidarScan<T>) -> Result<(), SlamError> {
        check_scan(scan)?;
        let cfg = &self.config;
        for p in &mut self.particles {
            p.log_weight = p.log_weight + p.scan_log_likelihood(scan, cfg);
        }
        self.normalize();
        Ok(())
    }

    fn normalize(&mut self) {
        let max = self
            .particles
            .iter()
            .map(|p| p.log_weight)
            .fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            let uniform = -T::c(self.len() as f64).ln();
            self.particles.iter_mut().for_each(|p| p.log_weight = uniform);
            return;
        }
        let sum = self
            .particles
            .iter()
            .fold(T::zero(), |acc, p| acc + (p.log_weight - max).exp());
        let log_norm = max + sum.ln();
        for p in &mut self.particles {
            p.log_weight = p.log_weight - log_norm;
        }
    }

    /// Inverse sensor model: free along each beam, occupied at the endpoint of
    /// beams shorter than `range_max`. Beams ending off-grid are skipped.
    pub fn update_maps(&mut self, scan: &LidarScan<T>) -> Result<(), SlamError> {
        check_scan(scan)?;
        let cfg = &self.config;
        for p in &mut self.particles {
            p.integrate_scan(scan, cfg);
        }
        Ok(())
    }

    /// Systematic resampling when `N_eff < M / 2`. Returns whether it resampled.
    pub fn resample_if_needed(&mut self) -> bool {
        let weights = self.weights();
        let m = self.len();
        if effective_sample_size(&weights) >= T::c(m as f64) / T::c(2.0) {
            return false;
        }
        let offset: f64 = self.resample_rng.random_range(0.0..1.0 / m as f64);
        let picks = systematic_resample(&weights, T::c(offset));
        let uniform = -T::c(m as f64).ln();
        self.particles = picks
            .into_iter()
            .map(|i| Particle {
                log_weight: uniform,
                ..self.particles[i].clone()
            })
            .collect();
        self.resample_count += 1;
        true
    }

    /// Full scan cycle after motion has been predicted.
    pub fn process_scan(&mut self, scan: &LidarScan<T>) -> Result<bool, SlamError> {
        self.weight(scan)?;
        self.update_maps(scan)?;
        Ok(self.resample_if_needed())
    }

    pub fn best(&self) -> &Particle<T> {
        let mut best = &self.particles[0];
        for p in &self.particles[1..] {
            if p.log_weight > best.log_weight {
                best = p;
            }
        }
        best
    }

    /// Highest-weight particle's pose and its map as probabilities.
    pub fn estimate(&self) -> (Pose<T>, Grid<T, f32>) {
        let b = self.best();
        (b.pose, b.probabilities())
    }
}

fn check_scan<T>(scan: &LidarScan<T>) -> Result<(), SlamError> {
    if scan.angles.len() != scan.ranges.len() {
        return Err(SlamError::ScanShape {
            angles: scan.angles.len(),
            ranges: scan.ranges.len(),
        });
    }
    Ok(())
}
