//! Walk-on-spheres sampling of harmonic measure and logarithmic capacity.
//!
//! Walks run in the plane. Each jump is an exact Brownian exit from a disk
//! that the oracle certifies to be inside the domain, so the sampled exit
//! law is unbiased; only the stopping near the boundary is approximate, and
//! it is pinned to the band `eps/2 < dist_lower < eps`.

use crate::error::{Error, Result};
use crate::julia::{CellCover, CoverIndex, PointCloud};
use crate::measure::DiscreteMeasure;
use crate::rng::{stream, StreamKind};
use crate::sphere::SpherePoint;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Two-sided queryable distance estimate to a compact set `K`, built from an
/// outer cell cover and an inner point cloud on `K`.
pub struct CompactSetOracle {
    pub cover: CellCover,
    cover_index: CoverIndex,
    /// Occupied region is inside `B(0, cover_radius)`.
    cover_radius: f64,
    /// Finite points lying on `K` (up to construction residual).
    pub cloud: Vec<Complex64>,
    cloud_index: PlaneIndex,
    /// Largest nearest-neighbor spacing inside the cloud; a proxy for its
    /// covering resolution.
    pub cloud_resolution: f64,
    /// Escape/bounding radius `M` with `K` inside `B(0, M)`.
    pub bounding_radius: f64,
}

impl CompactSetOracle {
    pub fn new(cover: CellCover, cloud_points: Vec<Complex64>, bounding_radius: f64) -> Result<Self> {
        if cover.occupied.is_empty() {
            return Err(Error::InvalidInput("empty outer cover".into()));
        }
        if cloud_points.is_empty() {
            return Err(Error::InvalidInput("empty inner cloud".into()));
        }
        let cover_index = CoverIndex::build(&cover);
        let cover_radius = cover
            .occupied
            .iter()
            .map(|&cell| {
                let c = cover.cell_center(cell);
                c.norm() + cover.cell_diagonal() / 2.0
            })
            .fold(0.0, f64::max);
        let cloud_index = PlaneIndex::build(&cloud_points);
        let cloud_resolution = cloud_points
            .par_iter()
            .enumerate()
            .map(|(i, &p)| cloud_index.nearest_excluding(p, i).map(|(_, d)| d).unwrap_or(0.0))
            .reduce(|| 0.0, f64::max);
        Ok(CompactSetOracle {
            cover,
            cover_index,
            cover_radius,
            cloud: cloud_points,
            cloud_index,
            cloud_resolution,
            bounding_radius,
        })
    }

    pub fn from_parts(cover: CellCover, cloud: &PointCloud, bounding_radius: f64) -> Result<Self> {
        let pts: Vec<Complex64> = cloud.points.iter().filter_map(|p| p.to_complex()).collect();
        Self::new(cover, pts, bounding_radius)
    }

    /// Certified lower bound on the Euclidean distance to `K`: the distance
    /// to the union of occupied cells, which contains `K`.
    pub fn dist_lower(&self, x: Complex64) -> f64 {
        let far = x.norm() - self.cover_radius;
        if far > 4.0 * self.cover.h {
            // the cover sits inside B(0, cover_radius)
            return far;
        }
        self.cover_index.distance(&self.cover, x)
    }

    /// Upper bound: distance to the nearest inner-cloud point, which lies on
    /// `K` up to construction residual.
    pub fn dist_upper(&self, x: Complex64) -> f64 {
        self.cloud_index.nearest(x).map(|(_, d)| d).unwrap_or(f64::INFINITY)
    }

    /// Nearest cloud point within `radius`, if any.
    pub fn snap(&self, x: Complex64, radius: f64) -> Option<Complex64> {
        let (idx, d) = self.cloud_index.nearest(x)?;
        (d <= radius).then(|| self.cloud[idx])
    }

    /// Snap acceptance radius for a stop at scale `eps`: the walk stops
    /// within `eps` of the cover, the cover may extend up to about two cell
    /// diagonals beyond `K`, and the cloud resolves `K` to its own spacing.
    pub fn snap_radius(&self, eps: f64) -> f64 {
        2.0 * eps + self.cloud_resolution + 2.0 * self.cover.cell_diagonal()
    }
}

/// Hash-grid nearest neighbor over planar points.
pub struct PlaneIndex {
    cell: f64,
    grid: HashMap<(i64, i64), Vec<u32>>,
    points: Vec<Complex64>,
}

impl PlaneIndex {
    pub fn build(points: &[Complex64]) -> Self {
        let n = points.len().max(1);
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in points {
            lo_x = lo_x.min(p.re);
            hi_x = hi_x.max(p.re);
            lo_y = lo_y.min(p.im);
            hi_y = hi_y.max(p.im);
        }
        let area = ((hi_x - lo_x) * (hi_y - lo_y)).max(1e-12);
        let cell = (area / n as f64).sqrt().clamp(1e-9, 1.0);
        let mut grid: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            grid.entry(Self::key(*p, cell)).or_default().push(i as u32);
        }
        PlaneIndex { cell, grid, points: points.to_vec() }
    }

    fn key(p: Complex64, cell: f64) -> (i64, i64) {
        ((p.re / cell).floor() as i64, (p.im / cell).floor() as i64)
    }

    pub fn nearest(&self, p: Complex64) -> Option<(usize, f64)> {
        self.nearest_excluding(p, usize::MAX)
    }

    fn nearest_excluding(&self, p: Complex64, skip: usize) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (kx, ky) = Self::key(p, self.cell);
        let mut best = f64::INFINITY;
        let mut best_idx = usize::MAX;
        let mut ring = 0i64;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs().max(dy.abs()) != ring {
                        continue;
                    }
                    if let Some(bucket) = self.grid.get(&(kx + dx, ky + dy)) {
                        for &i in bucket {
                            if i as usize == skip {
                                continue;
                            }
                            let d = (self.points[i as usize] - p).norm();
                            if d < best {
                                best = d;
                                best_idx = i as usize;
                            }
                        }
                    }
                }
            }
            if best.is_finite() && best <= (ring as f64) * self.cell {
                break;
            }
            ring += 1;
            if ring > 4_000_000 {
                break;
            }
        }
        (best_idx != usize::MAX).then_some((best_idx, best))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Stopping scale epsilon.
    pub eps: f64,
    /// Sample count.
    pub samples: u64,
    /// Cap on the jump radius.
    pub r_cap: f64,
    /// Start circle radius for capacity runs.
    pub r_start: f64,
    pub seed: u64,
    /// Per-walk step cap.
    pub step_cap: u64,
    /// Snap stop points to the inner cloud.
    pub snap: bool,
}

impl WalkConfig {
    pub fn new(eps: f64, samples: u64, seed: u64, oracle_m: f64) -> Self {
        WalkConfig {
            eps,
            samples,
            r_cap: 4.0 * oracle_m,
            r_start: 4.0 * oracle_m,
            seed,
            step_cap: 1_000_000,
            snap: true,
        }
    }

    pub fn validate(&self, oracle: &CompactSetOracle) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidInput("need at least one sample".into()));
        }
        if self.r_cap < 4.0 * oracle.bounding_radius {
            return Err(Error::InvalidInput(format!(
                "r_cap {} below 4 * bounding radius {}",
                self.r_cap,
                4.0 * oracle.bounding_radius
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct WalkSample {
    pub stop: Complex64,
    pub steps: u64,
    pub dist_at_stop: f64,
}

/// One walk-on-spheres sample, deterministic in `(cfg.seed, index)`.
///
/// Steps jump `r = min(dist_lower - (3/4) eps, cap)` in a uniform random
/// direction and stop at the first point with `eps/2 < dist_lower < eps`.
/// Shrinking every step by `(3/4) eps` keeps the walk from ever jumping
/// below the `eps/2` floor. The cap is `r_cap` in the near field and grows
/// like `|x| / 2` during far excursions; every jump is still an exact disk
/// exit, so the sampled law is unchanged and only the step count improves
/// (fixed caps make the quadratic cost of log-recurrent 2D excursions
/// dominate).
pub fn wos_sample(
    oracle: &CompactSetOracle,
    x0: Complex64,
    cfg: &WalkConfig,
    index: u64,
) -> Result<WalkSample> {
    let d0 = oracle.dist_lower(x0);
    if d0 <= cfg.eps {
        return Err(Error::InvalidInput(format!(
            "start point must be farther than eps from K (dist_lower {d0:.3e})"
        )));
    }
    let mut rng = stream(cfg.seed, StreamKind::Walk, index);
    let reentry_radius = cfg.r_cap.max(2.0 * oracle.cover_radius);
    let mut x = x0;
    let mut steps = 0u64;
    loop {
        // Far excursions re-enter in one exact draw: the first hit of the
        // circle |z| = reentry_radius from outside has the closed-form
        // exterior-harmonic-measure law (Poisson kernel at the inverted
        // point). The circle exterior avoids K, so the strong Markov
        // composition stays exact; plain recurrence would crawl back in
        // quadratically many steps.
        if x.norm() > 2.0 * reentry_radius {
            let u: f64 = rng.gen();
            x = sample_circle_first_hit(x, reentry_radius, u);
            steps += 1;
            if steps >= cfg.step_cap {
                return Err(Error::WalkBudgetExceeded { cap: cfg.step_cap, completed: 0 });
            }
            continue;
        }
        let dl = oracle.dist_lower(x);
        if dl > 0.5 * cfg.eps && dl < cfg.eps {
            return Ok(WalkSample { stop: x, steps, dist_at_stop: dl });
        }
        let r = (dl - 0.75 * cfg.eps).min(cfg.r_cap);
        if !(r > 0.0) {
            // unreachable under the step rule; a defensive stop keeps the
            // walk inside the band postcondition
            return Err(Error::InvalidInput(format!("walk fell below the stopping band: {dl:.3e}")));
        }
        let theta: f64 = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        x += Complex64::from_polar(r, theta);
        steps += 1;
        if steps >= cfg.step_cap {
            return Err(Error::WalkBudgetExceeded { cap: cfg.step_cap, completed: 0 });
        }
    }
}

/// First-hit point on the circle `|z| = radius` of a Brownian path started
/// at `x` with `|x| > radius`: the hitting law is the Poisson kernel at the
/// inverted point `radius^2 * x / |x|^2`, sampled by inverting its CDF
/// `F(t) = t/(2 pi) + atan(rho sin t / (1 - rho cos t)) / pi`.
fn sample_circle_first_hit(x: Complex64, radius: f64, u: f64) -> Complex64 {
    let rho = (radius / x.norm()).min(1.0 - 1e-12);
    let phi = x.arg();
    let v = u - 0.5; // target in (-1/2, 1/2]
    let cdf = |t: f64| -> f64 {
        t / (2.0 * std::f64::consts::PI)
            + (rho * t.sin() / (1.0 - rho * t.cos())).atan() / std::f64::consts::PI
    };
    let (mut lo, mut hi) = (-std::f64::consts::PI, std::f64::consts::PI);
    for _ in 0..70 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Complex64::from_polar(radius, phi + 0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub enum WalkStart {
    /// Fixed start point.
    Point(f64, f64),
    /// Uniform on the circle of this radius.
    Circle(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkStats {
    pub samples: u64,
    pub mean_steps: f64,
    pub flagged_count: u64,
    /// Standard error of log |stop|.
    pub stderr: f64,
}

fn run_walks(
    oracle: &CompactSetOracle,
    start: WalkStart,
    cfg: &WalkConfig,
    index_offset: u64,
) -> Result<Vec<WalkSample>> {
    cfg.validate(oracle)?;
    let results: Vec<(u64, Result<WalkSample>)> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let index = i + index_offset;
            let x0 = match start {
                WalkStart::Point(re, im) => Complex64::new(re, im),
                WalkStart::Circle(r) => {
                    // the start angle comes from a separate stream so the
                    // walk stream stays aligned with fixed-point starts
                    let mut rng = stream(cfg.seed, StreamKind::WalkStart, index);
                    Complex64::from_polar(r, rng.gen::<f64>() * 2.0 * std::f64::consts::PI)
                }
            };
            (i, wos_sample(oracle, x0, cfg, index))
        })
        .collect();
    let mut ordered: Vec<(u64, Result<WalkSample>)> = results;
    ordered.sort_by_key(|(i, _)| *i);
    let mut out = Vec::with_capacity(ordered.len());
    for (_, r) in ordered {
        match r {
            Ok(s) => out.push(s),
            Err(Error::WalkBudgetExceeded { cap, .. }) => {
                return Err(Error::WalkBudgetExceeded { cap, completed: out.len() as u64 })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Harmonic measure from `start`: `N` stopped walks, each snapped to the
/// nearest inner-cloud point when one lies within `2 eps + cloud resolution`;
/// unsnappable stops are kept in place and counted in `flagged_count`.
pub fn harmonic_measure(
    oracle: &CompactSetOracle,
    start: WalkStart,
    cfg: &WalkConfig,
) -> Result<(DiscreteMeasure, WalkStats)> {
    let samples = run_walks(oracle, start, cfg, 0)?;
    let snap_radius = oracle.snap_radius(cfg.eps);
    let mut atoms = Vec::with_capacity(samples.len());
    let mut flagged = 0u64;
    let mut log_values = Vec::with_capacity(samples.len());
    let mut total_steps = 0u64;
    for s in &samples {
        total_steps += s.steps;
        let point = if cfg.snap {
            match oracle.snap(s.stop, snap_radius) {
                Some(p) => p,
                None => {
                    flagged += 1;
                    s.stop
                }
            }
        } else {
            s.stop
        };
        log_values.push(point.norm().max(1e-300).ln());
        atoms.push(SpherePoint::from_complex(point));
    }
    let n = samples.len() as f64;
    let mean = log_values.iter().sum::<f64>() / n;
    let var = log_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(2.0);
    let stats = WalkStats {
        samples: samples.len() as u64,
        mean_steps: total_steps as f64 / n,
        flagged_count: flagged,
        stderr: (var / n).sqrt(),
    };
    let weights = vec![1.0 / n; atoms.len()];
    Ok((DiscreteMeasure::new(atoms, weights)?, stats))
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityEstimate {
    pub value: f64,
    /// Standard error of the capacity estimate (delta method).
    pub stderr: f64,
    pub log_mean: f64,
    pub log_stderr: f64,
    pub r_start: f64,
    /// Difference of the estimate against a run from `2 * r_start`; an
    /// empirical probe of the start-circle dependence.
    pub bias_probe: f64,
    pub flagged_count: u64,
    pub mean_steps: f64,
    pub samples: u64,
}

/// Logarithmic capacity `exp(E log |B_tau|)` sampled by walks started
/// uniformly on the circle `|z| = r_start`, stop points snapped onto the
/// inner cloud (points of `K`).
pub fn capacity(oracle: &CompactSetOracle, cfg: &WalkConfig) -> Result<CapacityEstimate> {
    if cfg.r_start < 4.0 * oracle.bounding_radius {
        return Err(Error::InvalidInput(format!(
            "r_start {} below 4 * bounding radius {}",
            cfg.r_start,
            4.0 * oracle.bounding_radius
        )));
    }
    let run = |radius: f64, offset: u64| -> Result<(f64, f64, u64, f64, u64)> {
        let samples = run_walks(oracle, WalkStart::Circle(radius), cfg, offset)?;
        let snap_radius = oracle.snap_radius(cfg.eps);
        let mut logs = Vec::with_capacity(samples.len());
        let mut flagged = 0u64;
        let mut steps = 0u64;
        for s in &samples {
            steps += s.steps;
            let point = if cfg.snap {
                match oracle.snap(s.stop, snap_radius) {
                    Some(p) => p,
                    None => {
                        flagged += 1;
                        s.stop
                    }
                }
            } else {
                s.stop
            };
            logs.push(point.norm().max(1e-300).ln());
        }
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(2.0);
        Ok((mean, (var / n).sqrt(), flagged, steps as f64 / n, samples.len() as u64))
    };
    let (log_mean, log_stderr, flagged, mean_steps, n) = run(cfg.r_start, 0)?;
    // probe the start-circle dependence with an offset stream
    let probe_offset = cfg.samples.max(1) * 1000 + 17;
    let (probe_mean, _, _, _, _) = run(2.0 * cfg.r_start, probe_offset)?;
    let value = log_mean.exp();
    Ok(CapacityEstimate {
        value,
        stderr: value * log_stderr,
        log_mean,
        log_stderr,
        r_start: cfg.r_start,
        bias_probe: probe_mean.exp() - value,
        flagged_count: flagged,
        mean_steps,
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::julia::{filled_julia_outer, julia_inner};
    use crate::rational::RationalMap;

    fn z_squared() -> RationalMap {
        let c = |re: f64| Complex64::new(re, 0.0);
        RationalMap::from_polynomial(&[c(0.0), c(0.0), c(1.0)]).unwrap()
    }

    /// Oracle for the closed unit disk built through the honest pipeline.
    fn unit_disk_oracle(h_denominator: u32, depth: usize) -> CompactSetOracle {
        let map = z_squared();
        let cover = filled_julia_outer(&map, 1.0 / h_denominator as f64, 40).unwrap();
        let cloud = julia_inner(&map, depth, 0, 1 << 20).unwrap();
        CompactSetOracle::from_parts(cover, &cloud, 2.0).unwrap()
    }

    #[test]
    fn oracle_sandwich_on_random_points() {
        let oracle = unit_disk_oracle(128, 12);
        let mut rng = stream(5, StreamKind::Walk, 0);
        for _ in 0..20_000 {
            let x = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let lo = oracle.dist_lower(x);
            let hi = oracle.dist_upper(x);
            assert!(lo <= hi + 1e-12, "sandwich broken at {x}: {lo} > {hi}");
            // true distance to the closed unit disk
            let truth = (x.norm() - 1.0).max(0.0);
            assert!(lo <= truth + 1e-9, "lower bound above truth at {x}");
            assert!(hi + 1e-9 >= truth, "upper bound below truth at {x}");
        }
    }

    #[test]
    fn stopping_band_holds_for_every_sample() {
        let oracle = unit_disk_oracle(128, 12);
        let cfg = WalkConfig::new(1e-3, 2000, 7, 2.0);
        for i in 0..cfg.samples {
            let s = wos_sample(&oracle, Complex64::new(2.0, 0.0), &cfg, i).unwrap();
            assert!(s.dist_at_stop > 0.5 * cfg.eps && s.dist_at_stop < cfg.eps);
        }
    }

    #[test]
    fn walks_are_bit_reproducible() {
        let oracle = unit_disk_oracle(64, 10);
        let cfg = WalkConfig::new(1e-3, 10, 99, 2.0);
        let a = wos_sample(&oracle, Complex64::new(2.0, 0.0), &cfg, 3).unwrap();
        let b = wos_sample(&oracle, Complex64::new(2.0, 0.0), &cfg, 3).unwrap();
        assert_eq!(a.stop, b.stop);
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn angular_law_matches_poisson_kernel() {
        // harmonic measure of the unit disk seen from x0 = 2 pushes forward
        // to the Poisson kernel for the interior point 1/2; closed-form CDF
        // F(t) = t/(2 pi) + atan(r sin t / (1 - r cos t)) / pi with r = 1/2
        let oracle = unit_disk_oracle(256, 13);
        let n = 10_000u64;
        let cfg = WalkConfig::new(1e-3, n, 11, 2.0);
        let (measure, _) = harmonic_measure(&oracle, WalkStart::Point(2.0, 0.0), &cfg).unwrap();
        // expand merged atoms back to per-sample angles by weight
        let mut angles: Vec<f64> = Vec::with_capacity(n as usize);
        for (a, w) in measure.atoms().iter().zip(measure.weights()) {
            let z = a.to_complex().unwrap();
            let t = z.arg().rem_euclid(2.0 * std::f64::consts::PI);
            let count = (w * n as f64).round() as usize;
            angles.extend(std::iter::repeat(t).take(count));
        }
        angles.sort_by(f64::total_cmp);
        let r = 0.5f64;
        let cdf = |t: f64| -> f64 {
            t / (2.0 * std::f64::consts::PI)
                + (r * t.sin() / (1.0 - r * t.cos())).atan() / std::f64::consts::PI
        };
        let m = angles.len() as f64;
        let mut ks = 0.0f64;
        for (i, &t) in angles.iter().enumerate() {
            let f = cdf(t);
            ks = ks.max((f - i as f64 / m).abs());
            ks = ks.max(((i + 1) as f64 / m - f).abs());
        }
        // 1% asymptotic Kolmogorov-Smirnov threshold
        assert!(ks <= 1.63 / m.sqrt(), "KS statistic {ks} over {}", 1.63 / m.sqrt());
    }

    #[test]
    fn circle_start_harmonic_measure_is_uniform() {
        let oracle = unit_disk_oracle(256, 13);
        let n = 4000u64;
        let cfg = WalkConfig::new(1e-3, n, 13, 2.0);
        let (measure, stats) = harmonic_measure(&oracle, WalkStart::Circle(8.0), &cfg).unwrap();
        let mean_re = measure.integrate(|p| p.to_complex().unwrap().re);
        let mean_abs = measure.integrate(|p| p.to_complex().unwrap().norm());
        assert!(mean_re.abs() < 3.0 / (n as f64).sqrt());
        assert!((mean_abs - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert!(stats.flagged_count == 0, "flagged {}", stats.flagged_count);
    }

    #[test]
    fn capacity_of_unit_disk_is_one() {
        let oracle = unit_disk_oracle(256, 13);
        let cfg = WalkConfig::new(1e-3, 4000, 17, 2.0);
        let est = capacity(&oracle, &cfg).unwrap();
        // snapped stop points land exactly on the circle: the estimate is
        // exact up to snap failures
        assert!((est.value - 1.0).abs() <= (3.0 * est.stderr).max(2e-3), "cap {}", est.value);
        assert!(est.bias_probe.abs() < 0.01);
        // conformal radius of the complement is 1, so both sides agree
        assert!((est.value - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_sample_measure_is_single_atom() {
        let oracle = unit_disk_oracle(64, 10);
        let cfg = WalkConfig::new(1e-3, 1, 23, 2.0);
        let (measure, _) = harmonic_measure(&oracle, WalkStart::Point(2.0, 0.0), &cfg).unwrap();
        assert_eq!(measure.len(), 1);
    }
}
