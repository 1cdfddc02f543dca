//! Constructive inner/outer approximations of (filled) Julia sets: certified
//! escape covers for polynomials, backward-orbit point clouds, Hausdorff
//! distance, and the escape-radius computation.

use crate::error::{Error, Result};
use crate::rational::{PeriodicPoint, RationalMap};
use crate::rng::{stream, StreamKind};
use crate::sphere::{sph_dist, SpherePoint, TAU_EQ};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::collections::HashMap;

/// Escape radius: `M = max(1, (2 + sum |a_i|) / |a_d|)`, verified on sample
/// circle points. `|z| >= M` implies `|P(z)| >= 2 |z|`, hence escape.
pub fn escape_radius(map: &RationalMap) -> Result<f64> {
    map.require_dynamics()?;
    let coeffs = map
        .poly_coeffs()
        .ok_or_else(|| Error::InvalidInput("escape radius needs a polynomial map".into()))?;
    let d = coeffs.len() - 1;
    let tail: f64 = coeffs[..d].iter().map(|c| c.norm()).sum();
    let lead = coeffs[d].norm();
    let mut m = (2.0 + tail) / lead;
    if m < 1.0 {
        m = 1.0;
    }
    // belt check on 360 sample points; the bound is analytic, so a failure
    // only signals a numerically hostile coefficient set
    for _ in 0..8 {
        let ok = (0..360).all(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 360.0;
            let z = Complex64::from_polar(m, theta);
            let val = eval_poly(&coeffs, z);
            val.norm() >= 2.0 * z.norm() * (1.0 - 1e-12)
        });
        if ok {
            return Ok(m);
        }
        m *= 2.0;
    }
    Err(Error::RootConvergence { residual: m, tolerance: 0.0 })
}

fn eval_poly(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Taylor coefficients of `p(c + t)` in `t` (shift by Horner's scheme).
fn taylor_shift(coeffs: &[Complex64], center: Complex64) -> Vec<Complex64> {
    let mut shifted = coeffs.to_vec();
    let n = shifted.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let add = shifted[j + 1] * center;
            shifted[j] += add;
        }
    }
    shifted
}

/// Grid-aligned outer cover of a filled Julia set. Cell `(i, j)` covers
/// `[i*h, (i+1)*h) x [j*h, (j+1)*h)`; `occupied` holds every cell that could
/// not be certified to escape, and their union contains `K(P)`.
#[derive(Clone, Debug)]
pub struct CellCover {
    pub h: f64,
    pub escape_bound: f64,
    pub iteration_budget: usize,
    /// Half-width of the grid in cells: indices run in `[-half, half)`.
    pub half: i32,
    pub occupied: Vec<(i32, i32)>,
}

impl CellCover {
    pub fn cell_center(&self, cell: (i32, i32)) -> Complex64 {
        Complex64::new((cell.0 as f64 + 0.5) * self.h, (cell.1 as f64 + 0.5) * self.h)
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.h * std::f64::consts::SQRT_2
    }

    /// Centers of occupied cells as sphere points.
    pub fn points(&self) -> Vec<SpherePoint> {
        self.occupied
            .iter()
            .map(|&c| {
                let z = self.cell_center(c);
                SpherePoint::from_complex(z)
            })
            .collect()
    }

    /// Euclidean distance from `x` to the union of occupied closed cells
    /// (zero inside the cover).
    pub fn distance_to_cover(&self, x: Complex64, index: &CoverIndex) -> f64 {
        index.distance(self, x)
    }

    /// Binary PGM image, one pixel per cell: 0 escaped, 255 occupied.
    pub fn to_pgm(&self) -> Vec<u8> {
        let w = (2 * self.half) as usize;
        let mut data = format!("P5\n{} {}\n255\n", w, w).into_bytes();
        let mut img = vec![0u8; w * w];
        for &(i, j) in &self.occupied {
            let col = (i + self.half) as usize;
            let row = (self.half - 1 - j) as usize;
            img[row * w + col] = 255;
        }
        data.extend_from_slice(&img);
        data
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "h": self.h,
            "escape_bound": self.escape_bound,
            "iteration_budget": self.iteration_budget,
            "half": self.half,
            "cells": self.occupied,
        })
    }
}

/// Uniform-grid index over occupied cells for nearest-cell queries.
pub struct CoverIndex {
    set: Vec<u64>,
    half: i32,
    /// Bounding box of occupied cells, in cell indices.
    bbox: (i32, i32, i32, i32),
}

impl CoverIndex {
    pub fn build(cover: &CellCover) -> Self {
        let side = (2 * cover.half) as usize;
        let mut set = vec![0u64; (side * side + 63) / 64];
        let mut bbox = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
        for &(i, j) in &cover.occupied {
            let idx = ((j + cover.half) as usize) * side + (i + cover.half) as usize;
            set[idx / 64] |= 1 << (idx % 64);
            bbox.0 = bbox.0.min(i);
            bbox.1 = bbox.1.max(i);
            bbox.2 = bbox.2.min(j);
            bbox.3 = bbox.3.max(j);
        }
        CoverIndex { set, half: cover.half, bbox }
    }

    #[inline]
    pub fn is_occupied(&self, half: i32, i: i32, j: i32) -> bool {
        if i < -half || i >= half || j < -half || j >= half {
            return false;
        }
        let side = (2 * half) as usize;
        let idx = ((j + half) as usize) * side + (i + half) as usize;
        self.set[idx / 64] & (1 << (idx % 64)) != 0
    }

    /// Euclidean distance from `x` to the nearest occupied closed cell.
    pub fn distance(&self, cover: &CellCover, x: Complex64) -> f64 {
        let h = cover.h;
        let ci = (x.re / h).floor() as i64;
        let cj = (x.im / h).floor() as i64;
        let dist_to_cell = |i: i32, j: i32| -> f64 {
            let x0 = i as f64 * h;
            let y0 = j as f64 * h;
            let dx = (x0 - x.re).max(x.re - (x0 + h)).max(0.0);
            let dy = (y0 - x.im).max(x.im - (y0 + h)).max(0.0);
            (dx * dx + dy * dy).sqrt()
        };
        // start the ring search at the distance to the occupied bounding box
        let clamp_i = (ci.clamp(self.bbox.0 as i64, self.bbox.1 as i64) - ci).unsigned_abs();
        let clamp_j = (cj.clamp(self.bbox.2 as i64, self.bbox.3 as i64) - cj).unsigned_abs();
        let mut ring = clamp_i.max(clamp_j) as i32;
        let mut best = f64::INFINITY;
        loop {
            let lo_i = (ci - ring as i64).max(-(self.half as i64)) as i32;
            let hi_i = (ci + ring as i64).min(self.half as i64 - 1) as i32;
            let lo_j = (cj - ring as i64).max(-(self.half as i64)) as i32;
            let hi_j = (cj + ring as i64).min(self.half as i64 - 1) as i32;
            let scan = |i: i32, j: i32, best: &mut f64| {
                if self.is_occupied(self.half, i, j) {
                    let d = dist_to_cell(i, j);
                    if d < *best {
                        *best = d;
                    }
                }
            };
            if ring == 0 {
                scan(ci as i32, cj as i32, &mut best);
            } else {
                for i in lo_i..=hi_i {
                    if cj - (ring as i64) >= -(self.half as i64) {
                        scan(i, (cj - ring as i64) as i32, &mut best);
                    }
                    if cj + (ring as i64) < self.half as i64 {
                        scan(i, (cj + ring as i64) as i32, &mut best);
                    }
                }
                for j in (lo_j + 1)..hi_j {
                    if ci - (ring as i64) >= -(self.half as i64) {
                        scan((ci - ring as i64) as i32, j, &mut best);
                    }
                    if ci + (ring as i64) < self.half as i64 {
                        scan((ci + ring as i64) as i32, j, &mut best);
                    }
                }
            }
            // cells beyond this ring are at least (ring-1)*h away
            if best.is_finite() && best <= (ring as f64 - 1.0).max(0.0) * h {
                return best;
            }
            ring += 1;
            if ci.abs().max(cj.abs()) + (ring as i64) > 4 * self.half as i64 + 4 {
                return best; // nothing else can be closer
            }
        }
    }
}

/// Certified outer cover of the filled Julia set of a polynomial.
///
/// Forward pass: each cell's bounding disk is pushed through `P` with exact
/// Taylor-shift radius bounds for up to `n_budget` steps; a cell escapes when
/// the certified minimum modulus clears the growth radius, where
/// `|z| >= s  =>  |P(z)| >= theta |z|` with `theta > 1`.
///
/// Backward pass: a still-occupied cell also escapes when its one-step image
/// disk lands entirely on already-escaped cells (or beyond the growth
/// radius); repeated for at most `n_budget` rounds. Both certificates imply
/// every point of the cell escapes, so the remaining cells cover `K(P)`.
pub fn filled_julia_outer(map: &RationalMap, h: f64, n_budget: usize) -> Result<CellCover> {
    map.require_dynamics()?;
    let coeffs = map
        .poly_coeffs()
        .ok_or_else(|| Error::InvalidInput("outer cover needs a polynomial map".into()))?;
    if !(h > 0.0) {
        return Err(Error::InvalidInput("cell size must be positive".into()));
    }
    let m_bound = escape_radius(map)?;
    let d = coeffs.len() - 1;
    let tail: f64 = coeffs[..d].iter().map(|c| c.norm()).sum();
    let lead = coeffs[d].norm();
    let theta = 1.0625;
    let grow_radius = ((theta + tail) / lead).max(1.0 + 1e-9);

    let half = ((m_bound / h).ceil() as i32) + 1;
    let side = (2 * half) as usize;
    if side * side > 1 << 30 {
        return Err(Error::BudgetExceeded {
            what: "outer cover cells",
            needed: (side * side) as u64,
            budget: 1 << 30,
            best_gap: None,
        });
    }

    let r0 = h * std::f64::consts::SQRT_2 / 2.0;
    // forward certification per cell, parallel over rows
    let escaped_rows: Vec<Vec<bool>> = (-half..half)
        .into_par_iter()
        .map(|j| {
            let mut row = vec![false; side];
            for i in -half..half {
                let center = Complex64::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                // only grid cells meeting the closed disk B(0, M) matter; the
                // rest are vacuously escaped (they hold no K points)
                let cell_min_mod = {
                    let dx = (i as f64 * h).max(-(i as f64 + 1.0) * h).max(0.0);
                    let dy = (j as f64 * h).max(-(j as f64 + 1.0) * h).max(0.0);
                    (dx * dx + dy * dy).sqrt()
                };
                if cell_min_mod > m_bound {
                    row[(i + half) as usize] = true;
                    continue;
                }
                if n_budget == 0 {
                    continue;
                }
                let mut c = center;
                let mut r = r0;
                for _ in 1..=n_budget {
                    let shifted = taylor_shift(&coeffs, c);
                    let mut rho = 0.0;
                    let mut rpow = 1.0;
                    for t in shifted.iter().skip(1) {
                        rpow *= r;
                        rho += t.norm() * rpow;
                    }
                    c = shifted[0];
                    r = rho;
                    if !c.is_finite() || !r.is_finite() || r > 1e12 {
                        break;
                    }
                    if c.norm() - r >= grow_radius {
                        row[(i + half) as usize] = true;
                        break;
                    }
                }
            }
            row
        })
        .collect();

    let mut escaped = vec![0u64; (side * side + 63) / 64];
    let set = |bits: &mut Vec<u64>, i: i32, j: i32| {
        let idx = ((j + half) as usize) * side + (i + half) as usize;
        bits[idx / 64] |= 1 << (idx % 64);
    };
    let get = |bits: &[u64], i: i32, j: i32| -> bool {
        if i < -half || i >= half || j < -half || j >= half {
            return true; // outside the grid lies beyond B(0, M)
        }
        let idx = ((j + half) as usize) * side + (i + half) as usize;
        bits[idx / 64] & (1 << (idx % 64)) != 0
    };
    for (jj, row) in escaped_rows.iter().enumerate() {
        for (ii, &esc) in row.iter().enumerate() {
            if esc {
                set(&mut escaped, ii as i32 - half, jj as i32 - half);
            }
        }
    }

    // backward propagation rounds
    for _round in 0..n_budget {
        let candidates: Vec<(i32, i32)> = (-half..half)
            .into_par_iter()
            .flat_map_iter(|j| {
                let escaped = &escaped;
                (-half..half)
                    .filter(move |&i| !get(escaped, i, j))
                    .map(move |i| (i, j))
            })
            .collect();
        let newly: Vec<(i32, i32)> = candidates
            .par_iter()
            .filter(|&&(i, j)| {
                let center = Complex64::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                let shifted = taylor_shift(&coeffs, center);
                let mut rho = 0.0;
                let mut rpow = 1.0;
                for t in shifted.iter().skip(1) {
                    rpow *= r0;
                    rho += t.norm() * rpow;
                }
                let c = shifted[0];
                if !c.is_finite() || !rho.is_finite() {
                    return false;
                }
                if c.norm() - rho >= grow_radius {
                    return true;
                }
                // every cell touched by the image disk must be escaped
                let lo_i = ((c.re - rho) / h).floor() as i64;
                let hi_i = ((c.re + rho) / h).floor() as i64;
                let lo_j = ((c.im - rho) / h).floor() as i64;
                let hi_j = ((c.im + rho) / h).floor() as i64;
                if (hi_i - lo_i) > 1024 || (hi_j - lo_j) > 1024 {
                    return false;
                }
                for jj in lo_j..=hi_j {
                    for ii in lo_i..=hi_i {
                        let (ii32, jj32) = (ii as i32, jj as i32);
                        let inside_grid =
                            ii >= -(half as i64) && ii < half as i64 && jj >= -(half as i64) && jj < half as i64;
                        if inside_grid {
                            if !get(&escaped, ii32, jj32) {
                                return false;
                            }
                        } else {
                            // outside the grid is escaped only beyond the
                            // growth radius; cells beyond B(0,M) qualify
                            let x0 = ii as f64 * h;
                            let y0 = jj as f64 * h;
                            let dx = x0.max(-(x0 + h)).max(0.0);
                            let dy = y0.max(-(y0 + h)).max(0.0);
                            if (dx * dx + dy * dy).sqrt() < grow_radius {
                                return false;
                            }
                        }
                    }
                }
                true
            })
            .copied()
            .collect();
        if newly.is_empty() {
            break;
        }
        for (i, j) in newly {
            set(&mut escaped, i, j);
        }
    }

    let mut occupied = Vec::new();
    for j in -half..half {
        for i in -half..half {
            if !get(&escaped, i, j) {
                occupied.push((i, j));
            }
        }
    }
    Ok(CellCover { h, escape_bound: m_bound, iteration_budget: n_budget, half, occupied })
}

/// Backward-orbit point cloud seeded at a repelling periodic point.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub points: Vec<SpherePoint>,
    pub depth: usize,
    pub seed_point: PeriodicPoint,
}

impl PointCloud {
    /// CSV rows `re,im` of the finite points.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im\n");
        for p in &self.points {
            match p.to_complex() {
                Some(z) => out.push_str(&format!("{},{}\n", z.re, z.im)),
                None => out.push_str("inf,inf\n"),
            }
        }
        out
    }
}

/// First strictly repelling periodic point in period order 1, 2, 3.
pub fn find_repelling_point(map: &RationalMap) -> Result<PeriodicPoint> {
    map.require_dynamics()?;
    for p in 1..=3 {
        let pts = map.periodic_points(p, 4096)?;
        for pt in pts {
            if pt.lower_period {
                continue;
            }
            if pt.multiplier.norm() > 1.0 + 1e-6 {
                return Ok(pt);
            }
        }
    }
    Err(Error::NoRepellingPointFound { max_period: 3 })
}

/// Cumulative backward orbit of depth `k` from a repelling periodic point,
/// deduplicated at the projective tolerance. Levels that would exceed
/// `point_budget` are subsampled deterministically under `seed`.
pub fn julia_inner(map: &RationalMap, k: usize, seed: u64, point_budget: usize) -> Result<PointCloud> {
    let seed_point = find_repelling_point(map)?;
    julia_inner_from(map, seed_point, k, seed, point_budget)
}

pub fn julia_inner_from(
    map: &RationalMap,
    seed_point: PeriodicPoint,
    k: usize,
    seed: u64,
    point_budget: usize,
) -> Result<PointCloud> {
    map.require_dynamics()?;
    let mut cloud: Vec<SpherePoint> = vec![seed_point.point];
    let mut frontier: Vec<SpherePoint> = vec![seed_point.point];
    for level in 0..k {
        let results: Vec<Result<Vec<SpherePoint>>> = frontier
            .par_iter()
            .map(|p| Ok(map.preimages(p)?.into_iter().map(|(q, _)| q).collect()))
            .collect();
        let mut next: Vec<SpherePoint> = Vec::with_capacity(frontier.len() * map.degree());
        for r in results {
            next.extend(r?);
        }
        next = dedup_sphere(next, TAU_EQ);
        if next.len() > point_budget {
            let mut rng = stream(seed, StreamKind::InnerSubsample, level as u64);
            let mut idx: Vec<usize> = (0..next.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(point_budget);
            idx.sort_unstable();
            next = idx.into_iter().map(|i| next[i]).collect();
        }
        cloud.extend(next.iter().copied());
        frontier = next;
    }
    let mut points = dedup_sphere(cloud, TAU_EQ);
    points.sort_by(|a, b| a.canonical_cmp(b));
    Ok(PointCloud { points, depth: k, seed_point })
}

/// Deduplicate sphere points at tolerance `tau` via a hash grid in R^3.
fn dedup_sphere(points: Vec<SpherePoint>, tau: f64) -> Vec<SpherePoint> {
    let cell = (4.0 * tau).max(1e-14);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut out: Vec<SpherePoint> = Vec::with_capacity(points.len());
    for p in points {
        let e = p.to_r3();
        let k = (
            (e[0] / cell).floor() as i64,
            (e[1] / cell).floor() as i64,
            (e[2] / cell).floor() as i64,
        );
        let mut dup = false;
        'search: for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    if let Some(bucket) = grid.get(&(k.0 + dx, k.1 + dy, k.2 + dz)) {
                        for &i in bucket {
                            if out[i].approx_eq(&p, tau) {
                                dup = true;
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        if !dup {
            out.push(p);
            grid.entry(k).or_default().push(out.len() - 1);
        }
    }
    out
}

/// Symmetric Hausdorff distance between two point sets in the spherical
/// metric, by spatial hashing on the R^3 embedding.
pub fn hausdorff(a: &[SpherePoint], b: &[SpherePoint]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

fn directed_hausdorff(a: &[SpherePoint], b: &[SpherePoint]) -> Result<f64> {
    let nn = NearestNeighbors::build(b);
    let worst = a
        .par_iter()
        .map(|p| nn.nearest_dist(p))
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Chordal-metric nearest neighbor structure over sphere points.
pub struct NearestNeighbors {
    cell: f64,
    grid: HashMap<(i64, i64, i64), Vec<u32>>,
    embedded: Vec<[f64; 3]>,
    points: Vec<SpherePoint>,
}

impl NearestNeighbors {
    pub fn build(points: &[SpherePoint]) -> Self {
        let n = points.len().max(1);
        // aim for O(1) points per cell on a 2-sphere of area 4 pi
        let cell = (4.0 * std::f64::consts::PI / n as f64).sqrt().clamp(1e-7, 2.0);
        let embedded: Vec<[f64; 3]> = points.iter().map(|p| p.to_r3()).collect();
        let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, e) in embedded.iter().enumerate() {
            grid.entry(Self::key(e, cell)).or_default().push(i as u32);
        }
        NearestNeighbors { cell, grid, embedded, points: points.to_vec() }
    }

    fn key(e: &[f64; 3], cell: f64) -> (i64, i64, i64) {
        (
            (e[0] / cell).floor() as i64,
            (e[1] / cell).floor() as i64,
            (e[2] / cell).floor() as i64,
        )
    }

    /// Index and spherical distance of the nearest stored point.
    pub fn nearest(&self, p: &SpherePoint) -> (usize, f64) {
        let e = p.to_r3();
        let (kx, ky, kz) = Self::key(&e, self.cell);
        let mut best = f64::INFINITY; // chordal
        let mut best_idx = 0usize;
        let mut ring = 0i64;
        loop {
            let mut _any = false;
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(bucket) = self.grid.get(&(kx + dx, ky + dy, kz + dz)) {
                            _any = true;
                            for &i in bucket {
                                let q = &self.embedded[i as usize];
                                let d2 = (q[0] - e[0]).powi(2)
                                    + (q[1] - e[1]).powi(2)
                                    + (q[2] - e[2]).powi(2);
                                let d = d2.sqrt();
                                if d < best {
                                    best = d;
                                    best_idx = i as usize;
                                }
                            }
                        }
                    }
                }
            }
            // candidates beyond this ring are at chordal distance at least
            // (ring)*cell from the query cell
            if best.is_finite() && best <= (ring as f64) * self.cell {
                break;
            }
            ring += 1;
            if (ring as f64 - 2.0) * self.cell > 2.0 {
                break; // the whole sphere has been covered
            }
        }
        let arc = 2.0 * (best.min(2.0) / 2.0).asin();
        let exact = sph_dist(p, &self.points[best_idx]);
        // chordal and arc orderings agree; report the arc distance
        debug_assert!((arc - exact).abs() < 1e-9);
        (best_idx, exact)
    }

    pub fn nearest_dist(&self, p: &SpherePoint) -> f64 {
        self.nearest(p).1
    }
}
