//! Finitely supported probability measures on the sphere, the Lipschitz bump
//! family used as test functions, integration, and subsampling.

use crate::error::{Error, Result};
use crate::rng::{stream, StreamKind};
use crate::sphere::{sph_dist, SpherePoint, TAU_EQ};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A probability measure with finite support. Construction normalizes:
/// zero-weight atoms are pruned, projective duplicates (within `tau_eq`)
/// merge with summed weights, weights renormalize to total 1, and atoms are
/// sorted canonically so equal measures have identical representations.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    atoms: Vec<SpherePoint>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<SpherePoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidInput("atom/weight length mismatch".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("total mass must be positive".into()));
        }
        let mut pairs: Vec<(SpherePoint, f64)> = atoms
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 1e-15 * total)
            .collect();
        pairs = merge_duplicates(pairs, TAU_EQ);
        pairs.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        let atoms = pairs.iter().map(|(a, _)| *a).collect();
        let weights = pairs.iter().map(|(_, w)| w / total).collect();
        Ok(DiscreteMeasure { atoms, weights })
    }

    pub fn dirac(point: SpherePoint) -> Self {
        DiscreteMeasure { atoms: vec![point], weights: vec![1.0] }
    }

    pub fn uniform_on(points: Vec<SpherePoint>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[SpherePoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Exact integral of `f` against the measure.
    pub fn integrate<F: Fn(&SpherePoint) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| w * f(a)).sum()
    }

    /// Image measure under a point map; duplicates merge on construction.
    pub fn push_forward<F: Fn(&SpherePoint) -> Result<SpherePoint>>(&self, f: F) -> Result<Self> {
        let mut atoms = Vec::with_capacity(self.len());
        for a in &self.atoms {
            atoms.push(f(a)?);
        }
        Self::new(atoms, self.weights.clone())
    }
}

/// Merge projective duplicates by spatial hashing in the R^3 embedding.
/// Deterministic for a given input order.
fn merge_duplicates(pairs: Vec<(SpherePoint, f64)>, tau: f64) -> Vec<(SpherePoint, f64)> {
    if pairs.len() <= 1 {
        return pairs;
    }
    let cell = (4.0 * tau).max(1e-14);
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: &[f64; 3]| -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    };
    let embedded: Vec<[f64; 3]> = pairs.iter().map(|(a, _)| a.to_r3()).collect();
    let mut out: Vec<(SpherePoint, f64)> = Vec::with_capacity(pairs.len());
    for (idx, (atom, weight)) in pairs.iter().enumerate() {
        let k = key(&embedded[idx]);
        let mut merged = false;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(k.0 + dx, k.1 + dy, k.2 + dz)) {
                        for &j in bucket {
                            if out[j].0.approx_eq(atom, tau) {
                                out[j].1 += weight;
                                merged = true;
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        if !merged {
            out.push((*atom, *weight));
            grid.entry(k).or_default().push(out.len() - 1);
        }
    }
    out
}

/// Piecewise-linear bump: 1 on the closed ball `B(center, radius)`, 0 outside
/// `B(center, radius + margin)`, linear in the spherical distance between.
/// Lipschitz with constant `1/margin`.
#[derive(Clone, Copy, Debug)]
pub struct TestFunction {
    pub center: SpherePoint,
    pub radius: f64,
    pub margin: f64,
}

impl TestFunction {
    pub fn new(center: SpherePoint, radius: f64, margin: f64) -> Result<Self> {
        if !(radius > 0.0) || !(margin > 0.0) {
            return Err(Error::InvalidInput("bump radius and margin must be positive".into()));
        }
        Ok(TestFunction { center, radius, margin })
    }

    pub fn eval(&self, x: &SpherePoint) -> f64 {
        let d = sph_dist(&self.center, x);
        let overshoot = (d - self.radius).max(0.0);
        (1.0 - overshoot / self.margin).max(0.0)
    }

    pub fn lipschitz(&self) -> f64 {
        1.0 / self.margin
    }

    /// Support radius: the function vanishes beyond this spherical distance.
    pub fn support_radius(&self) -> f64 {
        self.radius + self.margin
    }
}

/// Van der Corput radical inverse in base 2, shifted so index 0 maps to 1/2.
fn centered_vdc(mut i: u64) -> f64 {
    let mut x = 0.5f64;
    let mut f = 0.25f64;
    while i > 0 {
        if i & 1 == 1 {
            x += f;
        }
        if x >= 1.0 {
            x -= 1.0;
        }
        f *= 0.5;
        i >>= 1;
    }
    x
}

/// The m-th ideal center: a dyadic grid point of `[-2,2]^2`, alternating
/// between the `z` chart (even m) and the `1/z` chart (odd m). Dense in the
/// sphere, deterministic in m.
fn ideal_center(m: u64) -> SpherePoint {
    let chart = m % 2;
    let idx = m / 2;
    // de-interleave bits into two axis indices
    let mut a = 0u64;
    let mut b = 0u64;
    for bit in 0..32 {
        a |= ((idx >> (2 * bit)) & 1) << bit;
        b |= ((idx >> (2 * bit + 1)) & 1) << bit;
    }
    let x = 4.0 * centered_vdc(a) - 2.0;
    let y = 4.0 * centered_vdc(b) - 2.0;
    let z = Complex64::new(x, y);
    if chart == 0 {
        SpherePoint::from_complex(z)
    } else {
        SpherePoint::from_homogeneous(Complex64::new(1.0, 0.0), z).unwrap_or_else(SpherePoint::infinity)
    }
}

/// Deterministic enumeration of the bump family: centers on the interleaved
/// dyadic grids, radii and margins in `{2^-j}`, walked diagonally so the
/// same `k` always yields the same list. The first entry has r = margin = 1/2.
pub fn enumerate_family(k: usize) -> Vec<TestFunction> {
    let mut out = Vec::with_capacity(k);
    let mut total = 2u64; // m + jr + je, with jr, je >= 1
    'outer: loop {
        for m in 0..=total.saturating_sub(2) {
            for jr in 1..=(total - m - 1) {
                let je = total - m - jr;
                if je < 1 {
                    continue;
                }
                let radius = 0.5f64.powi(jr as i32);
                let margin = 0.5f64.powi(je as i32);
                out.push(TestFunction { center: ideal_center(m), radius, margin });
                if out.len() == k {
                    break 'outer;
                }
            }
        }
        total += 1;
    }
    out
}

/// Cheap Kantorovich lower bound: each bump scaled by its margin is
/// 1-Lipschitz, so the scaled integral gap never exceeds W1.
pub fn w1_dual_lb(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    family: &[TestFunction],
    scale: f64,
) -> f64 {
    let s = scale.clamp(0.0, 1.0);
    family
        .iter()
        .map(|phi| {
            let gap = (mu.integrate(|x| phi.eval(x)) - nu.integrate(|x| phi.eval(x))).abs();
            s * phi.margin * gap
        })
        .fold(0.0, f64::max)
}

/// Systematic (stratified) resampling to `n_target` equal-weight atoms.
/// Statistical error is of order `pi / sqrt(n_target)`; a uniform measure
/// thinned to its own support size comes back unchanged.
pub fn thin_measure(mu: &DiscreteMeasure, n_target: usize, seed: u64) -> Result<DiscreteMeasure> {
    if n_target == 0 {
        return Err(Error::InvalidInput("n_target must be >= 1".into()));
    }
    let mut rng = stream(seed, StreamKind::Thin, 0);
    let offset: f64 = rng.gen::<f64>() / n_target as f64;
    let mut atoms = Vec::with_capacity(n_target);
    let mut cumulative = 0.0f64;
    let mut next_idx = 0usize;
    for (atom, w) in mu.atoms().iter().zip(mu.weights()) {
        cumulative += w;
        while next_idx < n_target && offset + next_idx as f64 / n_target as f64 <= cumulative {
            atoms.push(*atom);
            next_idx += 1;
        }
    }
    while atoms.len() < n_target {
        atoms.push(*mu.atoms().last().unwrap());
    }
    DiscreteMeasure::uniform_on(atoms)
}

/// JSON wire format `{"atoms": [[re,im] | "inf", ...], "weights": [...]}`.
#[derive(Serialize, Deserialize)]
pub struct MeasureFile {
    pub atoms: Vec<AtomRepr>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtomRepr {
    Finite([f64; 2]),
    Infinity(String),
}

impl MeasureFile {
    pub fn from_measure(mu: &DiscreteMeasure) -> Self {
        let atoms = mu
            .atoms()
            .iter()
            .map(|a| match a.to_complex() {
                Some(z) => AtomRepr::Finite([z.re, z.im]),
                None => AtomRepr::Infinity("inf".to_string()),
            })
            .collect();
        MeasureFile { atoms, weights: mu.weights().to_vec() }
    }

    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            match a {
                AtomRepr::Finite([re, im]) => atoms.push(SpherePoint::from_re_im(*re, *im)),
                AtomRepr::Infinity(s) if s == "inf" => atoms.push(SpherePoint::infinity()),
                AtomRepr::Infinity(s) => {
                    return Err(Error::InvalidInput(format!("unknown atom marker {s:?}")))
                }
            }
        }
        DiscreteMeasure::new(atoms, self.weights.clone())
    }
}

/// CSV alternative: `re,im,weight` columns; infinite atoms use literal `inf`.
pub fn measure_to_csv(mu: &DiscreteMeasure) -> String {
    let mut out = String::from("re,im,weight\n");
    for (a, w) in mu.atoms().iter().zip(mu.weights()) {
        match a.to_complex() {
            Some(z) => out.push_str(&format!("{},{},{}\n", z.re, z.im, w)),
            None => out.push_str(&format!("inf,inf,{w}\n")),
        }
    }
    out
}

pub fn measure_from_csv(text: &str) -> Result<DiscreteMeasure> {
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("re")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::InvalidInput(format!("csv line {}: need re,im,weight", lineno + 1)));
        }
        let weight: f64 = fields[2]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("csv line {}: bad weight", lineno + 1)))?;
        if fields[0] == "inf" {
            atoms.push(SpherePoint::infinity());
        } else {
            let re: f64 = fields[0]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("csv line {}: bad re", lineno + 1)))?;
            let im: f64 = fields[1]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("csv line {}: bad im", lineno + 1)))?;
            atoms.push(SpherePoint::from_re_im(re, im));
        }
        weights.push(weight);
    }
    DiscreteMeasure::new(atoms, weights)
}
