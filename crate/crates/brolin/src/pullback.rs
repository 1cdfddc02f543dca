//! Iterated-preimage pullback measures, the empirical precision schedule,
//! convergence-rate studies, and the invariance/balancedness defect
//! diagnostics.

use crate::error::{Error, Result};
use crate::measure::{enumerate_family, DiscreteMeasure, TestFunction};
use crate::rational::{RationalMap, TAU_ROOT};
use crate::rng::{stream, StreamKind};
use crate::sphere::{sph_dist, SpherePoint, TAU_EQ};
use crate::transport;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct PullbackConfig {
    /// Cap on d^m before merging.
    pub atom_budget: u64,
    /// Cap on n*m for internal W1 solves; thinning kicks in above it.
    pub pair_budget: u64,
    /// Depth cap for the empirical schedule.
    pub max_depth: usize,
}

impl Default for PullbackConfig {
    fn default() -> Self {
        PullbackConfig { atom_budget: 1 << 20, pair_budget: transport::DEFAULT_PAIR_BUDGET, max_depth: 24 }
    }
}

/// The measure `(1/d^m) * sum of Dirac masses on R^-m(z)` plus bookkeeping.
#[derive(Clone, Debug)]
pub struct PullbackResult {
    pub measure: DiscreteMeasure,
    pub base_point: SpherePoint,
    pub depth: usize,
    /// Atom count before merging, always d^m.
    pub atom_count: u64,
    /// Largest spherical residual of `R(child) = parent` over the tree.
    pub max_residual: f64,
    /// Worst observed `sph_dist(R^m(atom), z) / (m * tau_root)`; a condition
    /// factor for the accumulated-tolerance invariant.
    pub condition_factor: f64,
}

/// Exponential-rate fit `W ~ A * alpha^-m` from a convergence study.
#[derive(Clone, Debug)]
pub struct RateFit {
    pub depths: Vec<usize>,
    pub distances: Vec<f64>,
    /// Least-squares slope of log W against m (negative when converging).
    pub slope: f64,
    pub intercept: f64,
    /// exp(-slope): the recovered rate base.
    pub alpha: f64,
    /// Constant A = exp(intercept).
    pub constant: f64,
    /// False when fewer than two usable points were available.
    pub valid: bool,
}

/// Certificate returned by the empirical precision schedule.
#[derive(Clone, Debug)]
pub struct BlCertificate {
    pub depth: usize,
    /// W1 gap between consecutive depths at the accepted depth.
    pub consecutive_gap: f64,
    /// W1 gap to an independently based pullback at the same depth.
    pub cross_gap: f64,
    /// True when either gap was estimated on thinned measures.
    pub thinned: bool,
}

/// True when `z` is safe as a pullback base: its backward orbit to depth 2
/// has more than two distinct points. Tolerance collisions resolve toward
/// "not safe".
pub fn exceptional_check(map: &RationalMap, z: &SpherePoint) -> Result<bool> {
    map.require_dynamics()?;
    let mut points: Vec<SpherePoint> = vec![*z];
    let mut frontier: Vec<SpherePoint> = vec![*z];
    for _ in 0..2 {
        let mut next = Vec::new();
        for p in &frontier {
            for (q, _) in map.preimages(p)? {
                next.push(q);
            }
        }
        points.extend(next.iter().copied());
        frontier = next;
    }
    let mut distinct: Vec<SpherePoint> = Vec::new();
    'outer: for p in &points {
        for q in &distinct {
            if p.approx_eq(q, 10.0 * TAU_EQ) {
                continue 'outer;
            }
        }
        distinct.push(*p);
    }
    Ok(distinct.len() > 2)
}

struct TreeLevel {
    /// (point, multiplicity) pairs, deterministic order.
    nodes: Vec<(SpherePoint, u64)>,
    max_residual: f64,
}

fn pull_level(map: &RationalMap, level: &TreeLevel) -> Result<TreeLevel> {
    let results: Vec<Result<(Vec<(SpherePoint, u64)>, f64)>> = level
        .nodes
        .par_iter()
        .map(|(point, mult)| {
            let pre = map.preimages(point)?;
            let mut worst = 0.0f64;
            let mut children = Vec::with_capacity(pre.len());
            for (child, child_mult) in pre {
                worst = worst.max(sph_dist(&map.eval(&child)?, point));
                children.push((child, mult * child_mult as u64));
            }
            Ok((children, worst))
        })
        .collect();
    let mut nodes = Vec::with_capacity(level.nodes.len() * map.degree());
    let mut max_residual = level.max_residual;
    for r in results {
        let (children, worst) = r?;
        max_residual = max_residual.max(worst);
        nodes.extend(children);
    }
    Ok(TreeLevel { nodes, max_residual })
}

/// Breadth-first preimage tree of depth `m` from base `z`, returned as a
/// discrete measure with equal weights `d^-m` (merged atoms sum).
pub fn pullback_measure(
    map: &RationalMap,
    z: &SpherePoint,
    m: usize,
    cfg: &PullbackConfig,
) -> Result<PullbackResult> {
    map.require_dynamics()?;
    if !exceptional_check(map, z)? {
        return Err(Error::ExceptionalPoint);
    }
    let d = map.degree() as u64;
    let atom_count = d
        .checked_pow(m as u32)
        .filter(|&n| n <= cfg.atom_budget)
        .ok_or(Error::BudgetExceeded {
            what: "pullback atoms",
            needed: d.checked_pow(m as u32).unwrap_or(u64::MAX),
            budget: cfg.atom_budget,
            best_gap: None,
        })?;

    let mut level = TreeLevel { nodes: vec![(*z, 1)], max_residual: 0.0 };
    for _ in 0..m {
        level = pull_level(map, &level)?;
    }
    let total: u64 = level.nodes.iter().map(|(_, c)| c).sum();
    debug_assert_eq!(total, atom_count);

    let weights: Vec<f64> = level
        .nodes
        .iter()
        .map(|(_, c)| *c as f64 / atom_count as f64)
        .collect();
    let atoms: Vec<SpherePoint> = level.nodes.iter().map(|(p, _)| *p).collect();
    let measure = DiscreteMeasure::new(atoms, weights)?;

    // certify the accumulated residual against the base point
    let mut condition_factor = 0.0f64;
    if m > 0 {
        let worst = measure
            .atoms()
            .par_iter()
            .map(|a| map.iterate(a, m).map(|img| sph_dist(&img, z)))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
        condition_factor = worst / (m as f64 * TAU_ROOT);
    }

    Ok(PullbackResult {
        measure,
        base_point: *z,
        depth: m,
        atom_count,
        max_residual: level.max_residual,
        condition_factor,
    })
}

/// W1 between two measures, thinning both to fit the pair budget when
/// needed. Returns the distance and whether thinning happened.
fn w1_with_thinning(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    pair_budget: u64,
    seed: u64,
) -> Result<(f64, bool)> {
    let pairs = a.len() as u64 * b.len() as u64;
    if pairs <= pair_budget {
        let (d, _) = transport::w1(a, b, pair_budget)?;
        return Ok((d, false));
    }
    let side = (pair_budget as f64).sqrt().floor() as usize;
    let side = side.max(1);
    let ta = if a.len() > side { crate::measure::thin_measure(a, side, seed)? } else { a.clone() };
    let tb = if b.len() > side {
        crate::measure::thin_measure(b, side, seed ^ 0x9e37_79b9)?
    } else {
        b.clone()
    };
    let (d, _) = transport::w1(&ta, &tb, pair_budget)?;
    Ok((d, true))
}

/// Sample a non-exceptional base point from the seeded stream.
fn sample_base_point(map: &RationalMap, seed: u64, salt: u64) -> Result<SpherePoint> {
    let mut rng = stream(seed, StreamKind::BasePoint, salt);
    for _ in 0..64 {
        let z = SpherePoint::from_re_im(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        if exceptional_check(map, &z)? {
            return Ok(z);
        }
    }
    Err(Error::NoValidBall)
}

/// Empirical realization of the exponential-time schedule: the theoretical
/// depth constant is not computable from the map alone, so the depth is
/// grown until a two-witness Cauchy certificate holds: the consecutive-depth
/// gap and the gap to an independently based pullback both fall below
/// `2^-n / 4`. Heuristic, not a proof; the certificate is returned.
pub fn bl_measure(
    map: &RationalMap,
    n: u32,
    seed: u64,
    cfg: &PullbackConfig,
) -> Result<(DiscreteMeasure, BlCertificate)> {
    map.require_dynamics()?;
    if n == 0 {
        return Err(Error::InvalidInput("precision must be >= 1".into()));
    }
    let threshold = 0.25 * 0.5f64.powi(n as i32);
    let z = sample_base_point(map, seed, 0)?;
    let mut z_alt = sample_base_point(map, seed, 1)?;
    if z_alt.approx_eq(&z, 1e-6) {
        z_alt = sample_base_point(map, seed, 2)?;
    }

    let d = map.degree() as u64;
    let mut best_gap = f64::INFINITY;
    let mut current = pullback_measure(map, &z, 0, cfg)?;
    for m in 0..=cfg.max_depth {
        if d.checked_pow(m as u32 + 1).map_or(true, |a| a > cfg.atom_budget) {
            return Err(Error::BudgetExceeded {
                what: "pullback atoms in precision schedule",
                needed: d.checked_pow(m as u32 + 1).unwrap_or(u64::MAX),
                budget: cfg.atom_budget,
                best_gap: Some(best_gap),
            });
        }
        let next = pullback_measure(map, &z, m + 1, cfg)?;
        let (gap1, thin1) = w1_with_thinning(&current.measure, &next.measure, cfg.pair_budget, seed)?;
        best_gap = best_gap.min(gap1);
        if gap1 < threshold {
            let alt = pullback_measure(map, &z_alt, m, cfg)?;
            let (gap2, thin2) =
                w1_with_thinning(&current.measure, &alt.measure, cfg.pair_budget, seed ^ 1)?;
            if gap2 < threshold {
                return Ok((
                    current.measure,
                    BlCertificate { depth: m, consecutive_gap: gap1, cross_gap: gap2, thinned: thin1 || thin2 },
                ));
            }
            best_gap = best_gap.min(gap2);
        }
        current = next;
    }
    Err(Error::BudgetExceeded {
        what: "precision schedule depth",
        needed: cfg.max_depth as u64 + 1,
        budget: cfg.max_depth as u64,
        best_gap: Some(best_gap),
    })
}

/// Distances `W[m] = W1(pullback(m), pullback(m_max))` and the least-squares
/// exponential-rate fit over `m <= m_max - 2` (entries with W > 0).
pub fn convergence_study(
    map: &RationalMap,
    z: &SpherePoint,
    m_min: usize,
    m_max: usize,
    seed: u64,
    cfg: &PullbackConfig,
) -> Result<RateFit> {
    if m_min >= m_max {
        return Err(Error::DegenerateFit(format!("need m_min < m_max, got {m_min}..{m_max}")));
    }
    let reference = pullback_measure(map, z, m_max, cfg)?;
    let mut depths = Vec::new();
    let mut distances = Vec::new();
    for m in m_min..m_max {
        let lm = pullback_measure(map, z, m, cfg)?;
        let (d, _) = w1_with_thinning(&lm.measure, &reference.measure, cfg.pair_budget, seed ^ m as u64)?;
        depths.push(m);
        distances.push(d);
    }
    let pts: Vec<(f64, f64)> = depths
        .iter()
        .zip(&distances)
        .filter(|(&m, &w)| w > 0.0 && m + 2 <= m_max)
        .map(|(&m, &w)| (m as f64, w.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateFit("fewer than two usable points".into()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Ok(RateFit {
        depths,
        distances,
        slope,
        intercept,
        alpha: (-slope).exp(),
        constant: intercept.exp(),
        valid: true,
    })
}

/// Largest violation of `integral(phi o R) = integral(phi)` over the first
/// `k` enumerated test functions; zero exactly when the measure is invariant
/// as seen by that family.
pub fn invariance_defect(map: &RationalMap, mu: &DiscreteMeasure, k: usize) -> Result<f64> {
    let family = enumerate_family(k);
    let pushed = mu.push_forward(|p| map.eval(p))?;
    let mut worst = 0.0f64;
    for phi in &family {
        let lhs = pushed.integrate(|x| phi.eval(x));
        let rhs = mu.integrate(|x| phi.eval(x));
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Balancedness defect through inverse branches. Samples non-critical
/// centers z_i (half of them jittered off the atoms of the measure, which is
/// where a defect can show), builds the branch domain `B(R(z_i), q)` with
/// `q < dist(R(z_i), critical values)`, inverts the branch through z_i, and
/// compares `integral(phi o R_i^-1)` with `d * integral(phi)` for bumps phi
/// supported in the Koebe ball `B(z_i, q / (4 |R'(z_i)|))`, which the branch
/// image is guaranteed to cover.
pub fn balanced_defect(
    map: &RationalMap,
    mu: &DiscreteMeasure,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    map.require_dynamics()?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let critical_values: Vec<Complex64> = map
        .critical_values()?
        .iter()
        .filter_map(|v| v.to_complex())
        .collect();
    let critical_points: Vec<SpherePoint> = map.critical_points()?;
    let d = map.degree() as f64;
    let mut worst: f64 = 0.0;
    let mut valid_trials = 0usize;
    let mut rng = stream(seed, StreamKind::BalancedTrial, 0);
    let finite_atoms: Vec<Complex64> = mu.atoms().iter().filter_map(|a| a.to_complex()).collect();

    for trial in 0..trials.max(8) {
        let z_c = if trial % 2 == 0 && !finite_atoms.is_empty() {
            let a = finite_atoms[rng.gen_range(0..finite_atoms.len())];
            a + Complex64::new(rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03))
        } else {
            Complex64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))
        };
        if z_c.norm() > 2.5 {
            continue;
        }
        let z_i = SpherePoint::from_complex(z_c);
        if critical_points.iter().any(|c| sph_dist(c, &z_i) < 1e-3) {
            continue;
        }
        let Some(w_c) = map.eval_affine(z_c) else { continue };
        if w_c.norm() > 3.0 {
            continue;
        }
        let Some(deriv) = map.derivative_affine(z_c) else { continue };
        if deriv.norm() < 1e-6 {
            continue;
        }
        // Euclidean clearance of the image to the finite critical values
        let clearance = critical_values
            .iter()
            .map(|v| (v - w_c).norm())
            .fold(f64::INFINITY, f64::min);
        if !clearance.is_finite() || clearance < 1e-6 {
            continue;
        }
        let q = 0.9 * clearance.min(1.0);
        let r_koebe = q / (4.0 * deriv.norm());

        // spherical support radius whose ball stays inside the Euclidean
        // Koebe disk: sph >= 2 |a-b| / sqrt((1+|a|^2)(1+|b|^2))
        let rho = 2.0 * r_koebe
            / ((1.0 + z_c.norm_sqr()) * (1.0 + (z_c.norm() + r_koebe).powi(2))).sqrt();
        if rho < 1e-9 {
            continue;
        }
        for k in 0..3 {
            let support = rho * 0.5f64.powi(k);
            let phi = TestFunction::new(z_i, 0.5 * support, 0.5 * support)?;
            // lhs: integral of phi composed with the inverse branch; only
            // atoms inside the branch domain can contribute
            let mut lhs = 0.0;
            let mut failed = false;
            for (atom, weight) in mu.atoms().iter().zip(mu.weights()) {
                let Some(x) = atom.to_complex() else { continue };
                if (x - w_c).norm() >= q {
                    continue;
                }
                match invert_branch(map, z_c, w_c, x) {
                    Some(pre) => lhs += weight * phi.eval(&SpherePoint::from_complex(pre)),
                    None => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                continue;
            }
            let rhs = d * mu.integrate(|x| phi.eval(x));
            worst = worst.max((lhs - rhs).abs());
            valid_trials += 1;
        }
        if valid_trials >= 3 * trials {
            break;
        }
    }
    if valid_trials == 0 {
        return Err(Error::NoValidBall);
    }
    Ok(worst)
}

/// Inverse branch through `z0` (a preimage of `w0`): analytic continuation by
/// path-following Newton from `w0` to `w` along the segment between them.
fn invert_branch(map: &RationalMap, z0: Complex64, w0: Complex64, w: Complex64) -> Option<Complex64> {
    let mut z = z0;
    let steps = 4;
    for s in 1..=steps {
        let target = w0 + (w - w0) * (s as f64 / steps as f64);
        let mut converged = false;
        for _ in 0..40 {
            let val = map.eval_affine(z)?;
            let err = val - target;
            if err.norm() < 1e-12 {
                converged = true;
                break;
            }
            let der = map.derivative_affine(z)?;
            if der.norm() < 1e-14 || !der.is_finite() {
                return None;
            }
            z -= err / der;
            if !z.is_finite() {
                return None;
            }
        }
        if !converged {
            return None;
        }
    }
    Some(z)
}
