//! Simultaneous polynomial root finding (Aberth-Ehrlich) with Newton
//! polishing and multiplicity clustering.
//!
//! Coefficients are low-to-high. The solver runs on the affine polynomial;
//! callers account for roots at infinity by trimming the leading
//! coefficients first.

use crate::error::{Error, Result};
use num_complex::Complex64;

#[derive(Clone, Copy, Debug)]
pub struct RootConfig {
    /// Relative residual target for accepting a root set.
    pub residual_tol: f64,
    /// Stop once the largest Aberth correction falls below this.
    pub correction_tol: f64,
    pub max_iterations: usize,
    pub newton_polish_steps: usize,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            residual_tol: 1e-11,
            correction_tol: 1e-14,
            max_iterations: 300,
            newton_polish_steps: 4,
        }
    }
}

/// Horner evaluation of p and p' at z.
pub fn eval_poly_and_derivative(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Trim leading (high-order) coefficients that are negligible relative to the
/// largest coefficient. Returns the slice of effective degree.
pub fn trim_leading(coeffs: &[Complex64], rel_tol: f64) -> &[Complex64] {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return &coeffs[..0];
    }
    let mut end = coeffs.len();
    while end > 0 && coeffs[end - 1].norm() <= rel_tol * scale {
        end -= 1;
    }
    &coeffs[..end]
}

fn initial_guesses(coeffs: &[Complex64], out: &mut Vec<Complex64>) {
    let n = coeffs.len() - 1;
    let lead = coeffs[n].norm();
    // Cauchy bound keeps all roots inside; the geometric-mean radius spreads
    // the ring usefully for polynomials with small constant terms.
    let cauchy = 1.0 + coeffs[..n].iter().map(|c| c.norm()).fold(0.0, f64::max) / lead;
    let c0 = coeffs[0].norm();
    let radius = if c0 > 0.0 {
        (c0 / lead).powf(1.0 / n as f64).clamp(1e-3, cauchy)
    } else {
        (0.5 * cauchy).max(1e-3)
    };
    let offset = 0.43; // fixed phase so axis-symmetric polynomials do not stall
    for k in 0..n {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64) + offset;
        out.push(Complex64::from_polar(radius, theta));
    }
}

/// All affine roots of `coeffs` (degree = len-1 after the caller's trimming),
/// optionally warm-started from a previous nearby root set.
pub fn find_roots(
    coeffs: &[Complex64],
    warm_start: Option<&[Complex64]>,
    cfg: &RootConfig,
) -> Result<Vec<Complex64>> {
    let n = coeffs.len().saturating_sub(1);
    if coeffs.is_empty() || coeffs[coeffs.len() - 1].norm() == 0.0 {
        return Err(Error::InvalidInput("zero leading coefficient in root solve".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![-coeffs[0] / coeffs[1]]);
    }

    let mut z: Vec<Complex64> = Vec::with_capacity(n);
    match warm_start {
        Some(w) if w.len() == n && w.iter().all(|g| g.is_finite()) => z.extend_from_slice(w),
        _ => initial_guesses(coeffs, &mut z),
    }

    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let mut max_step = 0.0f64;
        for k in 0..n {
            let zk = z[k];
            let (p, dp) = eval_poly_and_derivative(coeffs, zk);
            if p.norm() == 0.0 {
                continue;
            }
            let newton = if dp.norm() > 0.0 { p / dp } else { Complex64::new(1e-12, 0.0) };
            let mut repulsion = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    let d = zk - z[j];
                    if d.norm() > 1e-300 {
                        repulsion += d.inv();
                    } else {
                        // coincident iterates: nudge apart deterministically
                        repulsion += Complex64::new(1e6, 1e6);
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * repulsion;
            let w = if denom.norm() > 1e-300 { newton / denom } else { newton };
            if !w.is_finite() {
                return Err(Error::RootConvergence { residual: f64::INFINITY, tolerance: cfg.residual_tol });
            }
            z[k] = zk - w;
            let rel = w.norm() / (1.0 + z[k].norm());
            max_step = max_step.max(rel);
        }
        if max_step < cfg.correction_tol {
            converged = true;
            break;
        }
    }

    for zk in z.iter_mut() {
        for _ in 0..cfg.newton_polish_steps {
            let (p, dp) = eval_poly_and_derivative(coeffs, *zk);
            if dp.norm() == 0.0 || p.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.is_finite() {
                break;
            }
            *zk -= step;
        }
    }

    // Residual acceptance is relative to the coefficient scale and the root
    // magnitude; multiple roots pass because the residual (not the root
    // separation) is what is checked.
    let mut worst = 0.0f64;
    for &zk in &z {
        let (p, _) = eval_poly_and_derivative(coeffs, zk);
        let denom = scale * (1.0 + zk.norm()).powi(n as i32);
        let rel = p.norm() / denom;
        worst = worst.max(rel);
    }
    if worst > cfg.residual_tol && !converged {
        return Err(Error::RootConvergence { residual: worst, tolerance: cfg.residual_tol });
    }
    if worst > cfg.residual_tol.max(1e-7) {
        return Err(Error::RootConvergence { residual: worst, tolerance: cfg.residual_tol });
    }
    Ok(z)
}

/// Greedy clustering of near-coincident roots; returns representatives with
/// multiplicities. `radius` is a plain Euclidean merge radius.
pub fn cluster_roots(roots: &[Complex64], radius: f64) -> Vec<(Complex64, usize)> {
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&a, &b| {
        roots[a]
            .re
            .total_cmp(&roots[b].re)
            .then(roots[a].im.total_cmp(&roots[b].im))
    });
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    let mut used = vec![false; roots.len()];
    for &i in &order {
        if used[i] {
            continue;
        }
        let mut sum = roots[i];
        let mut count = 1usize;
        used[i] = true;
        for &j in &order {
            if !used[j] && (roots[j] - roots[i]).norm() <= radius {
                sum += roots[j];
                count += 1;
                used[j] = true;
            }
        }
        clusters.push((sum / count as f64, count));
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sort_roots(mut r: Vec<Complex64>) -> Vec<Complex64> {
        r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        r
    }

    #[test]
    fn quadratic_roots_of_unity() {
        // z^2 - 1
        let roots = sort_roots(find_roots(&[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], None, &RootConfig::default()).unwrap());
        assert!((roots[0] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((roots[1] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn double_root_clusters() {
        // z^2: both iterates spiral into the origin and merge
        let roots = find_roots(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], None, &RootConfig::default()).unwrap();
        let clustered = cluster_roots(&roots, 1e-9);
        assert_eq!(clustered.len(), 1);
        assert_eq!(clustered[0].1, 2);
        assert!(clustered[0].0.norm() < 1e-9);
    }

    #[test]
    fn wilkinson_like_degree_eight() {
        // prod (z - k), k=1..8
        let mut coeffs = vec![c(1.0, 0.0)];
        for k in 1..=8 {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (i, &a) in coeffs.iter().enumerate() {
                next[i + 1] += a;
                next[i] -= a * c(k as f64, 0.0);
            }
            coeffs = next;
        }
        let roots = sort_roots(find_roots(&coeffs, None, &RootConfig::default()).unwrap());
        for (i, r) in roots.iter().enumerate() {
            assert!((r - c((i + 1) as f64, 0.0)).norm() < 1e-6, "root {i}: {r}");
        }
    }

    #[test]
    fn warm_start_converges() {
        let coeffs = [c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]; // z^3 = 1
        let cold = find_roots(&coeffs, None, &RootConfig::default()).unwrap();
        let nudged: Vec<Complex64> = cold.iter().map(|z| z + c(1e-3, -1e-3)).collect();
        let warm = find_roots(&coeffs, Some(&nudged), &RootConfig::default()).unwrap();
        let (a, b) = (sort_roots(cold), sort_roots(warm));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_zero_polynomial() {
        assert!(find_roots(&[], None, &RootConfig::default()).is_err());
    }
}
