//! Rational maps `R = P/Q` on the Riemann sphere: evaluation, preimages,
//! periodic points, and chart-aware derivatives.
//!
//! Everything runs on homogenized coefficient pairs so that infinity needs
//! no special cases: `R([u:v]) = [P_hom(u,v) : Q_hom(u,v)]` with
//! `P_hom(u,v) = sum_i p_i u^i v^(d-i)`.

use crate::error::{Error, Result};
use crate::roots::{self, RootConfig};
use crate::sphere::{sph_dist, SpherePoint};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const TAU_RES: f64 = 1e-10;
pub const TAU_ROOT: f64 = 1e-10;
pub const TAU_FIX: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct RationalMap {
    /// Numerator, low-to-high, trailing zeros trimmed.
    p: Vec<Complex64>,
    /// Denominator, low-to-high, trailing zeros trimmed.
    q: Vec<Complex64>,
    degree: usize,
    /// Coefficient of u^i v^(d-i), length degree+1.
    p_hom: Vec<Complex64>,
    q_hom: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Attracting,
    Repelling,
    Indifferent,
}

#[derive(Clone, Debug)]
pub struct PeriodicPoint {
    pub point: SpherePoint,
    /// Minimal period (a divisor of the requested one).
    pub period: usize,
    /// Multiplier of the requested return map `R^p`.
    pub multiplier: Complex64,
    pub classification: Classification,
    /// True when the minimal period is strictly below the requested `p`.
    pub lower_period: bool,
    pub multiplicity: usize,
}

fn trim_trailing_zeros(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut end = coeffs.len();
    while end > 1 && coeffs[end - 1].norm() == 0.0 {
        end -= 1;
    }
    coeffs[..end].to_vec()
}

fn is_zero_poly(coeffs: &[Complex64]) -> bool {
    coeffs.iter().all(|c| c.norm() == 0.0)
}

/// Determinant of the Sylvester matrix by Gaussian elimination with partial
/// pivoting; the classical resultant of the two polynomials.
fn resultant(p: &[Complex64], q: &[Complex64]) -> Complex64 {
    let dp = p.len() - 1;
    let dq = q.len() - 1;
    if dp == 0 {
        return p[0].powu(dq as u32);
    }
    if dq == 0 {
        return q[0].powu(dp as u32);
    }
    let n = dp + dq;
    let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for row in 0..dq {
        for (k, &c) in p.iter().enumerate() {
            m[row][row + dp - k] = c;
        }
    }
    for row in 0..dp {
        for (k, &c) in q.iter().enumerate() {
            m[dq + row][row + dq - k] = c;
        }
    }
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm()));
        let pivot = pivot.unwrap();
        if m[pivot][col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                let sub = f * m[col][k];
                m[row][k] -= sub;
            }
        }
    }
    det
}

/// Evaluate a homogeneous form `sum_i c_i u^i v^(D-i)`. Safe for normalized
/// inputs because |u|, |v| <= 1.
fn eval_hom(coeffs: &[Complex64], u: Complex64, v: Complex64) -> Complex64 {
    let deg = coeffs.len() - 1;
    let mut upow = vec![Complex64::new(1.0, 0.0); deg + 1];
    let mut vpow = vec![Complex64::new(1.0, 0.0); deg + 1];
    for i in 1..=deg {
        upow[i] = upow[i - 1] * u;
        vpow[i] = vpow[i - 1] * v;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &c) in coeffs.iter().enumerate() {
        acc += c * upow[i] * vpow[deg - i];
    }
    acc
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x.norm() == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_derivative(a: &[Complex64]) -> Vec<Complex64> {
    if a.len() <= 1 {
        return vec![Complex64::new(0.0, 0.0)];
    }
    a.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * i as f64)
        .collect()
}

impl RationalMap {
    /// Build a map from low-to-high coefficient lists. The degree must be at
    /// least 1 and the pair numerically coprime; dynamical operations
    /// additionally require degree >= 2.
    pub fn new(p: &[Complex64], q: &[Complex64]) -> Result<Self> {
        if p.is_empty() || q.is_empty() {
            return Err(Error::InvalidInput("empty coefficient list".into()));
        }
        if p.iter().chain(q.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let p = trim_trailing_zeros(p);
        let q = trim_trailing_zeros(q);
        if is_zero_poly(&p) && is_zero_poly(&q) {
            return Err(Error::InvalidInput("P and Q are both zero".into()));
        }
        if is_zero_poly(&q) {
            return Err(Error::InvalidInput("denominator is identically zero".into()));
        }
        let dp = if is_zero_poly(&p) { 0 } else { p.len() - 1 };
        let dq = q.len() - 1;
        let degree = dp.max(dq);
        if degree < 1 || is_zero_poly(&p) && dq < 1 {
            return Err(Error::InvalidInput("constant map: degree must be >= 1".into()));
        }
        let norm_p = p.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let norm_q = q.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if norm_p > 0.0 && dp > 0 && dq > 0 {
            let res = resultant(&p, &q).norm();
            let scale = norm_p.powi(dq as i32) * norm_q.powi(dp as i32);
            let scaled = res / scale;
            if scaled < TAU_RES {
                return Err(Error::Coprimality { resultant: scaled, tolerance: TAU_RES });
            }
        }
        let mut p_hom = vec![Complex64::new(0.0, 0.0); degree + 1];
        let mut q_hom = vec![Complex64::new(0.0, 0.0); degree + 1];
        p_hom[..p.len()].copy_from_slice(&p);
        q_hom[..q.len()].copy_from_slice(&q);
        Ok(RationalMap { p, q, degree, p_hom, q_hom })
    }

    pub fn from_polynomial(p: &[Complex64]) -> Result<Self> {
        Self::new(p, &[Complex64::new(1.0, 0.0)])
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn numerator(&self) -> &[Complex64] {
        &self.p
    }

    pub fn denominator(&self) -> &[Complex64] {
        &self.q
    }

    pub fn is_polynomial(&self) -> bool {
        self.q.len() == 1
    }

    /// Monic-scaled affine coefficients `P/q0` when the map is a polynomial.
    pub fn poly_coeffs(&self) -> Option<Vec<Complex64>> {
        if self.is_polynomial() {
            Some(self.p.iter().map(|c| c / self.q[0]).collect())
        } else {
            None
        }
    }

    pub fn require_dynamics(&self) -> Result<()> {
        if self.degree < 2 {
            return Err(Error::InvalidInput(format!(
                "degree {} map: dynamical operations need degree >= 2",
                self.degree
            )));
        }
        Ok(())
    }

    pub fn eval(&self, z: &SpherePoint) -> Result<SpherePoint> {
        let u = eval_hom(&self.p_hom, z.u(), z.v());
        let v = eval_hom(&self.q_hom, z.u(), z.v());
        let scale = self
            .p_hom
            .iter()
            .chain(self.q_hom.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        SpherePoint::from_homogeneous(u, v).ok_or(Error::DegenerateValue).and_then(|pt| {
            if u.norm().max(v.norm()) <= 1e-14 * scale {
                Err(Error::DegenerateValue)
            } else {
                Ok(pt)
            }
        })
    }

    pub fn iterate(&self, z: &SpherePoint, n: usize) -> Result<SpherePoint> {
        let mut x = *z;
        for _ in 0..n {
            x = self.eval(&x)?;
        }
        Ok(x)
    }

    /// Affine evaluation of P/Q at a finite complex number; None when the
    /// value is infinite.
    pub fn eval_affine(&self, z: Complex64) -> Option<Complex64> {
        self.eval(&SpherePoint::from_complex(z)).ok()?.to_complex()
    }

    /// Plain derivative `(P'Q - PQ')/Q^2` at a finite point; `None` at a pole.
    pub fn derivative_affine(&self, z: Complex64) -> Option<Complex64> {
        let (pv, pd) = roots::eval_poly_and_derivative(&self.p, z);
        let (qv, qd) = roots::eval_poly_and_derivative(&self.q, z);
        if qv.norm() == 0.0 {
            return None;
        }
        let out = (pd * qv - pv * qd) / (qv * qv);
        out.is_finite().then_some(out)
    }

    /// Derivative of R viewed through the canonical charts of `z` and `R(z)`
    /// (the chart holding the point with modulus <= 1). At infinity this is
    /// the usual `w = 1/z` conjugation.
    pub fn derivative_chart(&self, z: &SpherePoint) -> Result<Complex64> {
        let w = self.eval(z)?;
        let (sc, x) = z.chart_key();
        let (tc, _) = w.chart_key();
        let rev = |c: &[Complex64]| -> Vec<Complex64> { c.iter().rev().copied().collect() };
        let (num, den): (Vec<Complex64>, Vec<Complex64>) = match (sc, tc) {
            (0, 0) => (self.p_hom.clone(), self.q_hom.clone()),
            (0, 1) => (self.q_hom.clone(), self.p_hom.clone()),
            (1, 0) => (rev(&self.p_hom), rev(&self.q_hom)),
            (1, 1) => (rev(&self.q_hom), rev(&self.p_hom)),
            _ => unreachable!(),
        };
        let (n, dn) = roots::eval_poly_and_derivative(&num, x);
        let (d, dd) = roots::eval_poly_and_derivative(&den, x);
        if d.norm() == 0.0 {
            return Err(Error::DegenerateValue);
        }
        Ok((dn * d - n * dd) / (d * d))
    }

    /// Multiplier of the point under `R^p`, accumulated along the actual
    /// orbit with chart-consistent factors.
    pub fn multiplier(&self, z: &SpherePoint, p: usize) -> Result<Complex64> {
        let mut x = *z;
        let mut acc = Complex64::new(1.0, 0.0);
        for _ in 0..p {
            acc *= self.derivative_chart(&x)?;
            x = self.eval(&x)?;
        }
        Ok(acc)
    }

    /// All critical points (roots of P'Q - PQ' plus infinity with its excess
    /// multiplicity), as sphere points.
    pub fn critical_points(&self) -> Result<Vec<SpherePoint>> {
        let wronskian = {
            let dp = poly_derivative(&self.p_hom);
            let dq = poly_derivative(&self.q_hom);
            let a = poly_mul(&dp, &self.q_hom);
            let b = poly_mul(&self.p_hom, &dq);
            let mut w = vec![Complex64::new(0.0, 0.0); a.len().max(b.len())];
            for (i, &c) in a.iter().enumerate() {
                w[i] += c;
            }
            for (i, &c) in b.iter().enumerate() {
                w[i] -= c;
            }
            w
        };
        let full_count = 2 * self.degree - 2;
        let trimmed = roots::trim_leading(&wronskian, 1e-13);
        let mut out = Vec::new();
        if trimmed.len() > 1 {
            let affine = roots::find_roots(trimmed, None, &RootConfig::default())?;
            for (root, _mult) in roots::cluster_roots(&affine, 10.0 * TAU_ROOT) {
                out.push(SpherePoint::from_complex(root));
            }
        }
        let affine_count = trimmed.len().saturating_sub(1);
        if affine_count < full_count {
            out.push(SpherePoint::infinity());
        }
        Ok(out)
    }

    pub fn critical_values(&self) -> Result<Vec<SpherePoint>> {
        self.critical_points()?
            .iter()
            .map(|c| self.eval(c))
            .collect()
    }

    /// The d preimages of `w` counted with multiplicity.
    pub fn preimages(&self, w: &SpherePoint) -> Result<Vec<(SpherePoint, usize)>> {
        self.preimages_with_guesses(w, None)
    }

    /// Preimages with optional warm-start guesses for the affine root solve
    /// (used by pullback trees, where the parent's root set is close).
    pub fn preimages_with_guesses(
        &self,
        w: &SpherePoint,
        guesses: Option<&[Complex64]>,
    ) -> Result<Vec<(SpherePoint, usize)>> {
        let d = self.degree;
        let (a, b) = (w.u(), w.v());
        // roots of b*P_hom - a*Q_hom, a binary form of degree d
        let coeffs: Vec<Complex64> = (0..=d).map(|i| b * self.p_hom[i] - a * self.q_hom[i]).collect();
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::DegenerateValue);
        }
        let trimmed = roots::trim_leading(&coeffs, 1e-14);
        let inf_mult = d + 1 - trimmed.len().max(1);
        let mut affine: Vec<Complex64> = Vec::new();
        if trimmed.len() > 1 {
            // strip exact zero trailing coefficients: exact roots at 0
            let mut lead = trimmed.to_vec();
            let mut zero_mult = 0usize;
            while lead.len() > 1 && lead[0].norm() == 0.0 {
                lead.remove(0);
                zero_mult += 1;
            }
            affine.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(zero_mult));
            if lead.len() > 1 {
                let solved = match roots::find_roots(&lead, guesses, &RootConfig::default()) {
                    Ok(r) => r,
                    Err(_) if guesses.is_some() => {
                        roots::find_roots(&lead, None, &RootConfig::default())?
                    }
                    Err(e) => return Err(e),
                };
                affine.extend(solved);
            }
        }

        let mut result: Vec<(SpherePoint, usize)> = Vec::with_capacity(d);
        let pts: Vec<SpherePoint> = affine.iter().map(|&z| SpherePoint::from_complex(z)).collect();
        let mut used = vec![false; pts.len()];
        for i in 0..pts.len() {
            if used[i] {
                continue;
            }
            let mut members = vec![i];
            used[i] = true;
            for j in i + 1..pts.len() {
                if !used[j] && sph_dist(&pts[i], &pts[j]) <= 10.0 * TAU_ROOT {
                    members.push(j);
                    used[j] = true;
                }
            }
            // centroid of the affine values is fine at this merge radius
            let finite: Vec<Complex64> = members
                .iter()
                .filter_map(|&k| pts[k].to_complex())
                .collect();
            let rep = if finite.len() == members.len() {
                let mean = finite.iter().sum::<Complex64>() / finite.len() as f64;
                SpherePoint::from_complex(mean)
            } else {
                pts[members[0]]
            };
            result.push((rep, members.len()));
        }
        if inf_mult > 0 {
            // fold in any stray huge roots sitting at numerical infinity
            let mut extra = inf_mult;
            result.retain(|(pt, m)| {
                if sph_dist(pt, &SpherePoint::infinity()) <= 10.0 * TAU_ROOT {
                    extra += m;
                    false
                } else {
                    true
                }
            });
            result.push((SpherePoint::infinity(), extra));
        }

        let total: usize = result.iter().map(|(_, m)| m).sum();
        debug_assert_eq!(total, d, "preimage count must equal the degree");

        let mut worst = 0.0f64;
        for (pt, _) in &result {
            let img = self.eval(pt)?;
            worst = worst.max(sph_dist(&img, w));
        }
        if worst > TAU_ROOT {
            return Err(Error::RootConvergence { residual: worst, tolerance: TAU_ROOT });
        }
        result.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        Ok(result)
    }

    /// Homogeneous coefficient pair of the p-th iterate.
    fn iterate_hom(&self, p: usize) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let mut a = self.p_hom.clone();
        let mut b = self.q_hom.clone();
        for _ in 1..p {
            let deg_inner = a.len() - 1;
            let mut apow: Vec<Vec<Complex64>> = vec![vec![Complex64::new(1.0, 0.0)]];
            let mut bpow: Vec<Vec<Complex64>> = vec![vec![Complex64::new(1.0, 0.0)]];
            for i in 1..=self.degree {
                apow.push(poly_mul(&apow[i - 1], &a));
                bpow.push(poly_mul(&bpow[i - 1], &b));
            }
            let out_len = self.degree * deg_inner + 1;
            let mut na = vec![Complex64::new(0.0, 0.0); out_len];
            let mut nb = vec![Complex64::new(0.0, 0.0); out_len];
            for i in 0..=self.degree {
                let term = poly_mul(&apow[i], &bpow[self.degree - i]);
                if self.p_hom[i].norm() != 0.0 {
                    for (k, &c) in term.iter().enumerate() {
                        na[k] += self.p_hom[i] * c;
                    }
                }
                if self.q_hom[i].norm() != 0.0 {
                    for (k, &c) in term.iter().enumerate() {
                        nb[k] += self.q_hom[i] * c;
                    }
                }
            }
            a = na;
            b = nb;
        }
        if a.iter().chain(b.iter()).any(|c| !c.is_finite()) {
            return Err(Error::RootConvergence { residual: f64::INFINITY, tolerance: TAU_ROOT });
        }
        Ok((a, b))
    }

    /// All solutions of `R^p(z) = z` with multipliers and classification;
    /// points of lower period are included and marked. Returns `d^p + 1`
    /// points counted with multiplicity.
    pub fn periodic_points(&self, p: usize, degree_budget: usize) -> Result<Vec<PeriodicPoint>> {
        if p == 0 {
            return Err(Error::InvalidInput("period must be >= 1".into()));
        }
        let dp = (self.degree as u64).checked_pow(p as u32);
        match dp {
            Some(n) if n + 1 <= degree_budget as u64 => {}
            _ => {
                return Err(Error::BudgetExceeded {
                    what: "periodic point solver degree",
                    needed: dp.map(|n| n + 1).unwrap_or(u64::MAX),
                    budget: degree_budget as u64,
                    best_gap: None,
                })
            }
        }
        let (pp, qq) = self.iterate_hom(p)?;
        let deg_iter = pp.len() - 1;
        // G = v * P_p - u * Q_p, a binary form of degree d^p + 1
        let mut g = vec![Complex64::new(0.0, 0.0); deg_iter + 2];
        for i in 0..=deg_iter {
            g[i] += pp[i];
            g[i + 1] -= qq[i];
        }
        let trimmed = roots::trim_leading(&g, 1e-13);
        let inf_mult = deg_iter + 2 - trimmed.len().max(1);
        let mut reps: Vec<(SpherePoint, usize)> = Vec::new();
        if trimmed.len() > 1 {
            let mut lead = trimmed.to_vec();
            let mut zero_mult = 0usize;
            while lead.len() > 1 && lead[0].norm() == 0.0 {
                lead.remove(0);
                zero_mult += 1;
            }
            let mut affine: Vec<Complex64> = Vec::new();
            affine.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(zero_mult));
            if lead.len() > 1 {
                affine.extend(roots::find_roots(&lead, None, &RootConfig::default())?);
            }
            for (root, mult) in roots::cluster_roots(&affine, 10.0 * TAU_ROOT) {
                reps.push((SpherePoint::from_complex(root), mult));
            }
        }
        if inf_mult > 0 {
            reps.push((SpherePoint::infinity(), inf_mult));
        }

        let mut out = Vec::with_capacity(reps.len());
        for (mut pt, mult) in reps {
            // polish directly on the fixed-point residual when needed
            let mut res = sph_dist(&self.iterate(&pt, p)?, &pt);
            if res > TAU_FIX {
                if let Some(z0) = pt.to_complex() {
                    let mut z = z0;
                    for _ in 0..20 {
                        // Newton on F(z) = R^p(z) - z via orbit derivatives
                        let mut val = z;
                        let mut der = Complex64::new(1.0, 0.0);
                        let mut ok = true;
                        for _ in 0..p {
                            let sp = SpherePoint::from_complex(val);
                            match (self.derivative_chart(&sp), self.eval(&sp).map(|w| w.to_complex())) {
                                (Ok(d), Ok(Some(w))) => {
                                    der *= d;
                                    val = w;
                                }
                                _ => {
                                    ok = false;
                                    break;
                                }
                            }
                        }
                        if !ok {
                            break;
                        }
                        let f = val - z;
                        let fp = der - Complex64::new(1.0, 0.0);
                        if fp.norm() == 0.0 {
                            break;
                        }
                        let step = f / fp;
                        z -= step;
                        if step.norm() < 1e-15 {
                            break;
                        }
                    }
                    let cand = SpherePoint::from_complex(z);
                    let cand_res = sph_dist(&self.iterate(&cand, p)?, &cand);
                    if cand_res < res {
                        pt = cand;
                        res = cand_res;
                    }
                }
            }
            if res > TAU_FIX {
                return Err(Error::RootConvergence { residual: res, tolerance: TAU_FIX });
            }

            let mut minimal = p;
            for q in 1..p {
                if p % q == 0 {
                    let img = self.iterate(&pt, q)?;
                    if sph_dist(&img, &pt) <= TAU_FIX {
                        minimal = q;
                        break;
                    }
                }
            }
            let multiplier = self.multiplier(&pt, p)?;
            let modulus = multiplier.norm();
            let classification = if modulus > 1.0 + 1e-9 {
                Classification::Repelling
            } else if modulus < 1.0 - 1e-9 {
                Classification::Attracting
            } else {
                Classification::Indifferent
            };
            out.push(PeriodicPoint {
                point: pt,
                period: minimal,
                multiplier,
                classification,
                lower_period: minimal < p,
                multiplicity: mult,
            });
        }
        out.sort_by(|a, b| a.point.canonical_cmp(&b.point));
        Ok(out)
    }
}

/// JSON wire format: `{"p": [[re,im],...], "q": [[re,im],...]}`.
#[derive(Serialize, Deserialize)]
pub struct MapFile {
    pub p: Vec<[f64; 2]>,
    pub q: Vec<[f64; 2]>,
}

impl MapFile {
    pub fn to_map(&self) -> Result<RationalMap> {
        let conv = |v: &Vec<[f64; 2]>| -> Vec<Complex64> {
            v.iter().map(|c| Complex64::new(c[0], c[1])).collect()
        };
        RationalMap::new(&conv(&self.p), &conv(&self.q))
    }

    pub fn from_map(map: &RationalMap) -> Self {
        let conv = |v: &[Complex64]| -> Vec<[f64; 2]> { v.iter().map(|c| [c.re, c.im]).collect() };
        MapFile { p: conv(map.numerator()), q: conv(map.denominator()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn z_squared() -> RationalMap {
        RationalMap::from_polynomial(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    fn basilica() -> RationalMap {
        RationalMap::from_polynomial(&[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    fn one_over_z() -> RationalMap {
        RationalMap::new(&[c(1.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn eval_square() {
        let r = z_squared();
        let w = r.eval(&SpherePoint::from_re_im(2.0, 0.0)).unwrap();
        assert!((w.to_complex().unwrap() - c(4.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eval_fixes_infinity_for_polynomials() {
        let r = z_squared();
        let w = r.eval(&SpherePoint::infinity()).unwrap();
        assert!(w.is_infinity());
    }

    #[test]
    fn inversion_swaps_zero_and_infinity() {
        let r = one_over_z();
        assert!(r.eval(&SpherePoint::from_re_im(0.0, 0.0)).unwrap().is_infinity());
        let back = r.eval(&SpherePoint::infinity()).unwrap();
        assert!((back.to_complex().unwrap()).norm() < 1e-14);
    }

    #[test]
    fn coprime_rejection() {
        // P = z^2 - 1, Q = z - 1 share the root z = 1
        let err = RationalMap::new(
            &[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
            &[c(-1.0, 0.0), c(1.0, 0.0)],
        );
        assert!(matches!(err, Err(Error::Coprimality { .. })));
    }

    #[test]
    fn preimages_of_one_under_square() {
        let r = z_squared();
        let pre = r.preimages(&SpherePoint::from_re_im(1.0, 0.0)).unwrap();
        assert_eq!(pre.len(), 2);
        let mut vals: Vec<f64> = pre.iter().map(|(p, _)| p.to_complex().unwrap().re).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + 1.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preimages_of_zero_have_multiplicity_two() {
        let r = z_squared();
        let pre = r.preimages(&SpherePoint::from_re_im(0.0, 0.0)).unwrap();
        assert_eq!(pre.len(), 1);
        assert_eq!(pre[0].1, 2);
        assert!(pre[0].0.to_complex().unwrap().norm() < 1e-10);
    }

    #[test]
    fn preimages_of_infinity_under_basilica() {
        let pre = basilica().preimages(&SpherePoint::infinity()).unwrap();
        assert_eq!(pre.len(), 1);
        assert_eq!(pre[0].1, 2);
        assert!(pre[0].0.is_infinity());
    }

    #[test]
    fn multiplier_examples() {
        let r = z_squared();
        let at_one = r.multiplier(&SpherePoint::from_re_im(1.0, 0.0), 1).unwrap();
        assert!((at_one - c(2.0, 0.0)).norm() < 1e-12);
        let at_zero = r.multiplier(&SpherePoint::from_re_im(0.0, 0.0), 1).unwrap();
        assert!(at_zero.norm() < 1e-12);
        // golden-ratio fixed point of the basilica: multiplier 2z = 1 + sqrt(5)
        let beta = (1.0 + 5.0f64.sqrt()) / 2.0;
        let lam = basilica().multiplier(&SpherePoint::from_re_im(beta, 0.0), 1).unwrap();
        assert!((lam - c(1.0 + 5.0f64.sqrt(), 0.0)).norm() < 1e-10);
    }

    #[test]
    fn multiplier_at_infinity_is_superattracting() {
        let r = z_squared();
        let lam = r.multiplier(&SpherePoint::infinity(), 1).unwrap();
        assert!(lam.norm() < 1e-12);
    }

    #[test]
    fn fixed_points_of_square() {
        let pts = z_squared().periodic_points(1, 1026).unwrap();
        let total: usize = pts.iter().map(|p| p.multiplicity).sum();
        assert_eq!(total, 3); // d + 1
        for p in &pts {
            if p.point.is_infinity() || p.point.to_complex().unwrap().norm() < 0.5 {
                assert_eq!(p.classification, Classification::Attracting);
            } else {
                assert_eq!(p.classification, Classification::Repelling);
                assert!((p.multiplier - c(2.0, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn fixed_points_of_basilica_match_quadratic_formula() {
        let pts = basilica().periodic_points(1, 1026).unwrap();
        let beta = (1.0 + 5.0f64.sqrt()) / 2.0;
        let alpha = (1.0 - 5.0f64.sqrt()) / 2.0;
        let mut found_beta = false;
        let mut found_alpha = false;
        for p in &pts {
            if let Some(z) = p.point.to_complex() {
                if (z - c(beta, 0.0)).norm() < 1e-9 {
                    assert!((p.multiplier - c(1.0 + 5.0f64.sqrt(), 0.0)).norm() < 1e-8);
                    found_beta = true;
                }
                if (z - c(alpha, 0.0)).norm() < 1e-9 {
                    assert!((p.multiplier - c(1.0 - 5.0f64.sqrt(), 0.0)).norm() < 1e-8);
                    found_alpha = true;
                }
            }
        }
        assert!(found_beta && found_alpha);
    }

    #[test]
    fn period_two_cycle_of_square() {
        let pts = z_squared().periodic_points(2, 1026).unwrap();
        let total: usize = pts.iter().map(|p| p.multiplicity).sum();
        assert_eq!(total, 5); // d^2 + 1
        let omega = c((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin());
        let cycle: Vec<&PeriodicPoint> = pts
            .iter()
            .filter(|p| !p.lower_period && !p.point.is_infinity() && p.point.to_complex().unwrap().norm() > 0.5)
            .collect();
        assert_eq!(cycle.len(), 2);
        for p in &cycle {
            let z = p.point.to_complex().unwrap();
            assert!((z - omega).norm() < 1e-9 || (z - omega.conj()).norm() < 1e-9);
            assert!((p.multiplier - c(4.0, 0.0)).norm() < 1e-8);
        }
        // fixed points reappear marked with their lower period
        assert!(pts.iter().any(|p| p.lower_period && p.period == 1));
    }

    #[test]
    fn preimage_round_trip_generic() {
        let maps = [z_squared(), basilica()];
        for r in &maps {
            for k in 0..20 {
                let w = SpherePoint::from_re_im(0.3 * k as f64 - 2.7, 0.17 * k as f64 - 1.3);
                let pre = r.preimages(&w).unwrap();
                let count: usize = pre.iter().map(|(_, m)| m).sum();
                assert_eq!(count, r.degree());
                for (p, _) in &pre {
                    assert!(sph_dist(&r.eval(p).unwrap(), &w) <= TAU_ROOT);
                }
            }
        }
    }

    #[test]
    fn map_file_round_trip() {
        let r = basilica();
        let file = MapFile::from_map(&r);
        let json = serde_json::to_string(&file).unwrap();
        let parsed: MapFile = serde_json::from_str(&json).unwrap();
        let r2 = parsed.to_map().unwrap();
        assert_eq!(r2.degree(), 2);
        let z = SpherePoint::from_re_im(0.4, -0.3);
        assert!(sph_dist(&r.eval(&z).unwrap(), &r2.eval(&z).unwrap()) < 1e-15);
    }
}
