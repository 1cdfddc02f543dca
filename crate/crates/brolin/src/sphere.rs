//! Points of the Riemann sphere in homogeneous coordinates and the spherical
//! metric.
//!
//! A point is a pair `[u : v]` with `z = u/v` and `infinity = [1 : 0]`,
//! normalized so that `max(|u|, |v|) = 1`. Working projectively avoids every
//! special case at infinity; the chart value `z` (or `1/z`) is recovered only
//! at the edges of the crate (serialization, plotting, planar walks).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Default projective equality tolerance.
pub const TAU_EQ: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpherePoint {
    u: Complex64,
    v: Complex64,
}

impl SpherePoint {
    /// Build from homogeneous coordinates. Returns `None` when both vanish.
    pub fn from_homogeneous(u: Complex64, v: Complex64) -> Option<Self> {
        let nu = u.norm();
        let nv = v.norm();
        let s = nu.max(nv);
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        Some(SpherePoint { u: u / s, v: v / s })
    }

    pub fn from_complex(z: Complex64) -> Self {
        // Large |z| folds into the 1/z chart so coordinates stay bounded.
        if z.norm() > 1.0 {
            SpherePoint::from_homogeneous(Complex64::new(1.0, 0.0), z.inv())
                .unwrap_or_else(Self::infinity)
        } else {
            SpherePoint {
                u: z,
                v: Complex64::new(1.0, 0.0),
            }
        }
    }

    pub fn from_re_im(re: f64, im: f64) -> Self {
        Self::from_complex(Complex64::new(re, im))
    }

    pub fn infinity() -> Self {
        SpherePoint {
            u: Complex64::new(1.0, 0.0),
            v: Complex64::new(0.0, 0.0),
        }
    }

    pub fn u(&self) -> Complex64 {
        self.u
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }

    pub fn is_infinity(&self) -> bool {
        self.v.norm() <= TAU_EQ * self.u.norm()
    }

    /// Chart value `z = u/v`; `None` at (numerical) infinity.
    pub fn to_complex(&self) -> Option<Complex64> {
        if self.is_infinity() {
            None
        } else {
            Some(self.u / self.v)
        }
    }

    /// Finite chart value, treating near-infinity as an error for callers
    /// that operate strictly in the plane.
    pub fn finite(&self) -> Option<Complex64> {
        self.to_complex().filter(|z| z.norm() <= 1.0 / TAU_EQ)
    }

    /// Embedding on the unit 2-sphere via stereographic projection,
    /// computed directly from homogeneous coordinates.
    pub fn to_r3(&self) -> [f64; 3] {
        let d = self.u.norm_sqr() + self.v.norm_sqr();
        let uvbar = self.u * self.v.conj();
        [2.0 * uvbar.re / d, 2.0 * uvbar.im / d, (self.u.norm_sqr() - self.v.norm_sqr()) / d]
    }

    /// Projective equality within tolerance `tau` on the normalized cross term.
    pub fn approx_eq(&self, other: &SpherePoint, tau: f64) -> bool {
        (self.u * other.v - other.u * self.v).norm() <= tau
    }

    /// Canonical chart id and chart coordinate: chart 0 holds `|z| <= 1` as
    /// `z`, chart 1 holds the rest as `1/z`. Used for deterministic ordering.
    pub fn chart_key(&self) -> (u8, Complex64) {
        if self.u.norm() <= self.v.norm() {
            (0, self.u / self.v)
        } else {
            (1, self.v / self.u)
        }
    }

    /// Total order on (chart, re, im); ties only for projectively equal points.
    pub fn canonical_cmp(&self, other: &SpherePoint) -> std::cmp::Ordering {
        let (ca, za) = self.chart_key();
        let (cb, zb) = other.chart_key();
        ca.cmp(&cb)
            .then_with(|| za.re.total_cmp(&zb.re))
            .then_with(|| za.im.total_cmp(&zb.im))
    }
}

/// Geodesic (great-circle) distance on the unit sphere, in radians, <= pi.
///
/// The chordal form `2|u1 v2 - u2 v1| / sqrt((|u1|^2+|v1|^2)(|u2|^2+|v2|^2))`
/// is converted to arc length through the Lagrange identity
/// `|cross|^2 + |herm|^2 = (|u1|^2+|v1|^2)(|u2|^2+|v2|^2)`, which makes
/// `2*atan2(|cross|, |herm|)` exact in both the near and antipodal regimes.
pub fn sph_dist(a: &SpherePoint, b: &SpherePoint) -> f64 {
    let cross = (a.u * b.v - b.u * a.v).norm();
    let herm = (a.u * b.u.conj() + a.v * b.v.conj()).norm();
    2.0 * cross.atan2(herm)
}

/// Chordal distance (straight-line in the R^3 embedding), <= 2.
pub fn chordal_dist(a: &SpherePoint, b: &SpherePoint) -> f64 {
    2.0 * ((sph_dist(a, b) / 2.0).sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pt(re: f64, im: f64) -> SpherePoint {
        SpherePoint::from_re_im(re, im)
    }

    #[test]
    fn poles_are_antipodal() {
        assert!((sph_dist(&pt(0.0, 0.0), &SpherePoint::infinity()) - PI).abs() < 1e-15);
    }

    #[test]
    fn coincident_points_have_zero_distance() {
        let z = pt(0.3, -0.7);
        assert_eq!(sph_dist(&z, &z), 0.0);
    }

    #[test]
    fn equator_antipodes() {
        assert!((sph_dist(&pt(1.0, 0.0), &pt(-1.0, 0.0)) - PI).abs() < 1e-15);
    }

    #[test]
    fn r3_embedding_matches_metric() {
        let a = pt(0.4, 0.2);
        let b = pt(-1.3, 2.0);
        let pa = a.to_r3();
        let pb = b.to_r3();
        let chord: f64 = (0..3).map(|i| (pa[i] - pb[i]).powi(2)).sum::<f64>().sqrt();
        assert!((chord - chordal_dist(&a, &b)).abs() < 1e-14);
    }

    #[test]
    fn infinity_round_trip() {
        let inf = SpherePoint::infinity();
        assert!(inf.is_infinity());
        assert!(inf.to_complex().is_none());
        assert_eq!(inf.to_r3(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn normalization_keeps_coordinates_bounded() {
        let p = SpherePoint::from_complex(Complex64::new(1e10, 0.0));
        assert!(p.u.norm().max(p.v.norm()) <= 1.0 + 1e-15);
        assert!(!p.is_infinity());
        assert!((p.to_complex().unwrap().re - 1e10).abs() / 1e10 < 1e-12);
        // beyond the projective tolerance a huge value is infinity
        assert!(SpherePoint::from_complex(Complex64::new(1e200, 0.0)).is_infinity());
    }

    proptest! {
        #[test]
        fn metric_axioms(
            ax in -3.0f64..3.0, ay in -3.0f64..3.0,
            bx in -3.0f64..3.0, by in -3.0f64..3.0,
            cx in -3.0f64..3.0, cy in -3.0f64..3.0,
        ) {
            let a = pt(ax, ay);
            let b = pt(bx, by);
            let c = pt(cx, cy);
            let dab = sph_dist(&a, &b);
            let dba = sph_dist(&b, &a);
            let dac = sph_dist(&a, &c);
            let dbc = sph_dist(&b, &c);
            // symmetry is exact: the two norms are evaluated from conjugate
            // products with identical magnitudes
            prop_assert_eq!(dab, dba);
            prop_assert!(dab <= PI + 1e-15);
            prop_assert!(dac <= dab + dbc + 4.0 * f64::EPSILON);
        }

        #[test]
        fn chart_consistency_near_unit_circle(theta in 0.0f64..(2.0*PI), eps in -1e-3f64..1e-3) {
            // the same point entered through z and through 1/z agrees projectively
            let z = Complex64::from_polar(1.0 + eps, theta);
            let a = SpherePoint::from_homogeneous(z, Complex64::new(1.0, 0.0)).unwrap();
            let b = SpherePoint::from_homogeneous(Complex64::new(1.0, 0.0), z.inv()).unwrap();
            prop_assert!(a.approx_eq(&b, TAU_EQ));
            prop_assert!(sph_dist(&a, &b) <= TAU_EQ);
        }
    }
}
