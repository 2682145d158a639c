//! Closed-form real 2×2 linear algebra.
//!
//! Everything here is exact up to floating rounding: no iterative solvers.
//! The matrix exponential is split on the sign of the discriminant
//! `δ = tr² − 4 det`, using the decomposition `M = (tr/2) I + N` with `N`
//! traceless and `N² = (δ/4) I`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column vector in the plane.
pub type Vec2 = [f64; 2];

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `det(a, b)` for the 2×2 matrix with columns `a`, `b`.
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

/// Unit vector with the first nonzero component positive.
pub fn canonical_unit(v: Vec2) -> Vec2 {
    let n = norm(v);
    let u = [v[0] / n, v[1] / n];
    let lead = if u[0].abs() > 1e-14 { u[0] } else { u[1] };
    if lead < 0.0 {
        [-u[0], -u[1]]
    } else {
        u
    }
}

/// Real 2×2 matrix, row-major.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Mat2 {
    a11: f64,
    a12: f64,
    a21: f64,
    a22: f64,
}

/// Sign of a discriminant, decided against a tolerance band around zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscSign {
    Negative,
    Zero,
    Positive,
}

impl DiscSign {
    pub fn classify(value: f64, tol: f64) -> Self {
        if value > tol {
            DiscSign::Positive
        } else if value < -tol {
            DiscSign::Negative
        } else {
            DiscSign::Zero
        }
    }

    pub fn value(self) -> f64 {
        match self {
            DiscSign::Negative => -1.0,
            DiscSign::Zero => 0.0,
            DiscSign::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenKind {
    RealDistinct,
    RealRepeatedDiagonalizable,
    RealRepeatedDefective,
    ComplexConjugate,
}

/// Eigen-structure of a 2×2 matrix.
///
/// Eigenvectors are unit length with the first nonzero component positive.
/// A defective matrix carries one eigenvector, a complex pair carries none.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenStructure {
    pub kind: EigenKind,
    pub eigenvalues: [Complex64; 2],
    pub eigenvectors: Vec<Vec2>,
}

impl Mat2 {
    /// Builds a matrix without validation. Callers feeding user data should
    /// go through [`Mat2::try_new`].
    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub fn try_new(a11: f64, a12: f64, a21: f64, a22: f64) -> Result<Self> {
        for (index, value) in [a11, a12, a21, a22].into_iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
        }
        Ok(Mat2::new(a11, a12, a21, a22))
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Result<Self> {
        Mat2::try_new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn from_cols(c1: Vec2, c2: Vec2) -> Self {
        Mat2::new(c1[0], c2[0], c1[1], c2[1])
    }

    pub const fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub const fn zero() -> Self {
        Mat2::new(0.0, 0.0, 0.0, 0.0)
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Mat2::new(d1, 0.0, 0.0, d2)
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }

    pub fn a11(&self) -> f64 {
        self.a11
    }
    pub fn a12(&self) -> f64 {
        self.a12
    }
    pub fn a21(&self) -> f64 {
        self.a21
    }
    pub fn a22(&self) -> f64 {
        self.a22
    }

    pub fn col(&self, j: usize) -> Vec2 {
        match j {
            0 => [self.a11, self.a21],
            _ => [self.a12, self.a22],
        }
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// `tr² − 4 det`.
    pub fn discriminant(&self) -> f64 {
        // (a11 - a22)² + 4 a12 a21 avoids cancelling the trace square.
        let d = self.a11 - self.a22;
        d * d + 4.0 * self.a12 * self.a21
    }

    /// Scale-aware tolerance for discriminant sign decisions.
    pub fn disc_tol(&self) -> f64 {
        let n = self.norm();
        1e-9 * (n * n).max(1.0)
    }

    pub fn disc_sign(&self) -> DiscSign {
        DiscSign::classify(self.discriminant(), self.disc_tol())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22)
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    /// Adjugate, `tr·I − M`.
    pub fn adjugate(&self) -> Self {
        Mat2::new(self.a22, -self.a12, -self.a21, self.a11)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(1.0 / det))
    }

    pub fn apply(&self, x: Vec2) -> Vec2 {
        [
            self.a11 * x[0] + self.a12 * x[1],
            self.a21 * x[0] + self.a22 * x[1],
        ]
    }

    /// Traceless part `M − (tr/2) I`.
    pub fn traceless(&self) -> Self {
        let h = 0.5 * self.trace();
        Mat2::new(self.a11 - h, self.a12, self.a21, self.a22 - h)
    }

    /// `T⁻¹ M T`.
    pub fn similar(&self, t: &Mat2) -> Option<Self> {
        Some(t.inverse()? * *self * *t)
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    /// Planar Hurwitz test: `tr < −tol` and `det > tol`.
    pub fn is_hurwitz(&self, tol: f64) -> bool {
        self.trace() < -tol && self.det() > tol
    }

    /// `e^{tM}` in closed form.
    pub fn expm(&self, t: f64) -> Mat2 {
        let half_tr = 0.5 * self.trace();
        let n = self.traceless();
        // N² = q I
        let q = 0.25 * self.discriminant();
        let z = q * t * t;
        let (c, s) = cosh_sinhc(z);
        let growth = (half_tr * t).exp();
        let e = Mat2::identity().scale(c) + n.scale(t * s);
        e.scale(growth)
    }

    /// Eigen-structure with the discriminant sign decided against `tol`.
    pub fn eigen(&self, tol: f64) -> EigenStructure {
        let disc = self.discriminant();
        let half_tr = 0.5 * self.trace();
        match DiscSign::classify(disc, tol) {
            DiscSign::Positive => {
                let r = 0.5 * disc.sqrt();
                let (l1, l2) = (half_tr + r, half_tr - r);
                EigenStructure {
                    kind: EigenKind::RealDistinct,
                    eigenvalues: [Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)],
                    eigenvectors: vec![self.null_vector(l1), self.null_vector(l2)],
                }
            }
            DiscSign::Negative => {
                let r = 0.5 * (-disc).sqrt();
                EigenStructure {
                    kind: EigenKind::ComplexConjugate,
                    eigenvalues: [Complex64::new(half_tr, r), Complex64::new(half_tr, -r)],
                    eigenvectors: Vec::new(),
                }
            }
            DiscSign::Zero => {
                let lambda = Complex64::new(half_tr, 0.0);
                let n = self.traceless();
                if n.norm() * n.norm() <= tol {
                    EigenStructure {
                        kind: EigenKind::RealRepeatedDiagonalizable,
                        eigenvalues: [lambda, lambda],
                        eigenvectors: vec![[1.0, 0.0], [0.0, 1.0]],
                    }
                } else {
                    EigenStructure {
                        kind: EigenKind::RealRepeatedDefective,
                        eigenvalues: [lambda, lambda],
                        eigenvectors: vec![self.null_vector(half_tr)],
                    }
                }
            }
        }
    }

    /// Unit vector spanning the (approximate) kernel of `M − λI`.
    pub fn null_vector(&self, lambda: f64) -> Vec2 {
        let r1 = [self.a11 - lambda, self.a12];
        let r2 = [self.a21, self.a22 - lambda];
        // A kernel vector is orthogonal to the dominant row.
        let r = if norm(r1) >= norm(r2) { r1 } else { r2 };
        if norm(r) == 0.0 {
            return [1.0, 0.0];
        }
        canonical_unit([-r[1], r[0]])
    }
}

/// `(cosh √z, sinh √z / √z)` continued analytically to `z ≤ 0`.
fn cosh_sinhc(z: f64) -> (f64, f64) {
    if z.abs() < 0.5 {
        // Taylor in z; 12 terms are well below 1e-17 for |z| < 0.5.
        let mut c = 0.0;
        let mut s = 0.0;
        let mut term_c = 1.0; // z^n / (2n)!
        let mut term_s = 1.0; // z^n / (2n+1)!
        for n in 0..12 {
            c += term_c;
            s += term_s;
            let k = 2.0 * n as f64;
            term_c *= z / ((k + 1.0) * (k + 2.0));
            term_s *= z / ((k + 2.0) * (k + 3.0));
        }
        (c, s)
    } else if z > 0.0 {
        let w = z.sqrt();
        (w.cosh(), w.sinh() / w)
    } else {
        let w = (-z).sqrt();
        (w.cos(), w.sin() / w)
    }
}

/// `XY − YX`.
pub fn commutator(x: &Mat2, y: &Mat2) -> Mat2 {
    *x * *y - *y * *x
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 - o.a11,
            self.a12 - o.a12,
            self.a21 - o.a21,
            self.a22 - o.a22,
        )
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl TryFrom<[[f64; 2]; 2]> for Mat2 {
    type Error = Error;
    fn try_from(rows: [[f64; 2]; 2]) -> Result<Self> {
        Mat2::from_rows(rows)
    }
}

impl From<Mat2> for [[f64; 2]; 2] {
    fn from(m: Mat2) -> Self {
        m.rows()
    }
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{:?}, {:?}], [{:?}, {:?}]]",
            self.a11, self.a12, self.a21, self.a22
        )
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
        Mat2::new(a, b, c, d)
    }

    /// Scaling-and-squaring Taylor series; independent of the closed form.
    fn expm_series(a: &Mat2, t: f64) -> Mat2 {
        let x = a.scale(t);
        let mut squarings = 0;
        let mut s = x;
        while s.norm() > 0.25 {
            s = s.scale(0.5);
            squarings += 1;
        }
        let mut sum = Mat2::identity();
        let mut term = Mat2::identity();
        for k in 1..30 {
            term = (term * s).scale(1.0 / k as f64);
            sum = sum + term;
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn det_examples() {
        assert_eq!(Mat2::identity().det(), 1.0);
        assert_eq!(m(-1.0, 10.0, 0.0, -1.0).det(), 1.0);
        assert_eq!(m(-1.0, 2.0, -2.0, -1.0).det(), 5.0);
    }

    #[test]
    fn discriminant_examples() {
        assert_eq!(Mat2::identity().discriminant(), 0.0);
        assert_eq!(m(-1.0, 1.0, -1.0, -1.0).discriminant(), -4.0);
        assert_eq!(m(-2.0, 0.0, 0.0, -1.0).discriminant(), 1.0);
    }

    #[test]
    fn commutator_examples() {
        let x = m(-1.0, 1.0, -1.0, -1.0);
        assert_eq!(commutator(&x, &x), Mat2::zero());
        let y = m(-1.0, 2.0, -2.0, -1.0);
        assert_eq!(commutator(&x, &y), Mat2::zero());
        // XY = [[101,-10],[-10,1]], YX = [[1,-10],[-10,101]]
        let c = commutator(&m(-1.0, 10.0, 0.0, -1.0), &m(-1.0, 0.0, 10.0, -1.0));
        assert_eq!(c, m(100.0, 0.0, 0.0, -100.0));
        assert_eq!(c.det(), -10000.0);
    }

    #[test]
    fn hurwitz_examples() {
        assert!((-Mat2::identity()).is_hurwitz(0.0));
        assert!(!Mat2::identity().is_hurwitz(0.0));
        assert!(!m(0.0, 1.0, -1.0, 0.0).is_hurwitz(0.0));
    }

    #[test]
    fn expm_examples() {
        for t in [-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(Mat2::zero().expm(t), Mat2::identity());
        }
        let d = Mat2::diag(-1.0, -2.0).expm(1.0);
        assert!(d.max_abs_diff(&Mat2::diag((-1.0f64).exp(), (-2.0f64).exp())) < 1e-15);
        let r = m(0.0, 1.0, -1.0, 0.0);
        let e = r.expm(std::f64::consts::FRAC_PI_2);
        assert!(e.max_abs_diff(&expm_series(&r, std::f64::consts::FRAC_PI_2)) < 1e-12);
        assert!(e.max_abs_diff(&m(0.0, 1.0, -1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn expm_defective_and_near_defective() {
        let j = m(-1.0, 1.0, 0.0, -1.0);
        let t = 2.5;
        let exact = m(1.0, t, 0.0, 1.0).scale((-t).exp());
        assert!(j.expm(t).max_abs_diff(&exact) < 1e-15);
        for eps in [1e-6, 1e-9, -1e-9, -1e-6] {
            let a = m(-1.0, 1.0, eps, -1.0);
            let diff = a.expm(t).max_abs_diff(&expm_series(&a, t));
            assert!(diff < 1e-13, "eps {eps}: {diff}");
        }
    }

    #[test]
    fn eigen_examples() {
        let e = Mat2::diag(-1.0, -2.0).eigen(1e-9);
        assert_eq!(e.kind, EigenKind::RealDistinct);
        assert_eq!(e.eigenvalues[0].re, -1.0);
        assert_eq!(e.eigenvalues[1].re, -2.0);
        assert_eq!(e.eigenvectors, vec![[1.0, 0.0], [0.0, 1.0]]);

        // λ² + 2λ + 2 = 0
        let e = m(-1.0, 1.0, -1.0, -1.0).eigen(1e-9);
        assert_eq!(e.kind, EigenKind::ComplexConjugate);
        assert_eq!(e.eigenvalues[0], Complex64::new(-1.0, 1.0));
        assert_eq!(e.eigenvalues[1], Complex64::new(-1.0, -1.0));
        assert!(e.eigenvectors.is_empty());

        let e = m(-1.0, 1.0, 0.0, -1.0).eigen(1e-9);
        assert_eq!(e.kind, EigenKind::RealRepeatedDefective);
        assert_eq!(e.eigenvalues[0].re, -1.0);
        assert_eq!(e.eigenvectors, vec![[1.0, 0.0]]);

        let e = (-Mat2::identity()).eigen(1e-9);
        assert_eq!(e.kind, EigenKind::RealRepeatedDiagonalizable);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Mat2::try_new(1.0, f64::NAN, 0.0, 1.0).is_err());
        assert!(Mat2::from_rows([[1.0, 0.0], [f64::INFINITY, 1.0]]).is_err());
        let parsed: std::result::Result<Mat2, _> = serde_json::from_str("[[1,2],[3,4]]");
        assert_eq!(parsed.unwrap(), m(1.0, 2.0, 3.0, 4.0));
    }

    fn entries(bound: f64) -> impl Strategy<Value = Mat2> {
        prop::array::uniform4(-bound..bound).prop_map(|[a, b, c, d]| Mat2::new(a, b, c, d))
    }

    proptest! {
        #[test]
        fn expm_semigroup(a in entries(3.0), s in -3.0f64..3.0, t in -3.0f64..3.0) {
            let (es, et) = (a.expm(s), a.expm(t));
            let lhs = es * et;
            let rhs = a.expm(s + t);
            // Rounding floor of the product is set by its factors.
            let scale = 1.0f64.max(rhs.max_abs()).max(es.norm() * et.norm());
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10 * scale);
        }

        #[test]
        fn expm_det_is_exp_trace(a in entries(3.0), t in -3.0f64..3.0) {
            let e = a.expm(t);
            let d = e.det();
            let expected = (t * a.trace()).exp();
            prop_assert!((d - expected).abs() <= 1e-10 * expected.max(e.norm() * e.norm()));
        }

        #[test]
        fn expm_matches_series(a in entries(3.0), t in -2.0f64..2.0) {
            let e = a.expm(t);
            let oracle = expm_series(&a, t);
            prop_assert!(e.max_abs_diff(&oracle) <= 1e-10 * 1.0f64.max(oracle.max_abs()));
        }

        #[test]
        fn eigen_kind_follows_discriminant(a in entries(5.0)) {
            let tol = a.disc_tol();
            let e = a.eigen(tol);
            let d = a.discriminant();
            if d < -tol {
                prop_assert_eq!(e.kind, EigenKind::ComplexConjugate);
            } else if d > tol {
                prop_assert_eq!(e.kind, EigenKind::RealDistinct);
                for (v, l) in e.eigenvectors.iter().zip(e.eigenvalues.iter()) {
                    let r = a.apply(*v);
                    let res = norm([r[0] - l.re * v[0], r[1] - l.re * v[1]]);
                    prop_assert!(res < 1e-8 * 1.0f64.max(a.norm()));
                    prop_assert!((norm(*v) - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn commutator_antisymmetric(x in entries(10.0), y in entries(10.0)) {
            let c = commutator(&x, &y) + commutator(&y, &x);
            prop_assert!(c.max_abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
        }
    }
}
