//! Quadratic Lyapunov machinery.
//!
//! A common quadratic Lyapunov function exists iff both
//! `φ(σ) = det(σA₁ + (1−σ)A₂)` and `ψ(σ) = det(σA₁ + (1−σ)A₂⁻¹)` stay
//! positive on `[0, 1]`. Both are quadratics in `σ` whose coefficients are
//! invariants of the pair, which turns the test into two inequalities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::gamma;
use crate::mat2::{Mat2, Vec2};
use crate::normal_form::{CaseTag, NormalFormResult};

/// Monomial coefficients `(c₀, c₁, c₂)` of `φ` and `ψ`, plus the interior
/// minimizer of `φ` when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaPolys {
    pub phi_coeffs: (f64, f64, f64),
    pub psi_coeffs: (f64, f64, f64),
    pub sigma0: Option<f64>,
    pub phi_at_sigma0: Option<f64>,
}

fn eval_quadratic((c0, c1, c2): (f64, f64, f64), s: f64) -> f64 {
    c0 + s * (c1 + s * c2)
}

impl SigmaPolys {
    pub fn phi(&self, sigma: f64) -> f64 {
        eval_quadratic(self.phi_coeffs, sigma)
    }

    pub fn psi(&self, sigma: f64) -> f64 {
        eval_quadratic(self.psi_coeffs, sigma)
    }
}

pub fn sigma_polys(a1: &Mat2, a2: &Mat2) -> Result<SigmaPolys> {
    let (d1, d2) = (a1.det(), a2.det());
    if d2 == 0.0 {
        return Err(Error::SingularA2);
    }
    let g = gamma(a1, a2);
    let tr12 = (*a1 * *a2).trace();
    // σ²d₁ + 2σ(1−σ)Γ + (1−σ)²d₂
    let phi_coeffs = (d2, 2.0 * (g - d2), d1 + d2 - 2.0 * g);
    // (σ²d₁d₂ + σ(1−σ)tr(A₁A₂) + (1−σ)²) / d₂
    let psi_coeffs = (1.0 / d2, (tr12 - 2.0) / d2, (d1 * d2 - tr12 + 1.0) / d2);
    let denom = d1 + d2 - 2.0 * g;
    let sigma0 = if denom != 0.0 {
        Some((d2 - g) / denom).filter(|s| *s > 0.0 && *s < 1.0)
    } else {
        None
    };
    Ok(SigmaPolys {
        phi_coeffs,
        psi_coeffs,
        sigma0,
        phi_at_sigma0: sigma0.map(|s| eval_quadratic(phi_coeffs, s)),
    })
}

/// Analytic existence test for a common quadratic Lyapunov function:
/// `Γ > −√(det₁det₂)` and `tr(A₁A₂) > −2√(det₁det₂)`.
pub fn has_quadratic_clf(a1: &Mat2, a2: &Mat2) -> bool {
    let g = (a1.det() * a2.det()).sqrt();
    gamma(a1, a2) > -g && (*a1 * *a2).trace() > -2.0 * g
}

/// `V(x) = xᵀPx` with `P = [[p11, p12], [p12, p22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
    pub strict: bool,
}

/// Largest eigenvalue of a symmetric 2×2 matrix.
pub fn sym_max_eigen(m: &Mat2) -> f64 {
    let (a, b, c) = (m.a11(), 0.5 * (m.a12() + m.a21()), m.a22());
    0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

impl QuadraticForm {
    pub fn from_matrix(p: &Mat2, strict: bool) -> Self {
        QuadraticForm {
            p11: p.a11(),
            p12: 0.5 * (p.a12() + p.a21()),
            p22: p.a22(),
            strict,
        }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.p11, self.p12, self.p12, self.p22)
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        self.p11 * x[0] * x[0] + 2.0 * self.p12 * x[0] * x[1] + self.p22 * x[1] * x[1]
    }

    pub fn is_positive_definite(&self) -> bool {
        self.p11 > 0.0 && self.p11 * self.p22 - self.p12 * self.p12 > 0.0
    }

    /// `AᵀP + PA`.
    pub fn lie_derivative(&self, a: &Mat2) -> Mat2 {
        let p = self.matrix();
        a.transpose() * p + p * *a
    }

    /// Largest eigenvalue of `AᵀP + PA`.
    pub fn lie_max_eigen(&self, a: &Mat2) -> f64 {
        sym_max_eigen(&self.lie_derivative(a))
    }

    /// Positive definite, and both Lie derivatives negative definite with
    /// margin `1e−12‖P‖‖Aᵢ‖`.
    pub fn certifies_strict(&self, a1: &Mat2, a2: &Mat2) -> bool {
        let pn = self.matrix().norm();
        self.is_positive_definite()
            && [a1, a2]
                .iter()
                .all(|a| self.lie_max_eigen(a) < -1e-12 * pn * a.norm())
    }

    /// Positive definite with both Lie derivatives negative semidefinite at
    /// relative tolerance `tol`.
    pub fn certifies_nonstrict(&self, a1: &Mat2, a2: &Mat2, tol: f64) -> bool {
        let pn = self.matrix().norm();
        self.is_positive_definite()
            && [a1, a2]
                .iter()
                .all(|a| self.lie_max_eigen(a) <= tol * pn * a.norm())
    }

    /// `P ↦ Sᵀ P S`, the same function in coordinates `x = S y`.
    pub fn congruence(&self, s: &Mat2) -> Self {
        QuadraticForm::from_matrix(&(s.transpose() * self.matrix() * *s), self.strict)
    }
}

/// Solves `AᵀP + PA = −Q` for symmetric `P` (Cramer's rule on the 3×3
/// system in `p11, p12, p22`).
pub fn solve_lyapunov(a: &Mat2, q: &Mat2) -> Option<Mat2> {
    let (a11, a12, a21, a22) = (a.a11(), a.a12(), a.a21(), a.a22());
    let m = [
        [2.0 * a11, 2.0 * a21, 0.0],
        [a12, a11 + a22, a21],
        [0.0, 2.0 * a12, 2.0 * a22],
    ];
    let rhs = [-q.a11(), -0.5 * (q.a12() + q.a21()), -q.a22()];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut sol = [0.0; 3];
    for (j, s) in sol.iter_mut().enumerate() {
        let mut mj = m;
        for i in 0..3 {
            mj[i][j] = rhs[i];
        }
        *s = det3(&mj) / d;
    }
    Some(Mat2::new(sol[0], sol[1], sol[1], sol[2]))
}

/// Diagonal weight `w` of the nonstrict function `V = y₁² + w y₂²` in the
/// case-`1a` normal coordinates of an S3 pair.
pub fn s3_diagonal_weight(nf: &NormalFormResult) -> Result<f64> {
    let f = nf.f.ok_or(Error::WrongCase {
        op: "nonstrict_clf_s3",
        expected: "1a",
        found: nf.case_tag.as_str().into(),
    })?;
    let (tau1, tau2) = (nf.b1.a11(), nf.b2.a11());
    let s1 = nf.b1.a21();
    let s2 = nf.b2.a12() * f;
    let denom = 4.0 * f * f * (tau1 * f - tau2 * s1).powi(2);
    if !(denom > 0.0) {
        return Err(Error::DegenerateBasis {
            quantity: "4F²(τ₁F − τ₂ sgn δ₁)²",
            value: denom,
        });
    }
    Ok((s1 * s2 - f * f).powi(2) / denom)
}

/// Nonstrict common quadratic Lyapunov function of an S3 pair, expressed in
/// the original coordinates. `band` bounds `|Γ + √(det₁det₂)|` on the
/// normalized pair.
pub fn nonstrict_clf_s3(nf: &NormalFormResult, band: f64) -> Result<QuadraticForm> {
    if nf.case_tag != CaseTag::OneA {
        return Err(Error::WrongCase {
            op: "nonstrict_clf_s3",
            expected: "1a",
            found: nf.case_tag.as_str().into(),
        });
    }
    let margin = gamma(&nf.b1, &nf.b2) + (nf.b1.det() * nf.b2.det()).sqrt();
    if margin.abs() > band {
        return Err(Error::WrongCase {
            op: "nonstrict_clf_s3",
            expected: "S3 boundary",
            found: format!("Γ + √(det₁det₂) = {margin}"),
        });
    }
    let w = s3_diagonal_weight(nf)?;
    let normal = QuadraticForm {
        p11: 1.0,
        p12: 0.0,
        p22: w,
        strict: false,
    };
    let t_inv = nf.t.inverse().ok_or(Error::DegenerateBasis {
        quantity: "det T",
        value: nf.t.det(),
    })?;
    let pulled = normal.congruence(&t_inv);
    // Unit trace keeps the printed certificate readable.
    let tr = pulled.p11 + pulled.p22;
    Ok(QuadraticForm {
        p11: pulled.p11 / tr,
        p12: pulled.p12 / tr,
        p22: pulled.p22 / tr,
        strict: false,
    })
}

pub const WITNESS_GRID: usize = 1001;
pub const WITNESS_SAMPLES: usize = 10_000;
const WITNESS_SEED: u64 = 0x5157_5354;

/// Worst normalized Lie-derivative eigenvalue over both modes; negative
/// means `P` certifies.
fn witness_score(p: &Mat2, a1: &Mat2, a2: &Mat2) -> f64 {
    let q = QuadraticForm::from_matrix(p, true);
    if !q.is_positive_definite() {
        return f64::INFINITY;
    }
    let pn = p.norm();
    [a1, a2]
        .iter()
        .map(|a| q.lie_max_eigen(a) / (pn * a.norm()))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `R(θ) diag(1, eᵘ) R(θ)ᵀ`.
fn pd_from_params(theta: f64, u: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    let r = Mat2::new(c, -s, s, c);
    r * Mat2::diag(1.0, u.exp()) * r.transpose()
}

fn params_from_pd(p: &Mat2) -> (f64, f64) {
    let l1 = sym_max_eigen(p);
    let l2 = p.trace() - l1;
    let v = (*p - Mat2::identity().scale(l1)).null_vector(0.0);
    (v[1].atan2(v[0]), (l2 / l1).max(1e-300).ln())
}

/// Strict common quadratic Lyapunov function, found numerically.
///
/// Scans `λP₁ + (1−λ)P₂` where `AᵢᵀPᵢ + PᵢAᵢ = −I`, then falls back to a
/// seeded random search over positive definite matrices, half of the draws
/// global and half perturbing the best candidate so far.
pub fn quadratic_clf_witness(a1: &Mat2, a2: &Mat2) -> Result<QuadraticForm> {
    if !has_quadratic_clf(a1, a2) {
        return Err(Error::Precondition {
            op: "quadratic_clf_witness",
            reason: "the pair admits no common quadratic Lyapunov function".into(),
        });
    }
    let id = Mat2::identity();
    let p1 = solve_lyapunov(a1, &id).ok_or(Error::DegenerateBasis {
        quantity: "Lyapunov operator of A1",
        value: 0.0,
    })?;
    let p2 = solve_lyapunov(a2, &id).ok_or(Error::DegenerateBasis {
        quantity: "Lyapunov operator of A2",
        value: 0.0,
    })?;

    let mut best = p1;
    let mut best_score = f64::INFINITY;
    for i in 0..WITNESS_GRID {
        let lambda = i as f64 / (WITNESS_GRID - 1) as f64;
        let p = p1.scale(lambda) + p2.scale(1.0 - lambda);
        let q = QuadraticForm::from_matrix(&p, true);
        if q.certifies_strict(a1, a2) {
            return Ok(q);
        }
        let score = witness_score(&p, a1, a2);
        if score < best_score {
            best_score = score;
            best = p;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(WITNESS_SEED);
    let (mut theta, mut u) = params_from_pd(&best);
    let (mut step_theta, mut step_u) = (0.3, 1.0);
    for i in 0..WITNESS_SAMPLES {
        let (cand_theta, cand_u) = if i % 2 == 0 {
            (
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(-14.0..14.0),
            )
        } else {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            (theta + step_theta * z1, u + step_u * z2)
        };
        let p = pd_from_params(cand_theta, cand_u);
        let q = QuadraticForm::from_matrix(&p, true);
        if q.certifies_strict(a1, a2) {
            return Ok(q);
        }
        let score = witness_score(&p, a1, a2);
        if score < best_score {
            best_score = score;
            theta = cand_theta;
            u = cand_u;
            step_theta *= 1.5;
            step_u *= 1.5;
        } else if i % 2 == 1 {
            step_theta = (step_theta * 0.95).max(1e-12);
            step_u = (step_u * 0.95).max(1e-12);
        }
    }
    Err(Error::WitnessNotFound {
        budget: WITNESS_GRID + WITNESS_SAMPLES,
    })
}
