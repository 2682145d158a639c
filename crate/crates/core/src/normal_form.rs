//! Reduction of a Hurwitz pair to canonical form under change of basis and
//! positive time rescaling.
//!
//! The case is decided by the commutator `C = [A₁, A₂]`:
//!
//! | case | condition | normalized pair |
//! |------|-----------|-----------------|
//! | `1a` | `det C < 0` | `B₁ = [[τ₁, 1], [sgn δ₁, τ₁]]`, `B₂ = [[τ₂, sgn δ₂ / F], [F, τ₂]]` |
//! | `1b` | `det C > 0` | `B₁ = [[τ₁, 1], [1, τ₁]]`, `B₂ = [[τ₂ + √(1−k²), k], [k, τ₂ − √(1−k²)]]` |
//! | `2`  | rank C = 1  | `B₁` diagonal, `B₂` upper triangular |
//! | `3-*`| `C = 0`     | as `1a` with `F = k = ±1`, or both upper triangular |
//!
//! In case `1a` the basis is an eigenbasis of `C`: in it both traceless parts
//! are anti-diagonal, and a dilation of the second axis fixes the `1` entry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::InvariantSet;
use crate::mat2::{commutator, cross, DiscSign, Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    #[serde(rename = "1a")]
    OneA,
    #[serde(rename = "1b")]
    OneB,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3-rot")]
    ThreeRot,
    #[serde(rename = "3-real")]
    ThreeReal,
    #[serde(rename = "3-defective")]
    ThreeDefective,
    /// One of the matrices is a multiple of the identity.
    #[serde(rename = "3-scalar")]
    ThreeScalar,
}

impl CaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseTag::OneA => "1a",
            CaseTag::OneB => "1b",
            CaseTag::Two => "2",
            CaseTag::ThreeRot => "3-rot",
            CaseTag::ThreeReal => "3-real",
            CaseTag::ThreeDefective => "3-defective",
            CaseTag::ThreeScalar => "3-scalar",
        }
    }

    pub fn is_commuting(self) -> bool {
        matches!(
            self,
            CaseTag::ThreeRot | CaseTag::ThreeReal | CaseTag::ThreeDefective | CaseTag::ThreeScalar
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormResult {
    pub case_tag: CaseTag,
    pub b1: Mat2,
    pub b2: Mat2,
    /// Change of basis: `Bᵢ = (1/αᵢ) T⁻¹ A_{σ(i)} T`.
    pub t: Mat2,
    pub alpha1: f64,
    pub alpha2: f64,
    pub f: Option<f64>,
    /// `A₁` and `A₂` were exchanged, so `B₁` comes from `A₂`.
    pub swapped: bool,
    pub note: Option<String>,
}

impl NormalFormResult {
    /// The original matrix index behind `Bᵢ` (1-based).
    pub fn source_index(&self, i: usize) -> usize {
        if self.swapped {
            3 - i
        } else {
            i
        }
    }
}

/// Tolerance on the commutator, bilinear in the inputs.
pub fn commutator_tol(a1: &Mat2, a2: &Mat2) -> f64 {
    1e-9 * a1.norm() * a2.norm()
}

pub fn normalize(a1: &Mat2, a2: &Mat2) -> Result<NormalFormResult> {
    for (which, a) in [(1u8, a1), (2u8, a2)] {
        if !a.is_hurwitz(0.0) {
            return Err(Error::NotHurwitz {
                which,
                trace: a.trace(),
                det: a.det(),
            });
        }
    }
    let inv = InvariantSet::compute(a1, a2)?;
    let c = commutator(a1, a2);
    let eps = commutator_tol(a1, a2);
    if c.norm() <= eps {
        return commuting(a1, a2, &inv);
    }
    let det_c = c.det();
    if det_c.abs() <= 1e-9 * (a1.norm() * a2.norm()).powi(2) {
        return rank_one(a1, a2, &inv);
    }
    if det_c < 0.0 {
        case_1a(a1, a2, &inv, &c)
    } else {
        case_1b(a1, a2, &inv)
    }
}

fn case_1a(a1: &Mat2, a2: &Mat2, inv: &InvariantSet, c: &Mat2) -> Result<NormalFormResult> {
    let (alpha1, alpha2) = inv.time_scales();
    let mu = (-c.det()).sqrt();
    let e_plus = c.null_vector(mu);
    let e_minus = c.null_vector(-mu);
    let n1 = a1.traceless();
    let n2 = a2.traceless();

    struct Candidate {
        t0: Mat2,
        upper: f64,
        lower: f64,
        f: f64,
    }
    let candidates: Vec<Candidate> = [(e_plus, e_minus), (e_minus, e_plus)]
        .into_iter()
        .filter_map(|(p, q)| {
            let t0 = Mat2::from_cols(p, q);
            let m1 = n1.similar(&t0)?;
            let m2 = n2.similar(&t0)?;
            Some(Candidate {
                t0,
                upper: m1.a12(),
                lower: m1.a21(),
                f: m2.a21() * m1.a12() / (alpha1 * alpha2),
            })
        })
        .collect();
    let chosen = if inv.disc_sign1 == DiscSign::Zero {
        // B₁ must be upper triangular: its nonzero entry goes above the diagonal.
        candidates
            .iter()
            .max_by(|x, y| (x.upper.abs() - x.lower.abs()).total_cmp(&(y.upper.abs() - y.lower.abs())))
    } else {
        candidates.iter().max_by(|x, y| x.f.abs().total_cmp(&y.f.abs()))
    }
    .ok_or(Error::DegenerateBasis {
        quantity: "det of commutator eigenbasis",
        value: cross(e_plus, e_minus),
    })?;
    if chosen.upper.abs() <= 1e-12 * n1.norm() {
        return Err(Error::DegenerateBasis {
            quantity: "off-diagonal entry of normalized A1",
            value: chosen.upper,
        });
    }
    let dilation = alpha1 / chosen.upper;
    let t = chosen.t0 * Mat2::diag(1.0, dilation);
    let f = chosen.f;
    let (s1, s2) = (inv.disc_sign1.value(), inv.disc_sign2.value());
    let b1 = Mat2::new(inv.tau1, 1.0, s1, inv.tau1);
    let b2 = Mat2::new(inv.tau2, s2 / f, f, inv.tau2);
    Ok(NormalFormResult {
        case_tag: CaseTag::OneA,
        b1,
        b2,
        t,
        alpha1,
        alpha2,
        f: Some(f),
        swapped: false,
        note: None,
    })
}

fn case_1b(a1: &Mat2, a2: &Mat2, inv: &InvariantSet) -> Result<NormalFormResult> {
    if inv.disc_sign1 != DiscSign::Positive || inv.disc_sign2 != DiscSign::Positive {
        return Err(Error::DegenerateBasis {
            quantity: "discriminant product with det[A1,A2] > 0",
            value: inv.delta1 * inv.delta2,
        });
    }
    let (alpha1, alpha2) = inv.time_scales();
    let eig = a1.eigen(a1.disc_tol());
    let p1 = Mat2::from_cols(eig.eigenvectors[0], eig.eigenvectors[1]);
    let m = a2.traceless().similar(&p1).ok_or(Error::DegenerateBasis {
        quantity: "det of A1 eigenbasis",
        value: p1.det(),
    })?;
    let m = m.scale(1.0 / alpha2);
    let prod = m.a12() * m.a21();
    if !(prod > 0.0) {
        return Err(Error::DegenerateBasis {
            quantity: "b·c in A1 eigenbasis",
            value: prod,
        });
    }
    let r = m.a12().signum() * (m.a12() / m.a21()).sqrt();
    // T = P₁ · diag(r, 1) · Q⁻¹ with Q = [[1, 1], [1, −1]].
    let q_inv = Mat2::new(0.5, 0.5, 0.5, -0.5);
    let t = p1 * Mat2::diag(r, 1.0) * q_inv;
    let k = inv.kappa;
    let c = (1.0 - k * k).max(0.0).sqrt();
    let b1 = Mat2::new(inv.tau1, 1.0, 1.0, inv.tau1);
    let b2 = Mat2::new(inv.tau2 + c, k, k, inv.tau2 - c);
    Ok(NormalFormResult {
        case_tag: CaseTag::OneB,
        b1,
        b2,
        t,
        alpha1,
        alpha2,
        f: None,
        swapped: false,
        note: None,
    })
}

fn rank_one(a1: &Mat2, a2: &Mat2, inv: &InvariantSet) -> Result<NormalFormResult> {
    let (scale1, scale2) = inv.time_scales();
    let swapped = inv.disc_sign1 != DiscSign::Positive;
    let (diag_src, tri_src, alpha1, alpha2) = if swapped {
        (a2, a1, scale2, scale1)
    } else {
        (a1, a2, scale1, scale2)
    };
    if diag_src.disc_sign() != DiscSign::Positive {
        return Err(Error::DegenerateBasis {
            quantity: "discriminant of diagonalizable factor",
            value: diag_src.discriminant(),
        });
    }
    let eig = diag_src.eigen(diag_src.disc_tol());
    let (v1, v2) = (eig.eigenvectors[0], eig.eigenvectors[1]);
    let misalignment = |v: Vec2| cross(v, tri_src.apply(v)).abs();
    let (common, other) = if misalignment(v1) <= misalignment(v2) {
        (v1, v2)
    } else {
        (v2, v1)
    };
    let t = Mat2::from_cols(common, other);
    let d = diag_src.similar(&t).expect("eigenbasis is invertible").scale(1.0 / alpha1);
    let u = tri_src.similar(&t).expect("eigenbasis is invertible").scale(1.0 / alpha2);
    Ok(NormalFormResult {
        case_tag: CaseTag::Two,
        b1: Mat2::diag(d.a11(), d.a22()),
        b2: Mat2::new(u.a11(), u.a12(), 0.0, u.a22()),
        t,
        alpha1,
        alpha2,
        f: None,
        swapped,
        note: Some("triangular pair; no canonical scaling in the rank-one case".into()),
    })
}

/// Basis `[N w / α, w]` for a non-eigenvector `w` of the traceless `N`.
fn companion_basis(n: &Mat2, alpha: f64) -> Mat2 {
    let candidates: [Vec2; 3] = [[1.0, 0.0], [0.0, 1.0], [std::f64::consts::FRAC_1_SQRT_2; 2]];
    let w = candidates
        .into_iter()
        .max_by(|x, y| {
            cross(n.apply(*x), *x)
                .abs()
                .total_cmp(&cross(n.apply(*y), *y).abs())
        })
        .expect("nonempty");
    let nw = n.apply(w);
    Mat2::from_cols([nw[0] / alpha, nw[1] / alpha], w)
}

fn commuting(a1: &Mat2, a2: &Mat2, inv: &InvariantSet) -> Result<NormalFormResult> {
    let (alpha1, alpha2) = inv.time_scales();
    let n1 = a1.traceless();
    let n2 = a2.traceless();
    let scalar1 = n1.norm() <= 1e-9 * a1.norm();
    let scalar2 = n2.norm() <= 1e-9 * a2.norm();
    if scalar1 || scalar2 {
        let t = match (scalar1, scalar2) {
            (true, true) => Mat2::identity(),
            (true, false) => companion_basis(&n2, n2.norm()),
            _ => companion_basis(&n1, n1.norm()),
        };
        let b1 = a1.similar(&t).expect("invertible basis").scale(1.0 / alpha1);
        let b2 = a2.similar(&t).expect("invertible basis").scale(1.0 / alpha2);
        return Ok(NormalFormResult {
            case_tag: CaseTag::ThreeScalar,
            b1,
            b2,
            t,
            alpha1,
            alpha2,
            f: None,
            swapped: false,
            note: Some("scalar matrix: the pair commutes trivially".into()),
        });
    }
    if inv.disc_sign1 != inv.disc_sign2 {
        return Err(Error::DegenerateBasis {
            quantity: "discriminant sign mismatch in a commuting pair",
            value: inv.delta1 * inv.delta2,
        });
    }
    // N₂ = λ N₁
    let lambda = frob_dot(&n2, &n1) / frob_dot(&n1, &n1);
    match inv.disc_sign1 {
        DiscSign::Zero => {
            let t = companion_basis(&n1, 1.0);
            Ok(NormalFormResult {
                case_tag: CaseTag::ThreeDefective,
                b1: Mat2::new(inv.tr1 / (2.0 * alpha1), 1.0 / alpha1, 0.0, inv.tr1 / (2.0 * alpha1)),
                b2: Mat2::new(
                    inv.tr2 / (2.0 * alpha2),
                    lambda / alpha2,
                    0.0,
                    inv.tr2 / (2.0 * alpha2),
                ),
                t,
                alpha1,
                alpha2,
                f: None,
                swapped: false,
                note: None,
            })
        }
        sign => {
            let s = sign.value();
            let t = companion_basis(&n1, alpha1);
            let f = (lambda * alpha1 * s / alpha2).signum();
            Ok(NormalFormResult {
                case_tag: if s < 0.0 {
                    CaseTag::ThreeRot
                } else {
                    CaseTag::ThreeReal
                },
                b1: Mat2::new(inv.tau1, 1.0, s, inv.tau1),
                b2: Mat2::new(inv.tau2, s / f, f, inv.tau2),
                t,
                alpha1,
                alpha2,
                f: Some(f),
                swapped: false,
                note: None,
            })
        }
    }
}

/// The case-`1a` pair with the given invariants:
/// `B₁ = [[τ₁, 1], [s₁, τ₁]]`, `B₂ = [[τ₂, s₂/F], [F, τ₂]]` where `sᵢ = sgn δᵢ`.
pub fn canonical_pair(tau1: f64, tau2: f64, s1: f64, s2: f64, f: f64) -> (Mat2, Mat2) {
    let upper = if s2 == 0.0 { 0.0 } else { s2 / f };
    (
        Mat2::new(tau1, 1.0, s1, tau1),
        Mat2::new(tau2, upper, f, tau2),
    )
}

fn frob_dot(x: &Mat2, y: &Mat2) -> f64 {
    x.a11() * y.a11() + x.a12() * y.a12() + x.a21() * y.a21() + x.a22() * y.a22()
}

/// Checks every structural property of a normalization result at `tol`.
pub fn verify_normal_form(res: &NormalFormResult, a1: &Mat2, a2: &Mat2, tol: f64) -> bool {
    check_normal_form(res, a1, a2, tol).is_ok()
}

/// Like [`verify_normal_form`] but names the first failing property.
pub fn check_normal_form(
    res: &NormalFormResult,
    a1: &Mat2,
    a2: &Mat2,
    tol: f64,
) -> std::result::Result<(), String> {
    let ensure = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };
    let close = |x: f64, y: f64| (x - y).abs() <= tol * (1.0 + y.abs());
    ensure(res.alpha1 > 0.0 && res.alpha2 > 0.0, "positive time scales")?;
    let t_inv = res.t.inverse().ok_or("T is singular")?;
    let (src1, src2) = if res.swapped { (a2, a1) } else { (a1, a2) };
    for (b, a, alpha, name) in [
        (&res.b1, src1, res.alpha1, "B1"),
        (&res.b2, src2, res.alpha2, "B2"),
    ] {
        let expect = (t_inv * *a * res.t).scale(1.0 / alpha);
        let scale = 1.0 + b.max_abs();
        ensure(
            b.max_abs_diff(&expect) <= tol * scale,
            &format!("{name} is not the transformed input"),
        )?;
    }
    let inv = InvariantSet::compute(a1, a2).map_err(|e| e.to_string())?;
    let (b1, b2) = (&res.b1, &res.b2);
    let equal_diagonal = |b: &Mat2| close(b.a11(), b.a22());
    match res.case_tag {
        CaseTag::OneA | CaseTag::ThreeRot | CaseTag::ThreeReal => {
            let f = res.f.ok_or("missing F")?;
            let (s1, s2) = (inv.disc_sign1.value(), inv.disc_sign2.value());
            ensure(equal_diagonal(b1) && equal_diagonal(b2), "equal diagonals")?;
            ensure(close(b1.a11(), inv.tau1) && close(b2.a11(), inv.tau2), "diagonals are τᵢ")?;
            ensure(close(b1.a12(), 1.0) && close(b1.a21(), s1), "shape of B1")?;
            ensure(close(b2.a21(), f), "B2 lower entry is F")?;
            let upper = if s2 == 0.0 { 0.0 } else { s2 / f };
            ensure(close(b2.a12(), upper), "B2 upper entry is sgn δ₂ / F")?;
            ensure(close(f + s1 * s2 / f, 2.0 * inv.kappa), "F + sgn(δ₁δ₂)/F = 2k")?;
            if s1 * s2 != 0.0 {
                ensure(f.abs() >= 1.0 - tol, "|F| ≥ 1")?;
            }
            if res.case_tag != CaseTag::OneA {
                ensure(close(f.abs(), 1.0) && close(f, inv.kappa), "F = k = ±1")?;
            }
        }
        CaseTag::OneB => {
            let k = inv.kappa;
            ensure(k.abs() < 1.0, "|k| < 1")?;
            ensure(
                inv.disc_sign1 == DiscSign::Positive && inv.disc_sign2 == DiscSign::Positive,
                "δ₁, δ₂ > 0",
            )?;
            let c = (1.0 - k * k).sqrt();
            ensure(
                close(b1.a11(), inv.tau1) && close(b1.a22(), inv.tau1),
                "B1 diagonal",
            )?;
            ensure(close(b1.a12(), 1.0) && close(b1.a21(), 1.0), "B1 off-diagonal")?;
            ensure(
                close(b2.a11(), inv.tau2 + c) && close(b2.a22(), inv.tau2 - c),
                "B2 diagonal",
            )?;
            ensure(close(b2.a12(), k) && close(b2.a21(), k), "B2 off-diagonal")?;
        }
        CaseTag::Two => {
            ensure(b1.a12() == 0.0 && b1.a21() == 0.0, "B1 diagonal")?;
            ensure(b2.a21() == 0.0, "B2 upper triangular")?;
        }
        CaseTag::ThreeDefective => {
            ensure(b1.a21() == 0.0 && b2.a21() == 0.0, "upper triangular")?;
            ensure(equal_diagonal(b1) && equal_diagonal(b2), "equal diagonals")?;
            ensure(close(b1.a11(), inv.tau1) && close(b2.a11(), inv.tau2), "diagonals are τᵢ")?;
        }
        CaseTag::ThreeScalar => {
            let scalar = |b: &Mat2| b.traceless().max_abs() <= tol * (1.0 + b.max_abs());
            ensure(scalar(b1) || scalar(b2), "one scalar factor")?;
        }
    }
    Ok(())
}
