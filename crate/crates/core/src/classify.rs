//! The decision procedure.
//!
//! With `g = √(det₁det₂)`:
//!
//! | case | condition |
//! |------|-----------|
//! | S3 | `|Γ + g| ≤ ε_b` |
//! | S2 | `Γ < −g` |
//! | S1 | `Γ > −g` and `tr(A₁A₂) > −2g` |
//! | S4 | `Γ > g` and `tr(A₁A₂) ≤ −2g`, split by `ℛ ⋚ 1` |
//!
//! The conditions are tested in that order, which makes the four regions a
//! partition of the Hurwitz pairs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::InvariantSet;
use crate::lyapunov::{nonstrict_clf_s3, quadratic_clf_witness, QuadraticForm, WITNESS_GRID, WITNESS_SAMPLES};
use crate::mat2::Mat2;
use crate::normal_form::normalize;
use crate::worst_traj::{
    default_start, parallel_set, unstable_direction, worst_trajectory, UnstableDirection,
    WorstTrajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    #[serde(rename = "S1-quadratic-LF")]
    S1QuadraticLf,
    #[serde(rename = "S2-unbounded")]
    S2Unbounded,
    #[serde(rename = "S3-marginal")]
    S3Marginal,
    #[serde(rename = "S4-GUAS")]
    S4Guas,
    #[serde(rename = "S4-marginal")]
    S4Marginal,
    #[serde(rename = "S4-unbounded")]
    S4Unbounded,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::S1QuadraticLf => "S1-quadratic-LF",
            Case::S2Unbounded => "S2-unbounded",
            Case::S3Marginal => "S3-marginal",
            Case::S4Guas => "S4-GUAS",
            Case::S4Marginal => "S4-marginal",
            Case::S4Unbounded => "S4-unbounded",
        }
    }

    pub fn is_s4(self) -> bool {
        matches!(self, Case::S4Guas | Case::S4Marginal | Case::S4Unbounded)
    }

    /// Some trajectory grows without bound.
    pub fn is_unbounded(self) -> bool {
        matches!(self, Case::S2Unbounded | Case::S4Unbounded)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    QuadraticLf { witness: Option<QuadraticForm> },
    UnstableDirection(UnstableDirection),
    NonstrictLf { form: QuadraticForm, band: f64 },
    WorstTrajectory {
        trajectory: WorstTrajectory,
        r_analytic: f64,
        r_numeric: f64,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "kebab-case")]
pub enum Flag {
    NearBoundary { boundary: String, distance: f64 },
    CrossCheckFailure {
        r_analytic: f64,
        r_numeric: f64,
        rel_error: f64,
    },
    WitnessNotFound { budget: usize },
    CertificateUnavailable { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyOptions {
    /// Relative half-width of the S3 band: `ε_b = s3_band·(1 + det₁det₂)`.
    pub s3_band: f64,
    /// `|ℛ − 1| ≤ r_band` is reported as S4-marginal.
    pub r_band: f64,
    /// Allowed relative gap between analytic and numeric `ℛ`.
    pub cross_check_tol: f64,
    /// Run the numeric witness search in case S1.
    pub witness: bool,
    /// Relative margin below which a `NearBoundary` flag is raised.
    pub boundary_warn: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            s3_band: 1e-9,
            r_band: 1e-9,
            cross_check_tol: 1e-4,
            witness: true,
            boundary_warn: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub case: Case,
    pub invariants: InvariantSet,
    pub certificate: Certificate,
    pub flags: Vec<Flag>,
    /// Absolute S3 band used for this pair.
    pub s3_band: f64,
}

fn near_boundary_flags(inv: &InvariantSet, opts: &ClassifyOptions) -> Vec<Flag> {
    let scale = inv.gamma.abs().max(inv.geo_mean_det).max(f64::MIN_POSITIVE);
    [
        ("Γ + √(det₁det₂)", inv.gamma_lower_margin()),
        ("tr(A₁A₂) + 2√(det₁det₂)", inv.trace_margin()),
    ]
    .into_iter()
    .filter(|(_, m)| m.abs() <= opts.boundary_warn * scale)
    .map(|(b, m)| Flag::NearBoundary {
        boundary: b.to_string(),
        distance: m,
    })
    .collect()
}

pub fn classify(a1: &Mat2, a2: &Mat2, opts: &ClassifyOptions) -> Result<Verdict> {
    for (which, a) in [(1u8, a1), (2u8, a2)] {
        if !a.is_finite() {
            return Err(Error::Input(format!("A{which} has non-finite entries")));
        }
        if !a.is_hurwitz(0.0) {
            return Err(Error::NotHurwitz {
                which,
                trace: a.trace(),
                det: a.det(),
            });
        }
    }
    let inv = InvariantSet::compute(a1, a2)?;
    let band = opts.s3_band * (1.0 + inv.det1 * inv.det2);
    let mut flags = near_boundary_flags(&inv, opts);
    let lower = inv.gamma_lower_margin();

    if lower.abs() <= band {
        let certificate = match normalize(a1, a2).and_then(|nf| {
            let b = band / (nf.alpha1 * nf.alpha2);
            nonstrict_clf_s3(&nf, b)
        }) {
            Ok(form) => Certificate::NonstrictLf { form, band },
            Err(e) => {
                flags.push(Flag::CertificateUnavailable {
                    reason: e.to_string(),
                });
                Certificate::None
            }
        };
        return Ok(Verdict {
            case: Case::S3Marginal,
            invariants: inv,
            certificate,
            flags,
            s3_band: band,
        });
    }

    if lower < 0.0 {
        let certificate = match unstable_direction(a1, a2) {
            Ok(u) => Certificate::UnstableDirection(u),
            Err(e) => {
                flags.push(Flag::CertificateUnavailable {
                    reason: e.to_string(),
                });
                Certificate::None
            }
        };
        return Ok(Verdict {
            case: Case::S2Unbounded,
            invariants: inv,
            certificate,
            flags,
            s3_band: band,
        });
    }

    if inv.trace_margin() > 0.0 {
        let witness = if opts.witness {
            match quadratic_clf_witness(a1, a2) {
                Ok(q) => Some(q),
                Err(_) => {
                    flags.push(Flag::WitnessNotFound {
                        budget: WITNESS_GRID + WITNESS_SAMPLES,
                    });
                    None
                }
            }
        } else {
            None
        };
        return Ok(Verdict {
            case: Case::S1QuadraticLf,
            invariants: inv,
            certificate: Certificate::QuadraticLf { witness },
            flags,
            s3_band: band,
        });
    }

    let inv = inv.with_return_ratio()?;
    let r = inv.r_value.expect("filled by with_return_ratio");
    let case = if (r - 1.0).abs() <= opts.r_band {
        Case::S4Marginal
    } else if r < 1.0 {
        Case::S4Guas
    } else {
        Case::S4Unbounded
    };
    if (r - 1.0).abs() <= opts.boundary_warn {
        flags.push(Flag::NearBoundary {
            boundary: "ℛ − 1".into(),
            distance: r - 1.0,
        });
    }
    let traj = parallel_set(a1, a2)
        .and_then(|ps| worst_trajectory(a1, a2, default_start(&ps), 1));
    let certificate = match traj {
        Ok(trajectory) => {
            let r_numeric = trajectory.return_ratio;
            let rel_error = (r_numeric - r).abs() / r;
            if !(rel_error <= opts.cross_check_tol) {
                flags.push(Flag::CrossCheckFailure {
                    r_analytic: r,
                    r_numeric,
                    rel_error,
                });
            }
            Certificate::WorstTrajectory {
                trajectory,
                r_analytic: r,
                r_numeric,
            }
        }
        Err(e) => {
            flags.push(Flag::CertificateUnavailable {
                reason: e.to_string(),
            });
            Certificate::None
        }
    };
    Ok(Verdict {
        case,
        invariants: inv,
        certificate,
        flags,
        s3_band: band,
    })
}

impl Verdict {
    pub fn has_cross_check_failure(&self) -> bool {
        self.flags
            .iter()
            .any(|f| matches!(f, Flag::CrossCheckFailure { .. }))
    }
}

/// Human-readable account of a verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub case: Case,
    pub rule: String,
    pub margins: Vec<(String, f64)>,
    pub details: Vec<String>,
}

impl fmt::Display for Explanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "case: {}", self.case)?;
        writeln!(f, "rule: {}", self.rule)?;
        for (name, v) in &self.margins {
            writeln!(f, "  {name} = {v:.6e}")?;
        }
        for d in &self.details {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

pub fn explain(v: &Verdict) -> Explanation {
    let inv = &v.invariants;
    let margins = vec![
        ("Γ + √(det₁det₂)".to_string(), inv.gamma_lower_margin()),
        ("Γ − √(det₁det₂)".to_string(), inv.gamma_upper_margin()),
        ("tr(A₁A₂) + 2√(det₁det₂)".to_string(), inv.trace_margin()),
    ];
    let rule = match v.case {
        Case::S1QuadraticLf => "Γ > −√(det₁det₂) and tr(A₁A₂) > −2√(det₁det₂)",
        Case::S2Unbounded => "Γ < −√(det₁det₂)",
        Case::S3Marginal => "|Γ + √(det₁det₂)| within the S3 band",
        Case::S4Guas => "Γ > √(det₁det₂), tr(A₁A₂) ≤ −2√(det₁det₂), ℛ < 1",
        Case::S4Marginal => "Γ > √(det₁det₂), tr(A₁A₂) ≤ −2√(det₁det₂), ℛ = 1 within band",
        Case::S4Unbounded => "Γ > √(det₁det₂), tr(A₁A₂) ≤ −2√(det₁det₂), ℛ > 1",
    }
    .to_string();
    let mut details = Vec::new();
    match &v.certificate {
        Certificate::QuadraticLf { witness: Some(q) } => details.push(format!(
            "witness P = [[{:.6}, {:.6}], [{:.6}, {:.6}]]",
            q.p11, q.p12, q.p12, q.p22
        )),
        Certificate::QuadraticLf { witness: None } => {
            details.push("quadratic LF exists; no witness attached".into())
        }
        Certificate::UnstableDirection(u) => details.push(format!(
            "σ₀ = {:.6}, eigenvalue {:.6} along [{:.6}, {:.6}]",
            u.sigma0, u.eigenvalue, u.direction[0], u.direction[1]
        )),
        Certificate::NonstrictLf { form, band } => {
            details.push(format!("band width used: {band:.3e}"));
            details.push(format!(
                "nonstrict P = [[{:.6}, {:.6}], [{:.6}, {:.6}]]",
                form.p11, form.p12, form.p12, form.p22
            ));
        }
        Certificate::WorstTrajectory {
            r_analytic,
            r_numeric,
            ..
        } => {
            details.push(format!("ℛ analytic = {r_analytic:.9}"));
            details.push(format!("ℛ numeric = {r_numeric:.9}"));
        }
        Certificate::None => details.push("no certificate".into()),
    }
    if let (Some(t1), Some(t2)) = (inv.t1, inv.t2) {
        details.push(format!("t₁ = {t1:.9}, t₂ = {t2:.9}"));
    }
    for flag in &v.flags {
        details.push(format!("flag: {}", serde_json::to_string(flag).unwrap_or_default()));
    }
    Explanation {
        case: v.case,
        rule,
        margins,
        details,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_form::canonical_pair;
    use proptest::prelude::*;

    fn m(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
        Mat2::new(a, b, c, d)
    }

    fn run(a1: Mat2, a2: Mat2) -> Verdict {
        classify(&a1, &a2, &ClassifyOptions::default()).unwrap()
    }

    #[test]
    fn minus_identity_is_s1() {
        let v = run(-Mat2::identity(), -Mat2::identity());
        assert_eq!(v.case, Case::S1QuadraticLf);
        assert!(matches!(v.certificate, Certificate::QuadraticLf { witness: Some(_) }));
    }

    #[test]
    fn s2_example() {
        let v = run(m(-1.0, 10.0, 0.0, -1.0), m(-1.0, 0.0, 10.0, -1.0));
        assert_eq!(v.case, Case::S2Unbounded);
        assert_eq!(v.invariants.gamma, -49.0);
        let Certificate::UnstableDirection(u) = v.certificate else {
            panic!("expected a direction");
        };
        assert!((u.direction[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn symmetric_s4_is_unbounded() {
        let v = run(m(-0.1, 1.0, -1.0, -0.1), m(-0.1, 0.5, -2.0, -0.1));
        assert_eq!(v.case, Case::S4Unbounded);
        assert!(v.flags.is_empty(), "{:?}", v.flags);
        let r = v.invariants.r_value.unwrap();
        assert!((r - 1.466).abs() < 1e-3);
        let e = explain(&v);
        assert!(e.details.iter().any(|d| d.contains("ℛ numeric")));
        assert!(e.details.iter().any(|d| d.contains("t₁")));
    }

    #[test]
    fn s3_and_s4_guas_instances() {
        // Γ = −√(det₁det₂) exactly: τ₁ = τ₂ = −1/2, δᵢ < 0, F = k ± √(k² − 1)
        let (t1, t2) = (-0.5, -0.5);
        let g = 1.25;
        let k: f64 = t1 * t2 + g;
        let (b1, b2) = canonical_pair(t1, t2, -1.0, -1.0, k + (k * k - 1.0).sqrt());
        let v = run(b1, b2);
        assert_eq!(v.case, Case::S3Marginal);
        assert!(matches!(v.certificate, Certificate::NonstrictLf { .. }));
        assert!(explain(&v).details[0].contains("band"));

        let (b1, b2) = canonical_pair(-1.0, -1.0, -1.0, -1.0, -3.5 - (3.5f64 * 3.5 - 1.0).sqrt());
        let v = run(b1, b2);
        assert_eq!(v.case, Case::S4Guas);
        assert!(v.invariants.r_value.unwrap() < 1.0);
    }

    #[test]
    fn s1_explanation_lists_margins() {
        let v = run(m(-1.0, 0.5, 0.0, -2.0), m(-1.5, 0.0, 0.3, -1.0));
        assert_eq!(v.case, Case::S1QuadraticLf);
        let e = explain(&v);
        assert_eq!(e.margins.len(), 3);
        assert!(e.margins[0].1 > 0.0 && e.margins[2].1 > 0.0);
        assert!(e.to_string().contains("S1-quadratic-LF"));
    }

    #[test]
    fn rejects_non_hurwitz() {
        let err = classify(&m(1.0, 0.0, 0.0, -1.0), &-Mat2::identity(), &ClassifyOptions::default());
        assert!(matches!(err, Err(Error::NotHurwitz { which: 1, .. })));
    }

    #[test]
    fn case_names_serialize() {
        assert_eq!(serde_json::to_string(&Case::S4Guas).unwrap(), "\"S4-GUAS\"");
        assert_eq!(
            serde_json::to_string(&Case::S1QuadraticLf).unwrap(),
            "\"S1-quadratic-LF\""
        );
    }

    fn hurwitz() -> impl Strategy<Value = Mat2> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)
            .prop_map(|(a, b, c, d)| m(a, b, c, d))
            .prop_filter("Hurwitz", |a| a.trace() < -0.05 && a.det() > 0.05)
    }

    proptest! {
        #[test]
        fn exactly_one_region(a1 in hurwitz(), a2 in hurwitz()) {
            let opts = ClassifyOptions { witness: false, ..ClassifyOptions::default() };
            let v = classify(&a1, &a2, &opts).unwrap();
            let inv = &v.invariants;
            let fired = [
                inv.gamma_lower_margin().abs() <= v.s3_band,
                inv.s2_holds() && inv.gamma_lower_margin().abs() > v.s3_band,
                inv.s1_holds() && inv.gamma_lower_margin().abs() > v.s3_band,
                inv.s4_holds(),
            ];
            prop_assert_eq!(fired.iter().filter(|b| **b).count(), 1);
            let expect = fired.iter().position(|b| *b).unwrap();
            let got = match v.case {
                Case::S3Marginal => 0,
                Case::S2Unbounded => 1,
                Case::S1QuadraticLf => 2,
                _ => 3,
            };
            prop_assert_eq!(expect, got);
        }

        #[test]
        fn lemma_one_rescaling(
            a1 in hurwitz(), a2 in hurwitz(),
            i in 0usize..3, j in 0usize..3,
        ) {
            let scales = [0.1, 1.0, 10.0];
            let opts = ClassifyOptions { witness: false, ..ClassifyOptions::default() };
            let v = classify(&a1, &a2, &opts).unwrap();
            let w = classify(&a1.scale(1.0 / scales[i]), &a2.scale(1.0 / scales[j]), &opts).unwrap();
            prop_assert_eq!(v.case, w.case);
        }
    }
}
