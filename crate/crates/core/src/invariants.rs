//! Coordinate-invariant scalars of a matrix pair.
//!
//! `Γ(X, Y) = ½(tr X tr Y − tr XY)` is the central quantity; the remaining
//! invariants (`τᵢ`, `k`, `Δ`, the switching times `tᵢ` and the return ratio
//! `ℛ`) are built from traces, determinants and `Γ`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::{DiscSign, Mat2};

/// `½(tr X tr Y − tr XY)`.
pub fn gamma(x: &Mat2, y: &Mat2) -> f64 {
    0.5 * (x.trace() * y.trace() - (*x * *y).trace())
}

/// `4(Γ(A₁,A₂)² − det A₁ det A₂)`.
pub fn big_delta(a1: &Mat2, a2: &Mat2) -> f64 {
    let g = gamma(a1, a2);
    4.0 * (g * g - a1.det() * a2.det())
}

/// The normalized traces `(τ₁, τ₂)`.
///
/// Each trace is divided by `√|δ|` of its own matrix when both discriminants
/// are nonzero, by `√|δ|` of the nondegenerate matrix when exactly one
/// vanishes, and by 2 when both vanish.
pub fn taus(a1: &Mat2, a2: &Mat2) -> (f64, f64) {
    let (d1, d2) = (a1.discriminant(), a2.discriminant());
    let (z1, z2) = (
        a1.disc_sign() == DiscSign::Zero,
        a2.disc_sign() == DiscSign::Zero,
    );
    let (s1, s2) = match (z1, z2) {
        (false, false) => (d1.abs().sqrt(), d2.abs().sqrt()),
        (true, false) => (d2.abs().sqrt(), d2.abs().sqrt()),
        (false, true) => (d1.abs().sqrt(), d1.abs().sqrt()),
        (true, true) => (2.0, 2.0),
    };
    (a1.trace() / s1, a2.trace() / s2)
}

/// `k = (2τ₁τ₂ / (tr A₁ tr A₂)) · (tr A₁A₂ − ½ tr A₁ tr A₂)`.
pub fn kappa(a1: &Mat2, a2: &Mat2) -> Result<f64> {
    let (tr1, tr2) = (a1.trace(), a2.trace());
    if tr1 == 0.0 {
        return Err(Error::TraceZero { which: 1 });
    }
    if tr2 == 0.0 {
        return Err(Error::TraceZero { which: 2 });
    }
    let (t1, t2) = taus(a1, a2);
    let tr12 = (*a1 * *a2).trace();
    Ok(2.0 * t1 * t2 / (tr1 * tr2) * (tr12 - 0.5 * tr1 * tr2))
}

/// Every invariant of the pair, plus the S4-only switching times and return
/// ratio once they have been computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSet {
    pub gamma: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub disc_sign1: DiscSign,
    pub disc_sign2: DiscSign,
    pub tau1: f64,
    pub tau2: f64,
    pub kappa: f64,
    pub big_delta: f64,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub r_value: Option<f64>,
    pub det1: f64,
    pub det2: f64,
    pub tr1: f64,
    pub tr2: f64,
    pub tr12: f64,
    pub geo_mean_det: f64,
}

impl InvariantSet {
    pub fn compute(a1: &Mat2, a2: &Mat2) -> Result<Self> {
        let kappa = kappa(a1, a2)?;
        let (tau1, tau2) = taus(a1, a2);
        let (det1, det2) = (a1.det(), a2.det());
        let gamma = gamma(a1, a2);
        Ok(InvariantSet {
            gamma,
            delta1: a1.discriminant(),
            delta2: a2.discriminant(),
            disc_sign1: a1.disc_sign(),
            disc_sign2: a2.disc_sign(),
            tau1,
            tau2,
            kappa,
            big_delta: big_delta(a1, a2),
            t1: None,
            t2: None,
            r_value: None,
            det1,
            det2,
            tr1: a1.trace(),
            tr2: a2.trace(),
            tr12: (*a1 * *a2).trace(),
            geo_mean_det: (det1 * det2).sqrt(),
        })
    }

    /// `Γ + √(det₁det₂)`: zero on the S3 boundary, negative in S2.
    pub fn gamma_lower_margin(&self) -> f64 {
        self.gamma + self.geo_mean_det
    }

    /// `Γ − √(det₁det₂)`: positive is required for S4.
    pub fn gamma_upper_margin(&self) -> f64 {
        self.gamma - self.geo_mean_det
    }

    /// `tr(A₁A₂) + 2√(det₁det₂)`: positive in S1, nonpositive in S4.
    pub fn trace_margin(&self) -> f64 {
        self.tr12 + 2.0 * self.geo_mean_det
    }

    pub fn s1_holds(&self) -> bool {
        self.gamma_lower_margin() > 0.0 && self.trace_margin() > 0.0
    }

    pub fn s2_holds(&self) -> bool {
        self.gamma_lower_margin() < 0.0
    }

    pub fn s4_holds(&self) -> bool {
        self.gamma_upper_margin() > 0.0 && self.trace_margin() <= 0.0
    }

    /// Factors `αᵢ = tr Aᵢ / (2τᵢ)` such that `Aᵢ/αᵢ` has trace `2τᵢ`.
    /// Times in the normalized pair are original times multiplied by `αᵢ`.
    pub fn time_scales(&self) -> (f64, f64) {
        (
            self.tr1 / (2.0 * self.tau1),
            self.tr2 / (2.0 * self.tau2),
        )
    }

    /// Fills `t1`, `t2` and `r_value`. Only defined in the S4 region.
    pub fn with_return_ratio(mut self) -> Result<Self> {
        let (t1, t2) = switch_times(&self)?;
        let prefactor = (2.0 * self.gamma + self.big_delta.sqrt()) / (2.0 * self.geo_mean_det);
        self.t1 = Some(t1);
        self.t2 = Some(t2);
        self.r_value = Some(prefactor * (self.tau1 * t1 + self.tau2 * t2).exp());
        Ok(self)
    }
}

/// Inverse hyperbolic tangent with an explicit domain check.
fn atanh_checked(x: f64) -> Result<f64> {
    if !(x > -1.0 && x < 1.0) {
        return Err(Error::Domain {
            what: "arctanh",
            value: x,
        });
    }
    Ok(0.5 * ((1.0 + x) / (1.0 - x)).ln())
}

/// Normalized times `(t₁, t₂)` spent on each field by the worst trajectory
/// during one return to its starting line.
pub fn switch_times(inv: &InvariantSet) -> Result<(f64, f64)> {
    if !(inv.big_delta > 0.0) {
        return Err(Error::Precondition {
            op: "switch_times",
            reason: format!("requires Δ > 0, got {}", inv.big_delta),
        });
    }
    if !inv.s4_holds() {
        return Err(Error::Precondition {
            op: "switch_times",
            reason: format!(
                "S4 inequalities fail (Γ − √(det₁det₂) = {}, tr(A₁A₂) + 2√(det₁det₂) = {})",
                inv.gamma_upper_margin(),
                inv.trace_margin()
            ),
        });
    }
    let taus = [inv.tau1, inv.tau2];
    let signs = [inv.disc_sign1, inv.disc_sign2];
    let trtr = inv.tr1 * inv.tr2;
    let tt = inv.tau1 * inv.tau2;
    let sqrt_delta = inv.big_delta.sqrt();
    let mut out = [0.0; 2];
    for i in 0..2 {
        let (own, other) = (taus[i], taus[1 - i]);
        out[i] = match signs[i] {
            DiscSign::Negative => {
                FRAC_PI_2 - (trtr * (inv.kappa * own + other) / (2.0 * tt * sqrt_delta)).atan()
            }
            DiscSign::Positive => {
                atanh_checked(2.0 * tt * sqrt_delta / (trtr * (inv.kappa * own - other)))?
            }
            // Leading factor 1: confirmed against the event-located arc times
            // of the worst trajectory.
            DiscSign::Zero => sqrt_delta / ((inv.tr12 - 0.5 * trtr) * own),
        };
    }
    Ok((out[0], out[1]))
}

/// `ℛ = (2Γ + √Δ) / (2√(det₁det₂)) · e^{τ₁t₁ + τ₂t₂}`; S4 only.
pub fn r_value(a1: &Mat2, a2: &Mat2) -> Result<f64> {
    let inv = InvariantSet::compute(a1, a2)?.with_return_ratio()?;
    Ok(inv.r_value.expect("filled by with_return_ratio"))
}
