//! Geometry of the S4 region.
//!
//! `Q(x) = det(A₁x, A₂x)` vanishes where the two vector fields are parallel.
//! For `Δ > 0` its zero set `𝒵` is a pair of lines `D₁`, `D₂`. The worst
//! trajectory follows, in each sector cut out by those lines, whichever
//! field turns least away from the outward radial direction, and switches
//! exactly on `𝒵`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{big_delta, InvariantSet};
use crate::lyapunov::sigma_polys;
use crate::mat2::{canonical_unit, cross, dot, norm, scale, Mat2, Vec2};

/// `𝒵 = D₁ ∪ D₂`, ordered so that `m1 ≥ m2` (a vertical line counts as the
/// largest slope and is reported as `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelSet {
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub directions: [Vec2; 2],
    pub direct: bool,
    /// `(q₁, q₂, q₃)` with `Q(x) = q₁x₁² + q₂x₁x₂ + q₃x₂²`.
    pub q_coeffs: (f64, f64, f64),
}

impl ParallelSet {
    pub fn q(&self, x: Vec2) -> f64 {
        let (q1, q2, q3) = self.q_coeffs;
        q1 * x[0] * x[0] + q2 * x[0] * x[1] + q3 * x[1] * x[1]
    }

    /// `q₂² − 4q₁q₃`.
    pub fn discriminant(&self) -> f64 {
        let (q1, q2, q3) = self.q_coeffs;
        q2 * q2 - 4.0 * q1 * q3
    }

    /// Index of the line containing `x`, if any, at relative tolerance `tol`.
    pub fn line_of(&self, x: Vec2, tol: f64) -> Option<usize> {
        let n = norm(x);
        (0..2)
            .map(|i| (i, cross(self.directions[i], x).abs()))
            .filter(|&(_, c)| c <= tol * n)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

pub fn q_coeffs(a1: &Mat2, a2: &Mat2) -> (f64, f64, f64) {
    let [[a, b], [c, d]] = a1.rows();
    let [[e, f], [g, h]] = a2.rows();
    (a * g - c * e, a * h + b * g - c * f - d * e, b * h - d * f)
}

fn slope(v: Vec2) -> Option<f64> {
    if v[0].abs() <= 1e-12 * norm(v) {
        None
    } else {
        Some(v[1] / v[0])
    }
}

pub fn parallel_set(a1: &Mat2, a2: &Mat2) -> Result<ParallelSet> {
    let bd = big_delta(a1, a2);
    if !(bd > 0.0) {
        return Err(Error::DeltaNonPositive { big_delta: bd });
    }
    let q_coeffs = q_coeffs(a1, a2);
    let (q1, q2, q3) = q_coeffs;
    // Q is an indefinite form; its null directions are √|λ₋| u₊ ± √λ₊ u₋ in
    // the eigenbasis of the symmetric matrix.
    let s = Mat2::new(q1, 0.5 * q2, 0.5 * q2, q3);
    let mean = 0.5 * (q1 + q3);
    let rad = (0.25 * (q1 - q3) * (q1 - q3) + 0.25 * q2 * q2).sqrt();
    let (lp, lm) = (mean + rad, mean - rad);
    if !(lp > 0.0 && lm < 0.0) {
        return Err(Error::DeltaNonPositive { big_delta: bd });
    }
    let up = s.null_vector(lp);
    let um = [-up[1], up[0]];
    let (wp, wm) = (lm.abs().sqrt(), lp.sqrt());
    let mut dirs = [
        canonical_unit([wp * up[0] + wm * um[0], wp * up[1] + wm * um[1]]),
        canonical_unit([wp * up[0] - wm * um[0], wp * up[1] - wm * um[1]]),
    ];
    let key = |v: Vec2| slope(v).unwrap_or(f64::INFINITY);
    if key(dirs[0]) < key(dirs[1]) {
        dirs.swap(0, 1);
    }
    Ok(ParallelSet {
        m1: slope(dirs[0]),
        m2: slope(dirs[1]),
        directions: dirs,
        direct: is_direct_pair(a1, a2),
        q_coeffs,
    })
}

/// Both eigenvalues of `A₂A₁⁻¹` are positive. They are real when `Δ > 0`.
fn is_direct_pair(a1: &Mat2, a2: &Mat2) -> bool {
    let Some(inv) = a1.inverse() else {
        return false;
    };
    let m = *a2 * inv;
    let (tr, det) = (m.trace(), m.det());
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let lo = 0.5 * (tr - disc);
    lo > 0.0 || (det > 0.0 && tr > 0.0)
}

/// On `𝒵` the two fields point the same way (direct) or opposite ways
/// (inverse); which one holds is the same at every point.
pub fn is_direct(_ps: &ParallelSet, a1: &Mat2, a2: &Mat2) -> bool {
    is_direct_pair(a1, a2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    /// 1 or 2: which field is followed.
    pub mode: u8,
    pub duration: f64,
    pub start: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstTrajectory {
    pub arcs: Vec<Arc>,
    /// `|x₁| / |x₀|` after the first return to the starting line.
    pub return_ratio: f64,
    pub start: Vec2,
    pub end: Vec2,
    /// `|x_end| / |x₀|` over all requested revolutions.
    pub final_ratio: f64,
    /// +1 counterclockwise, −1 clockwise.
    pub sense: i8,
}

impl WorstTrajectory {
    pub fn total_time(&self) -> f64 {
        self.arcs.iter().map(|a| a.duration).sum()
    }

    /// Summed duration of the arcs following field `mode` during the first
    /// revolution.
    pub fn first_revolution_time(&self, mode: u8) -> f64 {
        self.arcs
            .iter()
            .take(2)
            .filter(|a| a.mode == mode)
            .map(|a| a.duration)
            .sum()
    }

    /// Samples `(t, x, u)` with `per_arc + 1` points on every arc, where
    /// `u = 1` on `A₁` arcs and `u = 0` on `A₂` arcs. Arc endpoints are shared.
    pub fn samples(&self, a1: &Mat2, a2: &Mat2, per_arc: usize) -> Vec<(f64, Vec2, f64)> {
        let per_arc = per_arc.max(1);
        let mut out = Vec::with_capacity(self.arcs.len() * per_arc + 1);
        let mut t0 = 0.0;
        for (j, arc) in self.arcs.iter().enumerate() {
            let (a, u) = if arc.mode == 1 { (a1, 1.0) } else { (a2, 0.0) };
            let first = if j == 0 { 0 } else { 1 };
            for i in first..=per_arc {
                let s = arc.duration * i as f64 / per_arc as f64;
                out.push((t0 + s, a.expm(s).apply(arc.start), u));
            }
            t0 += arc.duration;
        }
        out
    }
}

/// Angle in `[0, 2π)` from `x` to `v`, measured in rotation sense `s`.
fn sensed_angle(x: Vec2, v: Vec2, s: f64) -> f64 {
    let a = (s * cross(x, v)).atan2(dot(x, v));
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

const MAX_MARCH_STEPS: usize = 200_000;

/// Time for the flow of `a` from `x` to reach the half-line through `target`
/// (unit) that lies ahead in sense `s`.
fn time_to_line(a: &Mat2, mode: u8, x: Vec2, target: Vec2, s: f64) -> Result<f64> {
    let f = |y: Vec2| s * cross(y, target);
    let h = 0.01 / a.norm().max(f64::MIN_POSITIVE);
    let step = a.expm(h);
    let bound = h * MAX_MARCH_STEPS as f64;
    let no_crossing = Error::NoCrossing {
        mode,
        time_bound: bound,
    };
    let mut y = x;
    let mut k = 0usize;
    loop {
        let next = step.apply(y);
        if !(next[0].is_finite() && next[1].is_finite()) || norm(next) == 0.0 {
            return Err(no_crossing);
        }
        k += 1;
        if f(next) <= 0.0 {
            break;
        }
        if k >= MAX_MARCH_STEPS {
            return Err(no_crossing);
        }
        y = next;
    }
    let flow = |t: f64| a.expm(t).apply(x);
    let (mut lo, mut hi) = ((k - 1) as f64 * h, k as f64 * h);
    // The march accumulates rounding; re-establish the bracket exactly.
    while f(flow(lo)) <= 0.0 && lo > 0.0 {
        lo = (lo - h).max(0.0);
    }
    while f(flow(hi)) > 0.0 {
        hi += h;
        if hi > bound {
            return Err(no_crossing);
        }
    }
    while hi - lo > 1e-14 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(flow(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    let y = flow(t);
    let dy = a.apply(y);
    let slope = s * cross(dy, target);
    if slope != 0.0 {
        let polished = t - f(y) / slope;
        if (lo - h * 1e-6..=hi + h * 1e-6).contains(&polished) {
            t = polished;
        }
    }
    if dot(flow(t), target) <= 0.0 {
        return Err(no_crossing);
    }
    Ok(t)
}

fn check_s4(a1: &Mat2, a2: &Mat2, op: &'static str) -> Result<()> {
    let inv = InvariantSet::compute(a1, a2)?;
    if !inv.s4_holds() {
        return Err(Error::WrongCase {
            op,
            expected: "S4",
            found: format!(
                "Γ − √(det₁det₂) = {:.3e}, tr(A₁A₂) + 2√(det₁det₂) = {:.3e}",
                inv.gamma_upper_margin(),
                inv.trace_margin()
            ),
        });
    }
    Ok(())
}

/// A unit starting point on `D₁`.
pub fn default_start(ps: &ParallelSet) -> Vec2 {
    ps.directions[0]
}

/// Builds `2 · revolutions` arcs of the worst trajectory from `x0 ∈ 𝒵`.
pub fn worst_trajectory(
    a1: &Mat2,
    a2: &Mat2,
    x0: Vec2,
    revolutions: usize,
) -> Result<WorstTrajectory> {
    check_s4(a1, a2, "worst_trajectory")?;
    if revolutions == 0 {
        return Err(Error::Precondition {
            op: "worst_trajectory",
            reason: "at least one revolution is required".into(),
        });
    }
    let ps = parallel_set(a1, a2)?;
    let Some(mut line) = ps.line_of(x0, 1e-8) else {
        return Err(Error::Precondition {
            op: "worst_trajectory",
            reason: format!("x0 = {x0:?} is not on the parallel set (Q = {:e})", ps.q(x0)),
        });
    };
    let x0_norm = norm(x0);
    let turn = cross(x0, a1.apply(x0));
    if turn == 0.0 {
        return Err(Error::Precondition {
            op: "worst_trajectory",
            reason: "x0 is an eigenvector of A1".into(),
        });
    }
    let s = turn.signum();
    let mut arcs = Vec::with_capacity(2 * revolutions);
    let mut x = x0;
    let mut return_ratio = f64::NAN;
    for j in 0..2 * revolutions {
        let other = ps.directions[1 - line];
        let target = if s * cross(x, other) > 0.0 {
            other
        } else {
            scale(other, -1.0)
        };
        let xu = scale(x, 1.0 / norm(x));
        let mid = [xu[0] + target[0], xu[1] + target[1]];
        let ang1 = sensed_angle(mid, a1.apply(mid), s);
        let ang2 = sensed_angle(mid, a2.apply(mid), s);
        let (mode, a) = if ang1 <= ang2 { (1u8, a1) } else { (2u8, a2) };
        let duration = time_to_line(a, mode, x, target, s)?;
        arcs.push(Arc {
            mode,
            duration,
            start: x,
        });
        // Snap onto the target line to stop drift across revolutions.
        let y = a.expm(duration).apply(x);
        x = scale(target, dot(y, target));
        line = 1 - line;
        if j == 1 {
            return_ratio = norm(x) / x0_norm;
        }
    }
    Ok(WorstTrajectory {
        arcs,
        return_ratio,
        start: x0,
        end: x,
        final_ratio: norm(x) / x0_norm,
        sense: s as i8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnstableDirection {
    pub sigma0: f64,
    pub direction: Vec2,
    pub eigenvalue: f64,
}

/// In case S2 the averaged matrix `σ₀A₁ + (1−σ₀)A₂` has negative determinant,
/// hence a positive real eigenvalue; returns it with its unit eigenvector.
pub fn unstable_direction(a1: &Mat2, a2: &Mat2) -> Result<UnstableDirection> {
    let inv = InvariantSet::compute(a1, a2)?;
    let wrong = || Error::WrongCase {
        op: "unstable_direction",
        expected: "S2",
        found: format!("Γ + √(det₁det₂) = {:.3e}", inv.gamma_lower_margin()),
    };
    if !inv.s2_holds() {
        return Err(wrong());
    }
    let polys = sigma_polys(a1, a2)?;
    let sigma0 = polys.sigma0.ok_or_else(wrong)?;
    let m = a1.scale(sigma0) + a2.scale(1.0 - sigma0);
    let (tr, det) = (m.trace(), m.det());
    if !(det < 0.0) {
        return Err(wrong());
    }
    let eigenvalue = 0.5 * tr + (0.25 * tr * tr - det).sqrt();
    Ok(UnstableDirection {
        sigma0,
        direction: canonical_unit(m.null_vector(eigenvalue)),
        eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariants::switch_times;
    use crate::normal_form::canonical_pair;
    use proptest::prelude::*;

    fn m(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
        Mat2::new(a, b, c, d)
    }

    fn symmetric() -> (Mat2, Mat2) {
        (m(-0.1, 1.0, -1.0, -0.1), m(-0.1, 0.5, -2.0, -0.1))
    }

    /// A normal-form S4 pair with `F` chosen as the larger-magnitude root.
    fn s4_pair(tau1: f64, tau2: f64, s1: f64, s2: f64, extra: f64) -> (Mat2, Mat2) {
        let g = ((tau1 * tau1 - s1) * (tau2 * tau2 - s2)).sqrt();
        let k = -tau1 * tau2 - g - extra;
        let p = s1 * s2;
        let f = if p == 0.0 {
            2.0 * k
        } else {
            k - (k * k - p).sqrt()
        };
        canonical_pair(tau1, tau2, s1, s2, f)
    }

    #[test]
    fn axes_for_diagonal_pair() {
        let ps = parallel_set(&Mat2::diag(-1.0, -2.0), &Mat2::diag(-2.0, -1.0)).unwrap();
        assert_eq!(ps.q_coeffs, (0.0, -3.0, 0.0));
        let mut dirs = ps.directions;
        dirs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(norm([dirs[0][0], dirs[0][1] - 1.0]) < 1e-12);
        assert!(norm([dirs[1][0] - 1.0, dirs[1][1]]) < 1e-12);
    }

    #[test]
    fn inverse_for_s2_pair() {
        let (a1, a2) = (m(-1.0, 10.0, 0.0, -1.0), m(-1.0, 0.0, 10.0, -1.0));
        let ps = parallel_set(&a1, &a2).unwrap();
        assert!(!ps.direct);
        for v in ps.directions {
            let (p, q) = (a1.apply(v), a2.apply(v));
            assert!(cross(p, q).abs() < 1e-10 * norm(p) * norm(q));
            assert!(dot(p, q) < 0.0);
        }
    }

    #[test]
    fn rejects_nonpositive_delta() {
        let a = m(-1.0, 2.0, -3.0, -1.0);
        assert!(matches!(
            parallel_set(&a, &a),
            Err(Error::DeltaNonPositive { .. })
        ));
    }

    #[test]
    fn symmetric_pair_matches_analytic_values() {
        let (a1, a2) = symmetric();
        let ps = parallel_set(&a1, &a2).unwrap();
        assert!(ps.direct);
        let w = worst_trajectory(&a1, &a2, default_start(&ps), 1).unwrap();
        let inv = InvariantSet::compute(&a1, &a2).unwrap().with_return_ratio().unwrap();
        let (t1, t2) = switch_times(&inv).unwrap();
        let (al1, al2) = inv.time_scales();
        assert!((w.first_revolution_time(1) * al1 - t1).abs() < 1e-9);
        assert!((w.first_revolution_time(2) * al2 - t2).abs() < 1e-9);
        assert!((w.return_ratio - 1.465671).abs() < 1e-6);
        let r = inv.r_value.unwrap();
        assert!((w.return_ratio - r).abs() < 1e-9 * r);
    }

    #[test]
    fn arcs_join_on_the_parallel_set() {
        let (a1, a2) = s4_pair(-1.3, -0.2, 1.0, -1.0, 0.4);
        let ps = parallel_set(&a1, &a2).unwrap();
        let w = worst_trajectory(&a1, &a2, default_start(&ps), 3).unwrap();
        assert_eq!(w.arcs.len(), 6);
        for pair in w.arcs.windows(2) {
            let a = if pair[0].mode == 1 { a1 } else { a2 };
            let end = a.expm(pair[0].duration).apply(pair[0].start);
            assert!(norm([end[0] - pair[1].start[0], end[1] - pair[1].start[1]]) < 1e-10 * norm(end));
            assert!(ps.line_of(pair[1].start, 1e-10).is_some());
            assert_ne!(pair[0].mode, pair[1].mode);
        }
        let expect = w.return_ratio.powi(3);
        assert!((w.final_ratio - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn rotation_is_monotone() {
        let (a1, a2) = symmetric();
        let ps = parallel_set(&a1, &a2).unwrap();
        let w = worst_trajectory(&a1, &a2, default_start(&ps), 2).unwrap();
        let s = w.samples(&a1, &a2, 200);
        for pair in s.windows(2) {
            assert!(w.sense as f64 * cross(pair[0].1, pair[1].1) > 0.0);
        }
    }

    #[test]
    fn return_ratio_is_homogeneous() {
        let (a1, a2) = s4_pair(-0.5, -0.4, -1.0, 0.0, 0.2);
        let ps = parallel_set(&a1, &a2).unwrap();
        let x = default_start(&ps);
        let r1 = worst_trajectory(&a1, &a2, x, 1).unwrap().return_ratio;
        let r2 = worst_trajectory(&a1, &a2, scale(x, 2.0), 1).unwrap().return_ratio;
        assert!((r1 - r2).abs() < 1e-12 * r1);
    }

    #[test]
    fn requires_s4_and_start_on_lines() {
        let (a1, a2) = symmetric();
        assert!(matches!(
            worst_trajectory(&a1, &a2, [1.0, 0.3], 1),
            Err(Error::Precondition { .. })
        ));
        let b = m(-1.0, 0.0, 0.0, -2.0);
        assert!(matches!(
            worst_trajectory(&b, &b.transpose(), [1.0, 0.0], 1),
            Err(Error::WrongCase { .. })
        ));
    }

    #[test]
    fn slope_ordering_in_normal_form() {
        for &(t1, t2, extra) in &[(-1.2, -1.5, 0.1), (-1.1, -2.0, 1.0), (-3.0, -1.3, 0.05)] {
            let (b1, b2) = s4_pair(t1, t2, 1.0, 1.0, extra);
            let f = b2.a21();
            let ps = parallel_set(&b1, &b2).unwrap();
            let (m1, m2) = (ps.m1.unwrap(), ps.m2.unwrap());
            assert!(f < m2 && m2 < -1.0 && 1.0 < m1 && m1 < -f, "{f} {m1} {m2}");
            for mi in [m1, m2] {
                assert!(mi * mi - 1.0 > 0.0);
                assert!(f * f - mi * mi > 0.0);
            }
        }
    }

    #[test]
    fn unstable_direction_example() {
        let (a1, a2) = (m(-1.0, 10.0, 0.0, -1.0), m(-1.0, 0.0, 10.0, -1.0));
        let u = unstable_direction(&a1, &a2).unwrap();
        assert!((u.sigma0 - 0.5).abs() < 1e-12);
        assert!((u.eigenvalue - 4.0).abs() < 1e-10);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(norm([u.direction[0] - h, u.direction[1] - h]) < 1e-12);
        let mm = a1.scale(0.5) + a2.scale(0.5);
        let r = mm.apply(u.direction);
        assert!(norm([r[0] - 4.0 * u.direction[0], r[1] - 4.0 * u.direction[1]]) < 1e-10);
        let (b1, b2) = symmetric();
        assert!(matches!(
            unstable_direction(&b1, &b2),
            Err(Error::WrongCase { .. })
        ));
    }

    fn entry() -> impl Strategy<Value = f64> {
        -3.0..3.0f64
    }

    proptest! {
        #[test]
        fn q_discriminant_is_big_delta(
            a in entry(), b in entry(), c in entry(), d in entry(),
            e in entry(), f in entry(), g in entry(), h in entry(),
        ) {
            let (a1, a2) = (m(a, b, c, d), m(e, f, g, h));
            let (q1, q2, q3) = q_coeffs(&a1, &a2);
            let disc = q2 * q2 - 4.0 * q1 * q3;
            let bd = big_delta(&a1, &a2);
            let scale = (a1.norm() * a2.norm()).powi(2);
            prop_assert!((disc - bd).abs() <= 1e-9 * scale.max(1e-300));
        }

        #[test]
        fn lines_are_eigen_directions_of_the_quotient(
            a in entry(), b in entry(), c in entry(), d in entry(),
            e in entry(), f in entry(), g in entry(), h in entry(),
        ) {
            let (a1, a2) = (m(a, b, c, d), m(e, f, g, h));
            prop_assume!(a1.det().abs() > 0.1 && a1.det() * a2.det() > 0.01);
            prop_assume!(big_delta(&a1, &a2) > 1e-3 * (a1.norm() * a2.norm()).powi(2));
            let ps = parallel_set(&a1, &a2).unwrap();
            let tol = 1e-10 * a1.norm() * a2.norm();
            for v in ps.directions {
                prop_assert!(ps.q(v).abs() <= tol);
                let (p, q) = (a1.apply(v), a2.apply(v));
                let alpha = dot(p, q) / dot(p, p);
                let r = [q[0] - alpha * p[0], q[1] - alpha * p[1]];
                prop_assert!(norm(r) < 1e-9 * (1.0 + norm(q)));
                prop_assert_eq!(alpha > 0.0, ps.direct);
            }
        }
    }
}
