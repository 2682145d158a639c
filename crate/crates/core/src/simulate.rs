//! Exact simulation of `ẋ = (uA₁ + (1−u)A₂)x` for piecewise-constant `u`.
//!
//! Every piece is propagated with a closed-form matrix exponential, so the
//! only error is rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::sigma_polys;
use crate::mat2::{cross, dot, norm, Mat2, Vec2};

/// Piecewise-constant control: `values[i]` holds on
/// `[breakpoints[i], breakpoints[i+1])`, the last value forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl SwitchingSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let bad = |reason: String| Error::Precondition {
            op: "SwitchingSignal::new",
            reason,
        };
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(bad(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(bad("first breakpoint must be 0".into()));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(bad(format!("breakpoints not increasing at {}", w[1])));
        }
        if let Some(u) = values.iter().find(|u| !(0.0..=1.0).contains(*u)) {
            return Err(bad(format!("control value {u} outside [0, 1]")));
        }
        Ok(SwitchingSignal { breakpoints, values })
    }

    pub fn constant(u: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![u])
    }

    /// Bang-bang signal `1, 0, 1, 0, …` with each value held for `period / 2`.
    pub fn periodic(period: f64, horizon: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::Precondition {
                op: "SwitchingSignal::periodic",
                reason: format!("period must be positive, got {period}"),
            });
        }
        let n = (2.0 * horizon / period).ceil().max(1.0) as usize;
        let breakpoints = (0..n).map(|i| i as f64 * 0.5 * period).collect();
        let values = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec2,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_norm_ratio: f64,
}

fn mix(a1: &Mat2, a2: &Mat2, u: f64) -> Mat2 {
    if u == 1.0 {
        *a1
    } else if u == 0.0 {
        *a2
    } else {
        a1.scale(u) + a2.scale(1.0 - u)
    }
}

/// Propagates `x0` under `signal` up to `horizon`, sampling at every switch
/// and, when `grid_step` is given, on the uniform grid `0, h, 2h, …`.
pub fn run(
    a1: &Mat2,
    a2: &Mat2,
    signal: &SwitchingSignal,
    x0: Vec2,
    horizon: f64,
    grid_step: Option<f64>,
) -> Trajectory {
    let bp = signal.breakpoints();
    let mut samples = vec![Sample {
        t: 0.0,
        x: x0,
        u: signal.values()[0],
    }];
    let mut x = x0;
    let mut next_grid = grid_step.filter(|h| *h > 0.0).map(|h| (1usize, h));
    for (i, &u) in signal.values().iter().enumerate() {
        let start = bp[i];
        if start >= horizon {
            break;
        }
        let end = bp.get(i + 1).copied().unwrap_or(horizon).min(horizon);
        let m = mix(a1, a2, u);
        if let Some((k, h)) = next_grid.as_mut() {
            while (*k as f64) * *h < end {
                let tg = *k as f64 * *h;
                samples.push(Sample {
                    t: tg,
                    x: m.expm(tg - start).apply(x),
                    u,
                });
                *k += 1;
            }
        }
        x = m.expm(end - start).apply(x);
        samples.push(Sample { t: end, x, u });
    }
    Trajectory {
        final_norm_ratio: norm(x) / norm(x0),
        samples,
    }
}

/// Mode-selection rules for [`greedy_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyRule {
    /// Largest norm after one dwell step.
    Radial,
    /// Smallest counterclockwise angle between `x` and `Aᵢx`.
    AngleCcw,
    /// Smallest clockwise angle between `x` and `Aᵢx`.
    AngleCw,
}

fn sensed_angle(x: Vec2, v: Vec2, s: f64) -> f64 {
    let a = (s * cross(x, v)).atan2(dot(x, v));
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

const MAX_RECORDED: usize = 4000;
const DIVERGED: f64 = 1e200;

/// Greedy state feedback with a fixed rule, one decision per dwell step.
pub fn greedy_with(
    a1: &Mat2,
    a2: &Mat2,
    x0: Vec2,
    dwell: f64,
    horizon: f64,
    rule: GreedyRule,
) -> Trajectory {
    let steps = (horizon / dwell).round().max(1.0) as usize;
    let stride = steps.div_ceil(MAX_RECORDED).max(1);
    let e = [a1.expm(dwell), a2.expm(dwell)];
    let a = [a1, a2];
    let x0_norm = norm(x0);
    let mut x = x0;
    let mut samples = vec![Sample { t: 0.0, x, u: 1.0 }];
    for k in 0..steps {
        let i = match rule {
            GreedyRule::Radial => {
                let (y1, y2) = (e[0].apply(x), e[1].apply(x));
                usize::from(norm(y2) > norm(y1))
            }
            GreedyRule::AngleCcw | GreedyRule::AngleCw => {
                let s = if rule == GreedyRule::AngleCcw { 1.0 } else { -1.0 };
                let th1 = sensed_angle(x, a[0].apply(x), s);
                let th2 = sensed_angle(x, a[1].apply(x), s);
                usize::from(th2 < th1)
            }
        };
        x = e[i].apply(x);
        let u = if i == 0 { 1.0 } else { 0.0 };
        let last = k + 1 == steps;
        let blown = !(norm(x) < DIVERGED * x0_norm);
        if (k + 1) % stride == 0 || last || blown {
            samples.push(Sample {
                t: (k + 1) as f64 * dwell,
                x,
                u,
            });
        }
        if blown {
            break;
        }
    }
    Trajectory {
        final_norm_ratio: norm(x) / x0_norm,
        samples,
    }
}

/// The worst of the three greedy rules (largest final norm ratio).
pub fn adversarial_greedy(a1: &Mat2, a2: &Mat2, x0: Vec2, dwell: f64, horizon: f64) -> Trajectory {
    [GreedyRule::Radial, GreedyRule::AngleCcw, GreedyRule::AngleCw]
        .into_iter()
        .map(|r| greedy_with(a1, a2, x0, dwell, horizon, r))
        .reduce(|best, t| {
            if t.final_norm_ratio > best.final_norm_ratio {
                t
            } else {
                best
            }
        })
        .expect("three rules")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Largest final ratio over random signals.
    pub max_random_ratio: f64,
    pub argmax_trial: usize,
    pub greedy_ratio: f64,
    /// Final ratio of the constant averaged control `u ≡ σ₀` started on the
    /// dominant real eigenvector of `σ₀A₁ + (1−σ₀)A₂`, when that exists.
    pub averaged_ratio: Option<f64>,
    pub max_ratio: f64,
    /// Some trajectory grew past `UNSTABLE_RATIO`.
    pub unstable: bool,
}

pub const UNSTABLE_RATIO: f64 = 1e3;

fn trial_ratio(a1: &Mat2, a2: &Mat2, horizon: f64, seed: u64, trial: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let mean = 0.1 / a1.norm().max(a2.norm());
    let dwell = Exp::new(1.0 / mean).expect("positive rate");
    let relaxed = rng.random::<f64>() < 0.1;
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let x0 = [angle.cos(), angle.sin()];
    let mut x = x0;
    let mut t = 0.0;
    while t < horizon {
        let d = dwell.sample(&mut rng).min(horizon - t);
        let u = if relaxed {
            rng.random::<f64>()
        } else if rng.random::<bool>() {
            1.0
        } else {
            0.0
        };
        x = mix(a1, a2, u).expm(d).apply(x);
        t += d;
        if !(norm(x) < DIVERGED) {
            break;
        }
    }
    norm(x)
}

fn averaged_candidate(a1: &Mat2, a2: &Mat2, horizon: f64) -> Option<f64> {
    let sigma0 = sigma_polys(a1, a2).ok()?.sigma0?;
    let m = mix(a1, a2, sigma0);
    let (tr, det) = (m.trace(), m.det());
    let disc = 0.25 * tr * tr - det;
    if disc < 0.0 {
        return None;
    }
    let v = m.null_vector(0.5 * tr + disc.sqrt());
    Some(norm(m.expm(horizon).apply(v)) / norm(v))
}

/// Random-signal falsification search. Trials run in parallel; each draws
/// from its own ChaCha stream, so the report depends only on `seed`.
pub fn guas_probe(a1: &Mat2, a2: &Mat2, trials: usize, horizon: f64, seed: u64) -> Result<ProbeReport> {
    if trials == 0 {
        return Err(Error::Precondition {
            op: "guas_probe",
            reason: "trials must be positive".into(),
        });
    }
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| trial_ratio(a1, a2, horizon, seed, i))
        .collect();
    let (argmax_trial, max_random_ratio) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, r)| {
            if r > best.1 {
                (i, r)
            } else {
                best
            }
        });
    let dwell = 1e-3 / a1.norm().max(a2.norm());
    let steps_cap = 200_000.0;
    let dwell = dwell.max(horizon / steps_cap);
    let greedy_ratio = adversarial_greedy(a1, a2, [1.0, 0.0], dwell, horizon)
        .final_norm_ratio
        .max(adversarial_greedy(a1, a2, [0.0, 1.0], dwell, horizon).final_norm_ratio);
    let averaged_ratio = averaged_candidate(a1, a2, horizon);
    let max_ratio = max_random_ratio
        .max(greedy_ratio)
        .max(averaged_ratio.unwrap_or(f64::NEG_INFINITY));
    Ok(ProbeReport {
        trials,
        horizon,
        seed,
        max_random_ratio,
        argmax_trial,
        greedy_ratio,
        averaged_ratio,
        max_ratio,
        unstable: max_ratio > UNSTABLE_RATIO,
    })
}
