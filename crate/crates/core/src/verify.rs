//! Independent validation against a reference integrator.
//!
//! The exact solution is selected by its behaviour at infinity, so the
//! reference is seeded with the assembled far-field state `x(T_max)` and
//! integrated backward to `T`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::contraction::{Assembled, ContractionError};
use crate::exponents::{fit_sampled, ExponentError, FitMode, PowerFit};
use crate::expr::ExprError;
use crate::family::{FamilyError, Model, SystemDef};
use crate::linalg::Vector;

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
/// Slack on the decay slope when judging uniformity.
pub const SLOPE_SLACK: f64 = 0.15;
/// Largest allowed `max c(a) / median c(a)`.
pub const CONSTANT_SPREAD: f64 = 10.0;
const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("state left the domain at t = {t:e}: {state:?}")]
    DomainExit { t: f64, state: Vec<f64> },
    #[error("step limit reached at t = {t:e}")]
    StepLimit { t: f64 },
    #[error("non-finite state at t = {t:e}")]
    NonFinite { t: f64 },
    #[error("integration interval [{from}, {to}] starts before t0 = {t0}")]
    BeforeStart { from: f64, to: f64, t0: f64 },
    #[error("need at least {need} parameter samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Contraction(#[from] ContractionError),
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense-output weights.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Interpolation data of one accepted step.
#[derive(Clone, Debug)]
struct Segment {
    t: f64,
    h: f64,
    coef: [Vector; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> Vector {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coef;
        r1 + (r2 + (r3 + (r4 + r5 * theta1) * theta) * theta1) * theta
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub rtol: f64,
    pub atol: f64,
    pub stats: StepStats,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn last(&self) -> &Vector {
        self.states.last().expect("trajectory has its start state")
    }

    /// Dense output; `None` outside the integrated interval.
    pub fn eval(&self, t: f64) -> Option<Vector> {
        let (a, b) = (self.times[0], self.times[self.times.len() - 1]);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if !(t >= lo && t <= hi) {
            return None;
        }
        if self.segments.is_empty() {
            return Some(self.states[0].clone());
        }
        let forward = b >= a;
        let i = self
            .times
            .partition_point(|s| if forward { *s < t } else { *s > t });
        let seg = i.saturating_sub(1).min(self.segments.len() - 1);
        if self.times[i.min(self.times.len() - 1)] == t {
            return Some(self.states[i.min(self.states.len() - 1)].clone());
        }
        Some(self.segments[seg].eval(t))
    }
}

fn error_norm(err: &Vector, y: &Vector, y_new: &Vector, rtol: f64, atol: f64) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = (0..err.len())
        .map(|i| {
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            let e = if sc > 0.0 {
                err[i] / sc
            } else if err[i] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            e * e
        })
        .sum();
    (sum / n).sqrt()
}

struct Stepper<'a> {
    sys: &'a SystemDef,
    evaluations: usize,
}

impl Stepper<'_> {
    fn rhs(&mut self, t: f64, x: &Vector) -> Result<Vector, VerifyError> {
        self.evaluations += 1;
        Ok(self.sys.rhs(t, x.as_slice())?)
    }

    /// One Dormand–Prince step; `k1` is the derivative at `(t, y)`. Returns
    /// the new state, the stage derivatives and the error estimate.
    fn step(
        &mut self,
        t: f64,
        y: &Vector,
        k1: &Vector,
        h: f64,
    ) -> Result<(Vector, [Vector; 7], Vector), VerifyError> {
        let mut k: [Vector; 7] = std::array::from_fn(|_| Vector::zeros(y.len()));
        k[0] = k1.clone();
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            k[s] = self.rhs(t + C[s] * h, &ys)?;
            if s == 6 {
                let mut err = Vector::zeros(y.len());
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        err.axpy(h * E[j], kj, 1.0);
                    }
                }
                return Ok((ys, k, err));
            }
        }
        unreachable!("seven stages")
    }
}

/// Initial step size after Hairer & Wanner.
fn initial_step(
    stepper: &mut Stepper<'_>,
    t: f64,
    y: &Vector,
    f0: &Vector,
    dir: f64,
    rtol: f64,
    atol: f64,
) -> Result<f64, VerifyError> {
    let scaled = |v: &Vector| {
        let sum: f64 = (0..v.len())
            .map(|i| {
                let sc = atol + rtol * y[i].abs();
                if sc > 0.0 {
                    (v[i] / sc).powi(2)
                } else {
                    0.0
                }
            })
            .sum();
        (sum / v.len() as f64).sqrt()
    };
    let d0 = scaled(y);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = y + f0 * (dir * h0);
    let f1 = stepper.rhs(t + dir * h0, &y1)?;
    let d2 = scaled(&(f1 - f0)) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

/// Adaptive Dormand–Prince 5(4) with PI step control. Integrates backward
/// when `t_end < t_start`.
pub fn integrate_reference(
    sys: &SystemDef,
    t_start: f64,
    x_start: &Vector,
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> Result<Trajectory, VerifyError> {
    let slack = 1e-12 * sys.t0;
    if t_start < sys.t0 - slack || t_end < sys.t0 - slack {
        return Err(VerifyError::BeforeStart {
            from: t_start,
            to: t_end,
            t0: sys.t0,
        });
    }
    if x_start.iter().any(|v| !v.is_finite()) {
        return Err(VerifyError::NonFinite { t: t_start });
    }
    let mut stepper = Stepper { sys, evaluations: 0 };
    let mut traj = Trajectory {
        times: vec![t_start],
        states: vec![x_start.clone()],
        rtol,
        atol,
        stats: StepStats::default(),
        segments: Vec::new(),
    };
    if t_end == t_start {
        return Ok(traj);
    }
    let dir = (t_end - t_start).signum();
    let span = (t_end - t_start).abs();
    const BETA: f64 = 0.04;
    const SAFETY: f64 = 0.9;
    const EXPO: f64 = 0.2 - BETA * 0.75;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;

    let mut t = t_start;
    let mut y = x_start.clone();
    let mut f = stepper.rhs(t, &y)?;
    let mut h = initial_step(&mut stepper, t, &y, &f, dir, rtol, atol)?.min(span);
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;
    loop {
        if traj.stats.accepted + traj.stats.rejected >= MAX_STEPS {
            return Err(VerifyError::StepLimit { t });
        }
        let remaining = (t_end - t).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h <= 10.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(VerifyError::StepUnderflow { t, h });
        }
        let (y_new, k, err) = stepper.step(t, &y, &f, dir * h)?;
        let err_norm = error_norm(&err, &y, &y_new, rtol, atol);
        if !err_norm.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            h *= FAC_MIN;
            traj.stats.rejected += 1;
            last_rejected = true;
            continue;
        }
        let fac11 = err_norm.powf(EXPO);
        if err_norm <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err_norm.max(1e-4);
            let t_new = if last { t_end } else { t + dir * h };
            if let Some(hint) = &sys.domain_hint {
                if !hint.contains_closed(y_new.as_slice()) {
                    return Err(VerifyError::DomainExit {
                        t: t_new,
                        state: y_new.iter().copied().collect(),
                    });
                }
            }
            let hs = dir * h;
            let r2 = &y_new - &y;
            let r3 = &k[0] * hs - &r2;
            let r4 = &r2 - &k[6] * hs - &r3;
            let mut r5 = Vector::zeros(y.len());
            for (j, kj) in k.iter().enumerate() {
                if D[j] != 0.0 {
                    r5.axpy(hs * D[j], kj, 1.0);
                }
            }
            traj.segments.push(Segment {
                t,
                h: hs,
                coef: [y.clone(), r2, r3, r4, r5],
            });
            t = t_new;
            f = k[6].clone();
            y = y_new;
            traj.times.push(t);
            traj.states.push(y.clone());
            traj.stats.accepted += 1;
            last_rejected = false;
            if last {
                break;
            }
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            traj.stats.rejected += 1;
            last_rejected = true;
        }
    }
    traj.stats.evaluations = stepper.evaluations;
    Ok(traj)
}

/// Fixed-step Dormand–Prince (fifth-order solution, no error control).
pub fn integrate_fixed(
    sys: &SystemDef,
    t_start: f64,
    x_start: &Vector,
    t_end: f64,
    steps: usize,
) -> Result<Vector, VerifyError> {
    let mut stepper = Stepper { sys, evaluations: 0 };
    let h = (t_end - t_start) / steps as f64;
    let mut y = x_start.clone();
    for i in 0..steps {
        let t = t_start + h * i as f64;
        let f = stepper.rhs(t, &y)?;
        y = stepper.step(t, &y, &f, h)?.0;
    }
    Ok(y)
}

/// Measured decay of `|x_ref - X|` for one parameter value.
#[derive(Clone, Debug, Serialize)]
pub struct DecayComparison {
    pub alpha: Vec<f64>,
    /// `-∞` when the difference stays below the integrator's tolerance.
    pub slope: f64,
    pub constant: f64,
    pub fit: PowerFit,
    pub max_difference: f64,
    pub rtol: f64,
    pub atol: f64,
    pub stats: StepStats,
    /// Largest `|x_ref - x|` against the assembled solution on the fit window.
    pub assembled_gap: f64,
}

/// Seeds the reference at the assembled `x(T_max)`, integrates back to `T`
/// and fits `|x_ref - X|` over the top two decades.
pub fn compare_decay(
    model: &Model,
    alpha: &[f64],
    asm: &Assembled,
    rtol: f64,
    atol: f64,
) -> Result<DecayComparison, VerifyError> {
    let grid = asm.x.grid();
    let (t_lo, t_max) = (asm.x.start(), asm.x.end());
    let fit_start = (t_max / 100.0).max(t_lo);
    let window: Vec<usize> = (0..grid.len())
        .filter(|&i| grid[i] >= fit_start * (1.0 - 1e-12))
        .collect();

    // Keep the tolerances two orders below the smallest remainder compared.
    let r_min = window
        .iter()
        .map(|&i| asm.r.values()[i].norm())
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let x_max = window
        .iter()
        .map(|&i| asm.x.values()[i].amax())
        .fold(0.0, f64::max);
    let (rtol, atol) = if r_min.is_finite() {
        let atol = atol.min(1e-3 * r_min);
        let rtol = if x_max > 0.0 {
            rtol.min((1e-3 * r_min / x_max).max(1e-13))
        } else {
            rtol
        };
        (rtol, atol)
    } else {
        (rtol, atol)
    };

    let seed = asm.x.values()[grid.len() - 1].clone();
    let traj = integrate_reference(&model.sys, t_max, &seed, t_lo, rtol, atol)?;
    let mut ts = Vec::with_capacity(window.len());
    let mut diffs = Vec::with_capacity(window.len());
    let mut assembled_gap = 0.0f64;
    for &i in &window {
        let t = grid[i];
        let x_ref = traj.eval(t).expect("grid lies inside the trajectory");
        let fam = &asm.family.values()[i];
        ts.push(t);
        diffs.push((&x_ref - fam).norm());
        assembled_gap = assembled_gap.max((&x_ref - &asm.x.values()[i]).norm());
    }
    let max_difference = diffs.iter().copied().fold(0.0, f64::max);
    let mut floor = 10.0 * (atol + rtol * x_max);
    if !r_min.is_finite() && max_difference > floor {
        // No remainder to compare against: the difference is integration
        // error, amplified along unstable directions. Measure it directly.
        let fine = integrate_reference(&model.sys, t_max, &seed, t_lo, rtol * 1e-2, atol * 1e-2)?;
        let err = window
            .iter()
            .map(|&i| {
                let t = grid[i];
                (traj.eval(t).expect("inside") - fine.eval(t).expect("inside")).norm()
            })
            .fold(0.0, f64::max);
        floor = floor.max(10.0 * err);
    }
    let fit = if max_difference <= floor {
        PowerFit::degenerate()
    } else {
        fit_sampled(&ts, &diffs, FitMode::Auto)?
    };
    Ok(DecayComparison {
        alpha: alpha.to_vec(),
        slope: fit.slope,
        constant: if fit.is_degenerate() { 0.0 } else { fit.constant() },
        fit,
        max_difference,
        rtol,
        atol,
        stats: traj.stats,
        assembled_gap,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaOutcome {
    pub alpha: Vec<f64>,
    pub slope: Option<f64>,
    pub constant: Option<f64>,
    pub passes: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformityReport {
    pub nu: f64,
    pub samples: Vec<AlphaOutcome>,
    pub max_constant: f64,
    pub median_constant: f64,
    /// `max / median` over the nonzero constants.
    pub constant_spread: f64,
    pub verdict: bool,
}

/// Runs `build` for every sample (in parallel, results kept in sample order)
/// and judges uniformity: every slope at most `-nu + 0.15` and the nonzero
/// constants within a factor ten of their median.
pub fn sweep_uniformity(
    alphas: &[Vec<f64>],
    nu: f64,
    build: impl Fn(&[f64]) -> Result<DecayComparison, VerifyError> + Sync,
) -> Result<(UniformityReport, Vec<Result<DecayComparison, VerifyError>>), VerifyError> {
    if alphas.len() < 5 {
        return Err(VerifyError::TooFewSamples {
            need: 5,
            got: alphas.len(),
        });
    }
    let results: Vec<Result<DecayComparison, VerifyError>> =
        alphas.par_iter().map(|a| build(a)).collect();
    let samples = alphas
        .iter()
        .zip(&results)
        .map(|(alpha, res)| AlphaOutcome::new(alpha, res.as_ref().map_err(|e| e.to_string()), nu))
        .collect();
    Ok((judge_uniformity(nu, samples), results))
}

impl AlphaOutcome {
    pub fn new(alpha: &[f64], result: Result<&DecayComparison, String>, nu: f64) -> Self {
        match result {
            Ok(d) => AlphaOutcome {
                alpha: alpha.to_vec(),
                slope: Some(d.slope),
                constant: Some(d.constant),
                passes: d.slope <= -nu + SLOPE_SLACK,
                error: None,
            },
            Err(e) => AlphaOutcome {
                alpha: alpha.to_vec(),
                slope: None,
                constant: None,
                passes: false,
                error: Some(e),
            },
        }
    }
}

/// Aggregates per-sample outcomes into the uniformity verdict.
pub fn judge_uniformity(nu: f64, samples: Vec<AlphaOutcome>) -> UniformityReport {
    let mut constants: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.constant)
        .filter(|c| *c > 0.0)
        .collect();
    constants.sort_by(f64::total_cmp);
    let (max_constant, median_constant) = if constants.is_empty() {
        (0.0, 0.0)
    } else {
        let m = constants.len();
        let median = if m % 2 == 1 {
            constants[m / 2]
        } else {
            0.5 * (constants[m / 2 - 1] + constants[m / 2])
        };
        (constants[m - 1], median)
    };
    let constant_spread = if median_constant > 0.0 {
        max_constant / median_constant
    } else {
        1.0
    };
    let verdict = samples.iter().all(|s| s.passes) && constant_spread <= CONSTANT_SPREAD;
    UniformityReport {
        nu,
        samples,
        max_constant,
        median_constant,
        constant_spread,
        verdict,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    pub rtols: Vec<f64>,
    pub steps: Vec<usize>,
    pub errors: Vec<f64>,
    /// `-d log(error) / d log(steps)` by least squares.
    pub observed_order: f64,
    /// Error ratio when a fixed step is halved.
    pub fixed_step_ratio: f64,
}

/// Global error on `dx/dt = -x`, `x(1) = 1`, integrated to `t = 11`, across
/// successive halvings of `rtol`, and for one fixed-step halving.
pub fn order_check(rtol_start: f64, halvings: usize) -> Result<OrderReport, VerifyError> {
    use crate::expr::parse;
    let sys = SystemDef::new(1, 0.0, vec![parse("-x1", 1)?], 1.0, None)?;
    let x0 = Vector::from_element(1, 1.0);
    let exact = (-10.0f64).exp();
    let mut rtols = Vec::new();
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for i in 0..=halvings {
        let rtol = rtol_start * 0.5f64.powi(i as i32);
        let traj = integrate_reference(&sys, 1.0, &x0, 11.0, rtol, 0.0)?;
        rtols.push(rtol);
        steps.push(traj.stats.accepted);
        errors.push((traj.last()[0] - exact).abs());
    }
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(s, e)| ((*s as f64).ln(), e.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let observed_order = -sxy / sxx;

    let coarse = (integrate_fixed(&sys, 1.0, &x0, 11.0, 40)?[0] - exact).abs();
    let fine = (integrate_fixed(&sys, 1.0, &x0, 11.0, 80)?[0] - exact).abs();
    Ok(OrderReport {
        rtols,
        steps,
        errors,
        observed_order,
        fixed_step_ratio: coarse / fine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::fixtures;

    #[test]
    fn riccati_backward_matches_closed_form() {
        let m = fixtures::riccati();
        let x100 = Vector::from_element(1, 1.0 / 99.5);
        let traj = integrate_reference(&m.sys, 100.0, &x100, 10.0, 1e-10, 1e-12).unwrap();
        assert!((traj.last()[0] - 1.0 / 9.5).abs() < 1e-8);
        for t in [12.5, 33.0, 71.7] {
            let x = traj.eval(t).unwrap()[0];
            assert!((x - 1.0 / (t - 0.5)).abs() < 1e-8, "t={t}");
        }
        assert!(traj.eval(5.0).is_none());
    }

    #[test]
    fn zero_field_is_constant() {
        let m = fixtures::exact();
        let x = Vector::from_element(1, 0.7);
        let traj = integrate_reference(&m.sys, 1.0, &x, 50.0, 1e-10, 1e-12).unwrap();
        assert!(traj.states.iter().all(|s| s[0] == 0.7));
    }

    #[test]
    fn pendulum_equilibrium_stays_put() {
        let m = fixtures::pendulum();
        let traj =
            integrate_reference(&m.sys, 1.0, &Vector::zeros(2), 200.0, 1e-10, 1e-12).unwrap();
        assert!(traj.states.iter().all(|s| s.amax() <= 1e-12));
    }

    #[test]
    fn forward_then_backward_returns() {
        let m = fixtures::oscillator();
        let x0 = Vector::from_vec(vec![0.3, -0.8]);
        let rtol = 1e-10;
        let fwd = integrate_reference(&m.sys, 10.0, &x0, 200.0, rtol, 1e-12).unwrap();
        let back = integrate_reference(&m.sys, 200.0, fwd.last(), 10.0, rtol, 1e-12).unwrap();
        assert!((back.last() - &x0).amax() <= 100.0 * rtol);
    }

    #[test]
    fn starting_before_t0_is_rejected() {
        let m = fixtures::oscillator();
        let err = integrate_reference(&m.sys, 10.0, &Vector::zeros(2), 5.0, 1e-8, 1e-10);
        assert!(matches!(err, Err(VerifyError::BeforeStart { .. })));
    }

    #[test]
    fn blow_up_underflows() {
        // x' = x², x(1) = 1 explodes at t = 2.
        let sys = SystemDef::new(1, 0.0, vec![crate::expr::parse("x1^2", 1).unwrap()], 1.0, None)
            .unwrap();
        let err = integrate_reference(&sys, 1.0, &Vector::from_element(1, 1.0), 3.0, 1e-8, 1e-10);
        assert!(err.is_err());
    }

    #[test]
    fn observed_order_at_least_four() {
        let rep = order_check(1e-4, 24).unwrap();
        assert!(rep.observed_order >= 4.0, "{rep:?}");
        assert!(rep.fixed_step_ratio >= 16.0, "{rep:?}");
    }

    #[test]
    fn sweep_needs_five_samples() {
        let alphas = vec![vec![0.0]; 4];
        let res = sweep_uniformity(&alphas, 3.0, |_| unreachable!());
        assert!(matches!(res, Err(VerifyError::TooFewSamples { got: 4, .. })));
    }
}
