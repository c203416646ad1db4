//! Power-law exponent fitting and the exponent profile of a family.
//!
//! Every `O(t^e)` statement about the family is realized as a least-squares
//! slope of `log |g|` against `log t`. Oscillatory magnitudes are fitted on
//! their envelope: each sliding one-decade window contributes its (refined)
//! peak, placed at the time where the peak occurs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyError, Model};
use crate::linalg::{inverse_with_det, LinalgError, Matrix};

/// Samples below this are treated as exact zeros.
pub const ZERO_FLOOR: f64 = 1e-300;
/// Smallest reported half-width; exact power laws otherwise report ~1e-16.
pub const HALF_WIDTH_FLOOR: f64 = 1e-9;
/// Dense samples per period when locating envelope peaks.
pub const ENVELOPE_PER_PERIOD: usize = 12;
const MAX_DENSE_SAMPLES: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("fit window [{start}, {end}] with {points} points: need ratio >= 10 and >= 20 points")]
    InvalidWindow { start: f64, end: f64, points: usize },
    #[error("non-finite sample {value} at t = {t}")]
    NonFinite { t: f64, value: f64 },
    #[error("too few usable samples ({usable}) for a fit")]
    TooFewSamples { usable: usize },
    #[error("alpha grid is empty")]
    EmptyAlphaGrid,
    #[error("alpha {alpha:?} is outside the parameter compact")]
    AlphaOutsideCompact { alpha: Vec<f64> },
    #[error(transparent)]
    Family(#[from] FamilyError),
}

impl From<LinalgError> for ExponentError {
    fn from(e: LinalgError) -> Self {
        ExponentError::Family(FamilyError::Linalg(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Raw,
    Envelope,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitWindow {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl FitWindow {
    pub fn new(start: f64, end: f64, points: usize) -> Result<Self, ExponentError> {
        let w = FitWindow { start, end, points };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ExponentError> {
        if self.start > 0.0 && self.end / self.start >= 10.0 * (1.0 - 1e-12) && self.points >= 20
        {
            Ok(())
        } else {
            Err(ExponentError::InvalidWindow {
                start: self.start,
                end: self.end,
                points: self.points,
            })
        }
    }

    /// Geometric sample times, endpoints included.
    pub fn nodes(&self) -> Vec<f64> {
        let ratio = (self.end / self.start).ln() / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.end
                } else {
                    self.start * (ratio * i as f64).exp()
                }
            })
            .collect()
    }
}

/// Sampling density of the dense pass used by envelope fits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Density {
    PerDecade(usize),
    /// Uniform spacing resolving angular frequency `omega`.
    PerPeriod { omega: f64, per_period: usize },
}

impl Density {
    pub fn from_phase_scale(phase_scale: Option<f64>) -> Density {
        match phase_scale {
            Some(omega) if omega > 0.0 => Density::PerPeriod {
                omega,
                per_period: ENVELOPE_PER_PERIOD,
            },
            _ => Density::PerDecade(200),
        }
    }

    fn nodes(&self, start: f64, end: f64) -> Vec<f64> {
        match *self {
            Density::PerDecade(ppd) => {
                let count = (((end / start).log10() * ppd as f64).ceil() as usize)
                    .clamp(2, MAX_DENSE_SAMPLES);
                let step = (end / start).ln() / count as f64;
                (0..=count)
                    .map(|i| if i == count { end } else { start * (step * i as f64).exp() })
                    .collect()
            }
            Density::PerPeriod { omega, per_period } => {
                let h = 2.0 * std::f64::consts::PI / omega / per_period.max(1) as f64;
                let count = (((end - start) / h).ceil() as usize).clamp(2, MAX_DENSE_SAMPLES);
                let step = (end - start) / count as f64;
                (0..=count)
                    .map(|i| if i == count { end } else { start + step * i as f64 })
                    .collect()
            }
        }
    }
}

impl Default for Density {
    fn default() -> Self {
        Density::PerDecade(200)
    }
}

/// Least-squares power law `g ≈ e^intercept · t^slope`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    /// `-∞` when the sample is identically zero.
    pub slope: f64,
    /// Twice the standard error of the slope, floored at [`HALF_WIDTH_FLOOR`].
    pub half_width: f64,
    pub intercept: f64,
    pub mode: FitMode,
    pub points: usize,
}

impl PowerFit {
    pub fn degenerate() -> PowerFit {
        PowerFit {
            slope: f64::NEG_INFINITY,
            half_width: 0.0,
            intercept: f64::NEG_INFINITY,
            mode: FitMode::Raw,
            points: 0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.slope == f64::NEG_INFINITY
    }

    /// `e^intercept`, the constant in `g ≈ c·t^slope`.
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }
}

struct LogFit {
    slope: f64,
    intercept: f64,
    se: f64,
    residuals: Vec<f64>,
}

fn log_log_fit(ts: &[f64], ys: &[f64]) -> Option<LogFit> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > ZERO_FLOOR)
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    let m = pts.len();
    if m < 3 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = pts.iter().map(|p| p.1 - intercept - slope * p.0).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let se = (ssr / (m - 2) as f64 / sxx).sqrt();
    Some(LogFit {
        slope,
        intercept,
        se,
        residuals,
    })
}

fn to_power_fit(fit: &LogFit, mode: FitMode, points: usize) -> PowerFit {
    PowerFit {
        slope: fit.slope,
        half_width: (2.0 * fit.se).max(HALF_WIDTH_FLOOR),
        intercept: fit.intercept,
        mode,
        points,
    }
}

/// Whether a raw log-log fit looks oscillatory: large scatter, or strongly
/// correlated neighbouring residuals.
fn looks_oscillatory(fit: &LogFit, zeros: usize) -> bool {
    if zeros > 0 {
        return true;
    }
    let m = fit.residuals.len() as f64;
    let var = fit.residuals.iter().map(|r| r * r).sum::<f64>() / m;
    let rms = var.sqrt();
    if rms < 1e-9 {
        return false;
    }
    if rms > 0.05 {
        return true;
    }
    let lag1: f64 = fit
        .residuals
        .windows(2)
        .map(|w| w[0] * w[1])
        .sum::<f64>()
        / (m - 1.0);
    lag1 / var > 0.5
}

/// Fits the exponent of `sampler` over `window`.
pub fn estimate_exponent(
    sampler: impl Fn(f64) -> f64 + Sync,
    window: &FitWindow,
    mode: FitMode,
) -> Result<PowerFit, ExponentError> {
    estimate_exponent_with(sampler, window, mode, Density::default())
}

pub fn estimate_exponent_with(
    sampler: impl Fn(f64) -> f64 + Sync,
    window: &FitWindow,
    mode: FitMode,
    density: Density,
) -> Result<PowerFit, ExponentError> {
    let fits = fit_slots(
        |t| Ok::<_, ExponentError>(vec![sampler(t)]),
        1,
        window,
        mode,
        density,
    )?;
    Ok(fits[0])
}

/// Fits every slot of a vector-valued nonnegative sampler. One coarse pass
/// decides the mode per slot; a dense pass is made only if some slot needs
/// an envelope.
pub fn fit_slots<E>(
    sampler: impl Fn(f64) -> Result<Vec<f64>, E> + Sync,
    slots: usize,
    window: &FitWindow,
    mode: FitMode,
    density: Density,
) -> Result<Vec<PowerFit>, E>
where
    E: From<ExponentError> + Send,
{
    window.validate()?;
    let coarse_t = window.nodes();
    let coarse = sample_all(&sampler, &coarse_t, slots)?;

    let mut out = vec![PowerFit::degenerate(); slots];
    let mut need_envelope = vec![false; slots];
    for s in 0..slots {
        let ys: Vec<f64> = coarse.iter().map(|row| row[s]).collect();
        let zeros = ys.iter().filter(|y| **y <= ZERO_FLOOR).count();
        if 2 * zeros > ys.len() {
            continue;
        }
        let raw = log_log_fit(&coarse_t, &ys);
        let use_envelope = match mode {
            FitMode::Raw => false,
            FitMode::Envelope => true,
            FitMode::Auto => raw.as_ref().is_none_or(|f| looks_oscillatory(f, zeros)),
        };
        if use_envelope {
            need_envelope[s] = true;
        } else {
            let fit = raw.ok_or(ExponentError::TooFewSamples {
                usable: ys.len() - zeros,
            })?;
            out[s] = to_power_fit(&fit, FitMode::Raw, ys.len() - zeros);
        }
    }
    if !need_envelope.iter().any(|b| *b) {
        return Ok(out);
    }

    let dense_t = density.nodes(window.start, window.end);
    let dense = sample_all(&sampler, &dense_t, slots)?;
    for s in (0..slots).filter(|s| need_envelope[*s]) {
        let ys: Vec<f64> = dense.iter().map(|row| row[s]).collect();
        let slot_value = |t: f64| sampler(t).map(|v| v[s]);
        out[s] = envelope_fit(&dense_t, &ys, &coarse_t, Some(&slot_value))?;
    }
    Ok(out)
}

/// Fits already-sampled data `ys` at increasing times `ts`. Envelope peaks
/// are taken from the samples without refinement.
pub fn fit_sampled(ts: &[f64], ys: &[f64], mode: FitMode) -> Result<PowerFit, ExponentError> {
    if let Some(v) = ys.iter().find(|v| !v.is_finite() || **v < 0.0) {
        let i = ys.iter().position(|y| y.to_bits() == v.to_bits()).unwrap_or(0);
        return Err(ExponentError::NonFinite { t: ts[i], value: *v });
    }
    let zeros = ys.iter().filter(|y| **y <= ZERO_FLOOR).count();
    if 2 * zeros > ys.len() {
        return Ok(PowerFit::degenerate());
    }
    let raw = log_log_fit(ts, ys);
    let use_envelope = match mode {
        FitMode::Raw => false,
        FitMode::Envelope => true,
        FitMode::Auto => raw.as_ref().is_none_or(|f| looks_oscillatory(f, zeros)),
    };
    if !use_envelope {
        let fit = raw.ok_or(ExponentError::TooFewSamples {
            usable: ys.len() - zeros,
        })?;
        return Ok(to_power_fit(&fit, FitMode::Raw, ys.len() - zeros));
    }
    let (start, end) = (ts[0], ts[ts.len() - 1]);
    let centers = if end / start >= 10.0 {
        FitWindow {
            start,
            end,
            points: 50,
        }
        .nodes()
    } else {
        ts.to_vec()
    };
    envelope_fit::<ExponentError>(ts, ys, &centers, None)
}

fn sample_all<E>(
    sampler: &(impl Fn(f64) -> Result<Vec<f64>, E> + Sync),
    ts: &[f64],
    slots: usize,
) -> Result<Vec<Vec<f64>>, E>
where
    E: Send + From<ExponentError>,
{
    let rows: Vec<Vec<f64>> = ts.par_iter().map(|t| sampler(*t)).collect::<Result<_, E>>()?;
    for (t, row) in ts.iter().zip(&rows) {
        debug_assert_eq!(row.len(), slots);
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(ExponentError::NonFinite { t: *t, value: *v }.into());
        }
    }
    Ok(rows)
}

/// Peaks of sliding one-decade windows centred at `centers`; with a sampler,
/// each interior peak is refined between its neighbouring samples.
fn envelope_fit<E>(
    ts: &[f64],
    ys: &[f64],
    centers: &[f64],
    sampler: Option<&dyn Fn(f64) -> Result<f64, E>>,
) -> Result<PowerFit, E>
where
    E: From<ExponentError>,
{
    let zeros = ys.iter().filter(|y| **y <= ZERO_FLOOR).count();
    if 2 * zeros > ys.len() {
        return Ok(PowerFit::degenerate());
    }
    let half_decade = 10f64.sqrt();
    let mut peaks: Vec<(usize, f64, f64)> = Vec::new();
    for &c in centers {
        let lo = ts.partition_point(|t| *t < c / half_decade);
        let hi = ts.partition_point(|t| *t <= c * half_decade).min(ts.len());
        if hi <= lo {
            continue;
        }
        let (j, _) = ys[lo..hi]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, y)| {
                if *y > acc.1 {
                    (i, *y)
                } else {
                    acc
                }
            });
        let j = lo + j;
        if ys[j] <= ZERO_FLOOR || peaks.iter().any(|p| p.0 == j) {
            continue;
        }
        let (tp, yp) = match sampler {
            Some(f) if j > lo && j + 1 < hi => refine_peak(f, ts[j - 1], ts[j + 1], ts[j], ys[j])?,
            _ => (ts[j], ys[j]),
        };
        peaks.push((j, tp, yp));
    }
    let (pt, py): (Vec<f64>, Vec<f64>) = peaks.iter().map(|p| (p.1, p.2)).unzip();
    let fit = log_log_fit(&pt, &py).ok_or(ExponentError::TooFewSamples { usable: pt.len() })?;
    Ok(to_power_fit(&fit, FitMode::Envelope, pt.len()))
}

/// Golden-section search for the maximum inside `[a, b]`.
fn refine_peak<E>(
    sampler: &dyn Fn(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    t_best: f64,
    y_best: f64,
) -> Result<(f64, f64), E> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = (t_best, y_best);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = sampler(x1)?;
    let mut f2 = sampler(x2)?;
    for _ in 0..60 {
        if (b - a) <= 1e-13 * b {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = sampler(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = sampler(x2)?;
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f.is_finite() && f > best.1 {
            best = (x, f);
        }
    }
    Ok(best)
}

/// A fitted exponent with its confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            half_width: 0.0,
        }
    }
}

/// Exponents of the family: `|Y| = O(t^-mu)`, `∂Y/∂a = O(t^(s-mu))`,
/// `J = O(t^q)`, `J⁻¹ = O(t^r)`, `det J ~ a·t^p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentProfile {
    pub n: usize,
    pub k: f64,
    pub p: Estimate,
    pub q: Estimate,
    pub r: Estimate,
    pub s: Estimate,
    pub mu: Estimate,
    pub a: f64,
}

impl ExponentProfile {
    /// Weight of the function space, `mu - r - 1`.
    pub fn lambda(&self) -> f64 {
        self.mu.value - self.r.value - 1.0
    }

    /// Guaranteed remainder decay, `mu - r - q - 1`.
    pub fn nu(&self) -> f64 {
        self.mu.value - self.r.value - self.q.value - 1.0
    }

    /// `p <= q n` and `r <= q (n-1) - p`, each up to the summed half-widths.
    pub fn relations(&self) -> RelationReport {
        let n = self.n as f64;
        let first = Relation::new(
            self.p.value,
            self.q.value * n,
            self.p.half_width + n * self.q.half_width,
        );
        let second = Relation::new(
            self.r.value,
            self.q.value * (n - 1.0) - self.p.value,
            self.r.half_width + (n - 1.0) * self.q.half_width + self.p.half_width,
        );
        RelationReport {
            p_le_qn: first,
            r_le_q_n1_minus_p: second,
        }
    }

    /// The same profile with every half-width multiplied by `factor`.
    pub fn with_scaled_half_widths(&self, factor: f64) -> ExponentProfile {
        let scale = |e: Estimate| Estimate {
            value: e.value,
            half_width: e.half_width * factor,
        };
        ExponentProfile {
            p: scale(self.p),
            q: scale(self.q),
            r: scale(self.r),
            s: scale(self.s),
            mu: scale(self.mu),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Relation {
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub holds: bool,
}

impl Relation {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        Relation {
            lhs,
            rhs,
            tol,
            holds: lhs <= rhs + tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RelationReport {
    pub p_le_qn: Relation,
    pub r_le_q_n1_minus_p: Relation,
}

impl RelationReport {
    pub fn holds(&self) -> bool {
        self.p_le_qn.holds && self.r_le_q_n1_minus_p.holds
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Condition {
    pub holds: bool,
    /// Literal difference of the two sides.
    pub margin: f64,
    /// Margin after subtracting the half-widths of every fitted exponent.
    pub conservative_margin: f64,
}

impl Condition {
    fn new(margin: f64, slack: f64) -> Self {
        let conservative_margin = margin - slack;
        Condition {
            holds: conservative_margin > 0.0,
            margin,
            conservative_margin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `mu > r + s + 1`
    pub cond1: Condition,
    /// `mu > 2(r + q + 1) + k`
    pub cond2: Condition,
    pub nu: f64,
    pub verdict: bool,
}

/// Both sufficient conditions, evaluated conservatively.
pub fn check_conditions(prof: &ExponentProfile) -> ConditionReport {
    let (mu, r, s, q) = (prof.mu, prof.r, prof.s, prof.q);
    let cond1 = Condition::new(
        mu.value - (r.value + s.value + 1.0),
        mu.half_width + r.half_width + s.half_width,
    );
    let cond2 = Condition::new(
        mu.value - (2.0 * (r.value + q.value + 1.0) + prof.k),
        mu.half_width + 2.0 * (r.half_width + q.half_width),
    );
    ConditionReport {
        cond1,
        cond2,
        nu: prof.nu(),
        verdict: cond1.holds && cond2.holds,
    }
}

#[derive(Clone, Debug)]
pub struct ProfileOptions {
    pub window: FitWindow,
    pub mode: FitMode,
    pub density: Density,
}

/// Slot layout: |Y|, |∂Y/∂a| entries, |J| entries, |J⁻¹| entries,
/// max |det J|, min |det J|.
fn profile_sample(model: &Model, alphas: &[Vec<f64>], t: f64) -> Result<Vec<f64>, ExponentError> {
    let n = model.n();
    let nn = n * n;
    let mut row = vec![0.0; 2 + 3 * nn + 1];
    let last = row.len() - 1;
    row[last] = f64::INFINITY;
    for alpha in alphas {
        let y = model.residual(t, alpha).map_err(FamilyError::from)?;
        let dy = model
            .residual_param_derivative(t, alpha)
            .map_err(FamilyError::from)?;
        let j = model.jacobian(t, alpha).map_err(FamilyError::from)?;
        let (j_inv, det) = inverse_with_det(&j, 0.0)?;
        row[0] = row[0].max(y.norm());
        let mats: [&Matrix; 3] = [&dy, &j, &j_inv];
        for (block, m) in mats.iter().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    let slot = 1 + block * nn + a * n + b;
                    row[slot] = row[slot].max(m[(a, b)].abs());
                }
            }
        }
        row[1 + 3 * nn] = row[1 + 3 * nn].max(det.abs());
        row[last] = row[last].min(det.abs());
    }
    Ok(row)
}

/// Largest non-degenerate entry exponent.
fn matrix_exponent(fits: &[PowerFit]) -> Estimate {
    fits.iter()
        .filter(|f| !f.is_degenerate())
        .fold(None, |acc: Option<&PowerFit>, f| match acc {
            Some(best) if best.slope >= f.slope => Some(best),
            _ => Some(f),
        })
        .map(|f| Estimate {
            value: f.slope,
            half_width: f.half_width,
        })
        .unwrap_or(Estimate {
            value: f64::NEG_INFINITY,
            half_width: 0.0,
        })
}

/// Fits every exponent on the pointwise maximum over `alpha_grid`.
pub fn profile(
    model: &Model,
    alpha_grid: &[Vec<f64>],
    opts: &ProfileOptions,
) -> Result<ExponentProfile, ExponentError> {
    if alpha_grid.is_empty() {
        return Err(ExponentError::EmptyAlphaGrid);
    }
    for alpha in alpha_grid {
        if !model.fam.compact.contains_closed(alpha) {
            return Err(ExponentError::AlphaOutsideCompact {
                alpha: alpha.clone(),
            });
        }
    }
    let n = model.n();
    let nn = n * n;
    let slots = 2 + 3 * nn + 1;
    // The last slot (min |det J|) is only checked, never fitted.
    let fits = fit_slots(
        |t| profile_sample(model, alpha_grid, t).map(|mut row| {
            row.truncate(slots - 1);
            row
        }),
        slots - 1,
        &opts.window,
        opts.mode,
        opts.density,
    )?;

    let y_fit = fits[0];
    let mu = if y_fit.is_degenerate() {
        Estimate::exact(f64::INFINITY)
    } else {
        Estimate {
            value: -y_fit.slope,
            half_width: y_fit.half_width,
        }
    };
    let dy = matrix_exponent(&fits[1..1 + nn]);
    let s = if dy.value == f64::NEG_INFINITY {
        Estimate::exact(f64::NEG_INFINITY)
    } else {
        Estimate {
            value: dy.value + mu.value,
            half_width: dy.half_width + mu.half_width,
        }
    };
    let q = matrix_exponent(&fits[1 + nn..1 + 2 * nn]);
    let r = matrix_exponent(&fits[1 + 2 * nn..1 + 3 * nn]);
    let det_fit = fits[1 + 3 * nn];
    if det_fit.is_degenerate() {
        return Err(LinalgError::SingularJacobian {
            det: 0.0,
            floor: 0.0,
        }
        .into());
    }
    let p = Estimate {
        value: det_fit.slope,
        half_width: det_fit.half_width,
    };

    // Leading coefficient over the top decade, and the determinant floor.
    let top: Vec<f64> = opts
        .window
        .nodes()
        .into_iter()
        .filter(|t| *t >= opts.window.end / 10.0 * (1.0 - 1e-12))
        .collect();
    let mut a_sum = 0.0;
    for &t in &top {
        let row = profile_sample(model, alpha_grid, t)?;
        let floor = 1e-10 * t.powf(p.value);
        let min_det = row[slots - 1];
        if min_det < floor {
            return Err(LinalgError::SingularJacobian {
                det: min_det,
                floor,
            }
            .into());
        }
        a_sum += row[slots - 2] * t.powf(-p.value);
    }
    let a = a_sum / top.len() as f64;

    Ok(ExponentProfile {
        n,
        k: model.sys.k,
        p,
        q,
        r,
        s,
        mu,
        a,
    })
}
