//! Construction of the exact solution `x = X + J C` by successive
//! approximations of
//!
//! ```text
//! C(t) = Z(t) - ∫_t^∞ [M(η) C(η) + 𝒢(C, η)] dη,   𝒢(C, t) = t^k J⁻¹ G(J C, t)
//! ```
//!
//! in the space of functions with finite `‖C‖_λ = sup t^λ |C(t)|` on
//! `[T, ∞)`. `T` is the first doubling of `t0` at which both Lipschitz
//! factors of the integral operator drop below one half.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exponents::{ExponentProfile, FitMode, PowerFit};
use crate::expr::ExprError;
use crate::family::{DetFloor, FamilyError, LocalData, Model};
use crate::grid::{geometric_grid, GridError, GridFunction, Stencil};
use crate::linalg::{spectral_norm, Vector};
use crate::quadrature::{extrapolate_tail, suffix_sums, QuadratureSpec, TailIntegral};

/// Doublings of `t0` tried by [`select_t`].
pub const MAX_DOUBLINGS: u32 = 20;
/// Safety factor on sampled constants.
pub const CONSTANT_SAFETY: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractionError {
    #[error(
        "no threshold T in t0·2^0..t0·2^{MAX_DOUBLINGS}: at T = {t:e}, L_K = {l_k:e}, L0 = {l0:e} \
         (M_K = {m_k:e}, M1 = {m1:e}, K = {k_radius:e})"
    )]
    ThresholdNotFound {
        t: f64,
        l_k: f64,
        l0: f64,
        m_k: f64,
        m1: f64,
        k_radius: f64,
    },
    #[error("iterate {iteration} left the ball: ‖C‖_λ = {norm:e} > K = {radius:e}")]
    BallEscape {
        iteration: usize,
        norm: f64,
        radius: f64,
    },
    #[error("no convergence after {iterations} iterations: last increment {last_delta:e}")]
    NoConvergence { iterations: usize, last_delta: f64 },
    #[error("constants could not be estimated: {0}")]
    BadConstant(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

impl From<ExprError> for ContractionError {
    fn from(e: ExprError) -> Self {
        ContractionError::Family(e.into())
    }
}

impl From<GridError> for ContractionError {
    fn from(e: GridError) -> Self {
        ContractionError::Family(e.into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionOptions {
    /// `T_max = T · tmax_factor`.
    pub tmax_factor: f64,
    pub points_per_decade: usize,
    pub quad: QuadratureSpec,
    pub picard_tol: f64,
    pub max_iters: usize,
    /// Seed for the `M_K` sampling.
    pub seed: u64,
    pub mk_samples: usize,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        ContractionOptions {
            tmax_factor: 1e4,
            points_per_decade: 200,
            quad: QuadratureSpec::default(),
            picard_tol: 1e-10,
            max_iters: 50,
            seed: 0,
            mk_samples: 500,
        }
    }
}

/// Sampled constants of the contraction argument for one parameter value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Constants {
    /// Ball radius, `2‖Z‖_λ`.
    pub k_radius: f64,
    /// `|G(R, t)| ≤ M_K |R|²` on the ball.
    pub m_k: f64,
    /// `|M(t)| ≤ M1 t^(r+s-mu)`.
    pub m1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionSetup {
    pub t: f64,
    pub t_max: f64,
    pub lambda: f64,
    pub k_radius: f64,
    pub m_k: f64,
    pub m1: f64,
    pub l_k: f64,
    pub l0: f64,
    pub picard_tol: f64,
    pub max_iters: usize,
}

/// Exponents of `T` in `L_K` and `L0`, and the `L0` denominator.
fn lipschitz_exponents(prof: &ExponentProfile) -> (f64, f64, f64) {
    let (k, q, r, s, mu) = (prof.k, prof.q.value, prof.r.value, prof.s.value, prof.mu.value);
    let exp_k = k + 2.0 * (r + q + 1.0) - mu;
    let exp_0 = r + s + 1.0 - mu;
    let denom = (r + s - mu - prof.lambda() + 1.0).abs();
    (exp_k, exp_0, denom)
}

/// `(L_K, L0)` at threshold `t`. A vanishing constant gives a vanishing
/// factor whatever the exponent.
pub fn lipschitz_factors(prof: &ExponentProfile, c: &Constants, t: f64) -> (f64, f64) {
    let (exp_k, exp_0, denom) = lipschitz_exponents(prof);
    let l_k = if c.m_k * c.k_radius == 0.0 {
        0.0
    } else {
        c.m_k * 2.0 * c.k_radius * t.powf(exp_k)
    };
    let l0 = if c.m1 == 0.0 {
        0.0
    } else {
        c.m1 * t.powf(exp_0) / denom
    };
    (l_k, l0)
}

/// Smallest `T = t0·2^j` with `L_K < 1/2` and `L0 < 1/2`.
pub fn select_t(
    prof: &ExponentProfile,
    c: &Constants,
    t0: f64,
    opts: &ContractionOptions,
) -> Result<ContractionSetup, ContractionError> {
    let (exp_k, exp_0, _) = lipschitz_exponents(prof);
    let not_found = |t: f64| {
        let (l_k, l0) = lipschitz_factors(prof, c, t);
        ContractionError::ThresholdNotFound {
            t,
            l_k,
            l0,
            m_k: c.m_k,
            m1: c.m1,
            k_radius: c.k_radius,
        }
    };
    let growing_k = c.m_k * c.k_radius != 0.0 && !(exp_k < 0.0);
    let growing_0 = c.m1 != 0.0 && !(exp_0 < 0.0);
    if growing_k || growing_0 {
        return Err(not_found(t0));
    }
    for j in 0..=MAX_DOUBLINGS {
        let t = t0 * 2f64.powi(j as i32);
        let (l_k, l0) = lipschitz_factors(prof, c, t);
        if l_k < 0.5 && l0 < 0.5 {
            return Ok(ContractionSetup {
                t,
                t_max: t * opts.tmax_factor,
                lambda: prof.lambda(),
                k_radius: c.k_radius,
                m_k: c.m_k,
                m1: c.m1,
                l_k,
                l0,
                picard_tol: opts.picard_tol,
                max_iters: opts.max_iters,
            });
        }
    }
    Err(not_found(t0 * 2f64.powi(MAX_DOUBLINGS as i32)))
}

/// `sup t^λ |g(t)|` over the grid nodes; zero values contribute zero.
pub fn weighted_norm(g: &GridFunction, lambda: f64) -> f64 {
    weighted_norm_values(g.grid(), g.values(), lambda)
}

pub fn weighted_norm_values(grid: &[f64], values: &[Vector], lambda: f64) -> f64 {
    grid.iter()
        .zip(values)
        .map(|(t, v)| {
            let norm = v.norm();
            if norm == 0.0 {
                0.0
            } else {
                t.powf(lambda) * norm
            }
        })
        .fold(0.0, f64::max)
}

fn det_floor(prof: &ExponentProfile) -> DetFloor {
    DetFloor::new(prof.p.value)
}

fn forcing_on(
    model: &Model,
    prof: &ExponentProfile,
    alpha: &[f64],
    start: f64,
    opts: &ContractionOptions,
) -> Result<TailIntegral, ContractionError> {
    let grid = geometric_grid(start, start * opts.tmax_factor, opts.points_per_decade)?;
    let lambda = prof.lambda();
    Ok(model.forcing(alpha, &grid, &opts.quad, lambda, det_floor(prof))?)
}

/// `K`, `M_K` and `M1` sampled over `[start, start·tmax_factor]`.
pub fn estimate_constants(
    model: &Model,
    prof: &ExponentProfile,
    alpha: &[f64],
    start: f64,
    opts: &ContractionOptions,
) -> Result<Constants, ContractionError> {
    let z = forcing_on(model, prof, alpha, start, opts)?;
    let lambda = prof.lambda();
    let k_radius = 2.0 * weighted_norm(&z.values, lambda);
    let floor = det_floor(prof);

    let nodes: Vec<f64> = z.plan.plan.cells.iter().flat_map(|c| c.t.iter().copied()).collect();
    let m1_exp = prof.mu.value - prof.r.value - prof.s.value;
    let m1_samples = nodes
        .par_iter()
        .map(|&t| {
            let norm = spectral_norm(&model.reduced_matrix(t, alpha, floor)?);
            Ok(if norm == 0.0 { 0.0 } else { norm * t.powf(m1_exp) })
        })
        .collect::<Result<Vec<f64>, ContractionError>>()?;
    let m1 = CONSTANT_SAFETY * m1_samples.into_iter().fold(0.0, f64::max);

    let grid = z.values.grid();
    let mut rho = 0.0f64;
    for &t in grid {
        let jn = spectral_norm(&model.jacobian(t, alpha)?);
        if jn != 0.0 && k_radius != 0.0 {
            rho = rho.max(jn * k_radius * t.powf(-lambda));
        }
    }
    let m_k = if rho == 0.0 {
        0.0
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (lo, hi) = (grid[0].ln(), grid[grid.len() - 1].ln());
        let n = model.n();
        let mut worst = 0.0f64;
        for _ in 0..opts.mk_samples {
            let t = rng.random_range(lo..=hi).exp();
            let mut dir = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
            while dir.norm() == 0.0 {
                dir = Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
            }
            let len = rho * 10f64.powf(rng.random_range(-3.0..=0.0));
            let r = dir.normalize() * len;
            let g = model.nonlinear_part(t, alpha, &r)?;
            worst = worst.max(g.norm() / (len * len));
        }
        CONSTANT_SAFETY * worst
    };
    for (name, v) in [("K", k_radius), ("M_K", m_k), ("M1", m1)] {
        if !v.is_finite() {
            return Err(ContractionError::BadConstant(format!("{name} = {v}")));
        }
    }
    Ok(Constants { k_radius, m_k, m1 })
}

/// Constants and threshold for one parameter value. Constants are first
/// sampled from `t0`, then resampled from the chosen `T` so they cover the
/// working grid; `T` is reselected with the larger of the two until stable.
pub fn prepare(
    model: &Model,
    prof: &ExponentProfile,
    alpha: &[f64],
    opts: &ContractionOptions,
) -> Result<ContractionSetup, ContractionError> {
    model.check_alpha(alpha)?;
    let t0 = model.sys.t0;
    let mut c = estimate_constants(model, prof, alpha, t0, opts)?;
    let mut setup = select_t(prof, &c, t0, opts)?;
    for _ in 0..8 {
        let fresh = estimate_constants(model, prof, alpha, setup.t, opts)?;
        if fresh.k_radius <= c.k_radius && fresh.m_k <= c.m_k && fresh.m1 <= c.m1 {
            break;
        }
        c = Constants {
            k_radius: c.k_radius.max(fresh.k_radius),
            m_k: c.m_k.max(fresh.m_k),
            m1: c.m1.max(fresh.m1),
        };
        setup = select_t(prof, &c, t0, opts)?;
    }
    Ok(setup)
}

struct Node {
    w: f64,
    stencil: Stencil,
    local: LocalData,
}

/// The integral operator `C ↦ Z - ∫_t^∞ [M C + 𝒢(C)]` discretized on the
/// working grid: `C` lives on grid nodes and is interpolated to the fixed
/// quadrature nodes of each cell.
pub struct Operator<'a> {
    model: &'a Model,
    forcing: TailIntegral,
    cells: Vec<Vec<Node>>,
    /// Decay exponent of `∫_t^∞ M C` for `C` in the weighted space.
    integral_decay: f64,
}

impl<'a> Operator<'a> {
    pub fn new(
        model: &'a Model,
        prof: &ExponentProfile,
        setup: &ContractionSetup,
        alpha: &[f64],
        opts: &ContractionOptions,
    ) -> Result<Self, ContractionError> {
        let forcing = forcing_on(model, prof, alpha, setup.t, opts)?;
        let floor = det_floor(prof);
        let z = &forcing.values;
        let cells = forcing
            .plan
            .plan
            .cells
            .par_iter()
            .map(|cell| {
                cell.t
                    .iter()
                    .zip(&cell.w)
                    .map(|(&t, &w)| {
                        let stencil = z.stencil(t).ok_or(GridError::BadRange {
                            start: z.start(),
                            end: z.end(),
                        })?;
                        let local = model.local_data(t, alpha, floor)?;
                        Ok(Node { w, stencil, local })
                    })
                    .collect::<Result<Vec<Node>, ContractionError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let integral_decay = setup.lambda + prof.mu.value - prof.r.value - prof.s.value - 1.0;
        Ok(Operator {
            model,
            forcing,
            cells,
            integral_decay,
        })
    }

    pub fn grid(&self) -> &[f64] {
        self.forcing.values.grid()
    }

    pub fn forcing(&self) -> &TailIntegral {
        &self.forcing
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.cells.iter().map(|c| c.len()).sum()
    }

    /// `∫_t^∞ [M C + 𝒢(C)]` at every grid node.
    pub fn integral(&self, c: &[Vector]) -> Result<Vec<Vector>, ContractionError> {
        let n = self.model.n();
        let cell_integrals = self
            .cells
            .par_iter()
            .map(|cell| {
                let mut acc = Vector::zeros(n);
                for node in cell {
                    let cv = node.stencil.apply(c);
                    let mut v = &node.local.reduced * &cv;
                    v += self.model.reduced_nonlinearity(&node.local, &cv)?;
                    acc.axpy(node.w, &v, 1.0);
                }
                Ok(acc)
            })
            .collect::<Result<Vec<Vector>, ContractionError>>()?;
        let mut partial = suffix_sums(&cell_integrals, n);
        let nonzero = partial.iter().any(|v| v.iter().any(|x| *x != 0.0));
        if nonzero && self.integral_decay > 0.0 && self.integral_decay.is_finite() {
            let grid = self.grid();
            let t_max = grid[grid.len() - 1];
            let rows: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] >= t_max / 10.0).collect();
            let tail = extrapolate_tail(grid, &partial, &rows, self.integral_decay, t_max);
            for v in partial.iter_mut() {
                *v += &tail;
            }
        }
        Ok(partial)
    }

    pub fn apply(&self, c: &[Vector]) -> Result<Vec<Vector>, ContractionError> {
        let integral = self.integral(c)?;
        Ok(self
            .forcing
            .values
            .values()
            .iter()
            .zip(integral)
            .map(|(z, i)| z - i)
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct RemainderSolution {
    pub z: GridFunction,
    pub c: GridFunction,
    /// `R = J C` at the grid nodes.
    pub r: GridFunction,
    pub iterations: usize,
    /// `‖C^{m+1} - C^m‖_λ` per iteration.
    pub increments: Vec<f64>,
    /// Weighted norm of the last increment.
    pub final_delta: f64,
    /// Bound on the part of the forcing integral beyond the grid end.
    pub tail_bound: f64,
    pub c_norm: f64,
    pub quadrature_nodes: usize,
}

impl RemainderSolution {
    /// Ratios of consecutive increments, skipping exact zeros.
    pub fn ratios(&self) -> Vec<f64> {
        self.increments
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios().into_iter().fold(0.0, f64::max)
    }
}

/// Successive approximations from `C⁰ = Z`.
pub fn picard_solve(
    model: &Model,
    prof: &ExponentProfile,
    setup: &ContractionSetup,
    alpha: &[f64],
    opts: &ContractionOptions,
) -> Result<RemainderSolution, ContractionError> {
    let op = Operator::new(model, prof, setup, alpha, opts)?;
    picard_with(&op, setup, alpha)
}

pub fn picard_with(
    op: &Operator<'_>,
    setup: &ContractionSetup,
    alpha: &[f64],
) -> Result<RemainderSolution, ContractionError> {
    let grid = op.grid().to_vec();
    let lambda = setup.lambda;
    let z = op.forcing().values.clone();
    let mut c: Vec<Vector> = z.values().to_vec();
    let mut increments = Vec::new();
    let mut converged = false;
    for iteration in 1..=setup.max_iters {
        let next = op.apply(&c)?;
        let norm = weighted_norm_values(&grid, &next, lambda);
        if norm > setup.k_radius * (1.0 + 1e-12) {
            return Err(ContractionError::BallEscape {
                iteration,
                norm,
                radius: setup.k_radius,
            });
        }
        let diff: Vec<Vector> = next.iter().zip(&c).map(|(a, b)| a - b).collect();
        let delta = weighted_norm_values(&grid, &diff, lambda);
        let prev_norm = weighted_norm_values(&grid, &c, lambda);
        increments.push(delta);
        c = next;
        if delta <= setup.picard_tol * prev_norm.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ContractionError::NoConvergence {
            iterations: setup.max_iters,
            last_delta: increments.last().copied().unwrap_or(f64::NAN),
        });
    }
    let model = op.model;
    let r_values = grid
        .iter()
        .zip(&c)
        .map(|(&t, cv)| Ok(model.jacobian(t, alpha)? * cv))
        .collect::<Result<Vec<Vector>, ContractionError>>()?;
    let c_norm = weighted_norm_values(&grid, &c, lambda);
    let c = z.with_values(c)?;
    let r = z.with_values(r_values)?;
    Ok(RemainderSolution {
        iterations: increments.len(),
        final_delta: *increments.last().expect("at least one iteration"),
        increments,
        tail_bound: op.forcing().tail_bound,
        c_norm,
        quadrature_nodes: op.quadrature_nodes(),
        z,
        c,
        r,
    })
}

/// The assembled solution `x = X + R` with its measured decay.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub x: GridFunction,
    pub family: GridFunction,
    pub r: GridFunction,
    /// `max t^ν |R|` over the grid.
    pub decay_constant: f64,
    /// Power-law fit of `|R|` over the top two decades.
    pub decay_fit: PowerFit,
}

pub fn assemble(
    model: &Model,
    alpha: &[f64],
    sol: &RemainderSolution,
    nu: f64,
) -> Result<Assembled, ContractionError> {
    let grid = sol.r.grid();
    let family = GridFunction::from_fn(grid.to_vec(), |t| {
        model.family_value(t, alpha).map_err(ContractionError::from)
    })?;
    let x_values = family
        .values()
        .iter()
        .zip(sol.r.values())
        .map(|(x, r)| x + r)
        .collect();
    let x = family.with_values(x_values)?;
    let decay_constant = weighted_norm(&sol.r, nu);
    let t_max = sol.r.end();
    let (ts, ys): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .zip(sol.r.values())
        .filter(|(t, _)| **t >= t_max / 100.0 * (1.0 - 1e-12))
        .map(|(t, r)| (*t, r.norm()))
        .unzip();
    let decay_fit = crate::exponents::fit_sampled(&ts, &ys, FitMode::Auto)
        .map_err(|e| ContractionError::BadConstant(e.to_string()))?;
    Ok(Assembled {
        x,
        family,
        r: sol.r.clone(),
        decay_constant,
        decay_fit,
    })
}

/// A random grid function with `‖C‖_λ ≤ radius`: smooth oscillations in
/// `log t` under the weight envelope.
pub fn random_ball_element(
    grid: &[f64],
    lambda: f64,
    radius: f64,
    dim: usize,
    rng: &mut impl Rng,
) -> Vec<Vector> {
    let coeffs: Vec<[f64; 4]> = (0..dim)
        .map(|_| {
            [
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(0.1..=3.0),
                rng.random_range(0.0..=std::f64::consts::TAU),
            ]
        })
        .collect();
    let shape: Vec<Vector> = grid
        .iter()
        .map(|&t| {
            Vector::from_fn(dim, |i, _| {
                let [a, b, freq, phase] = coeffs[i];
                (a + b * (freq * t.ln() + phase).sin()) * t.powf(-lambda)
            })
        })
        .collect();
    let norm = weighted_norm_values(grid, &shape, lambda);
    let scale = if norm > 0.0 {
        radius * rng.random_range(0.05..=1.0) / norm
    } else {
        0.0
    };
    shape.into_iter().map(|v| v * scale).collect()
}

/// Outcome of probing the operator's Lipschitz bound on random pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub pairs: usize,
    /// Largest observed `‖ΦC₁ - ΦC₂‖_λ / ‖C₁ - C₂‖_λ`.
    pub max_ratio: f64,
    /// `L0 + L_K`.
    pub bound: f64,
    pub holds: bool,
}

pub fn contraction_certificate(
    op: &Operator<'_>,
    setup: &ContractionSetup,
    pairs: usize,
    seed: u64,
) -> Result<Certificate, ContractionError> {
    let grid = op.grid();
    let dim = op.model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    for _ in 0..pairs {
        let c1 = random_ball_element(grid, setup.lambda, setup.k_radius, dim, &mut rng);
        let c2 = random_ball_element(grid, setup.lambda, setup.k_radius, dim, &mut rng);
        let i1 = op.integral(&c1)?;
        let i2 = op.integral(&c2)?;
        let num: Vec<Vector> = i1.iter().zip(&i2).map(|(a, b)| a - b).collect();
        let den: Vec<Vector> = c1.iter().zip(&c2).map(|(a, b)| a - b).collect();
        let d = weighted_norm_values(grid, &den, setup.lambda);
        if d > 0.0 {
            max_ratio = max_ratio.max(weighted_norm_values(grid, &num, setup.lambda) / d);
        }
    }
    let bound = setup.l0 + setup.l_k;
    Ok(Certificate {
        pairs,
        max_ratio,
        bound,
        holds: max_ratio <= bound && bound < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{profile, Density, Estimate, FitWindow, ProfileOptions};
    use crate::family::fixtures;

    fn exact_profile(n: usize, p: f64, q: f64, r: f64, s: f64, mu: f64) -> ExponentProfile {
        ExponentProfile {
            n,
            k: 0.0,
            p: Estimate::exact(p),
            q: Estimate::exact(q),
            r: Estimate::exact(r),
            s: Estimate::exact(s),
            mu: Estimate::exact(mu),
            a: 1.0,
        }
    }

    fn riccati_profile() -> ExponentProfile {
        exact_profile(1, -2.0, -2.0, 2.0, 0.0, 4.0)
    }

    #[test]
    fn weighted_norm_examples() {
        let grid = geometric_grid(10.0, 1e4, 50).unwrap();
        let g = GridFunction::from_fn::<GridError>(grid.clone(), |t| {
            Ok(Vector::from_element(1, 1.0 / t))
        })
        .unwrap();
        assert!((weighted_norm(&g, 1.0) - 1.0).abs() < 1e-12);
        let zero = GridFunction::zeros(grid, 2).unwrap();
        assert_eq!(weighted_norm(&zero, 1.0), 0.0);
        assert_eq!(weighted_norm(&zero, f64::INFINITY), 0.0);
    }

    #[test]
    fn riccati_forcing_norm() {
        let m = fixtures::riccati();
        let z = forcing_on(&m, &riccati_profile(), &[0.5], 2.0, &ContractionOptions::default())
            .unwrap();
        assert!((weighted_norm(&z.values, 1.0) - 0.25).abs() < 1e-8);
    }

    #[test]
    fn select_t_examples() {
        let prof = riccati_profile();
        let opts = ContractionOptions::default();
        let c = Constants {
            k_radius: 2.0,
            m_k: 1.0,
            m1: 2.0,
        };
        let setup = select_t(&prof, &c, 1.0, &opts).unwrap();
        assert_eq!(setup.t, 4.0);
        assert!((setup.l_k - 0.25).abs() < 1e-15);
        assert!((setup.l0 - 0.25).abs() < 1e-15);
        assert_eq!(setup.t_max, 40000.0);

        let zero = Constants {
            k_radius: 1.0,
            m_k: 0.0,
            m1: 0.0,
        };
        assert_eq!(select_t(&prof, &zero, 3.0, &opts).unwrap().t, 3.0);

        let boundary = exact_profile(1, -2.0, 0.0, 2.0, 0.0, 3.0);
        assert!(matches!(
            select_t(&boundary, &c, 1.0, &opts),
            Err(ContractionError::ThresholdNotFound { .. })
        ));

        let huge = Constants {
            k_radius: 1.0,
            m_k: 1e30,
            m1: 1.0,
        };
        assert!(matches!(
            select_t(&prof, &huge, 1.0, &opts),
            Err(ContractionError::ThresholdNotFound { .. })
        ));
    }

    #[test]
    fn riccati_fixed_point() {
        let m = fixtures::riccati();
        let prof = riccati_profile();
        let opts = ContractionOptions::default();
        let alpha = [0.5];
        let setup = prepare(&m, &prof, &alpha, &opts).unwrap();
        assert_eq!(setup.t, 2.0);
        assert!((setup.k_radius - 0.5).abs() < 1e-6);
        let sol = picard_solve(&m, &prof, &setup, &alpha, &opts).unwrap();
        assert!(sol.iterations <= 20);
        assert!(sol.max_ratio() <= 0.5, "{:?}", sol.increments);
        for (t, c) in sol.c.grid().iter().zip(sol.c.values()) {
            let exact = 0.25 / (t - 0.5);
            assert!((c[0] - exact).abs() <= 1e-7 * exact, "t={t}");
        }
        assert!(sol.c_norm <= setup.k_radius);
        let asm = assemble(&m, &alpha, &sol, 3.0).unwrap();
        let x10 = asm.x.eval(10.0).unwrap()[0];
        assert!((x10 - 1.0 / 9.5).abs() < 1e-6);
        assert!((asm.decay_fit.slope + 3.0).abs() < 0.1);
        for (t, (x, r)) in asm.x.grid().iter().zip(asm.x.values().iter().zip(asm.r.values())) {
            let j = m.jacobian(*t, &alpha).unwrap();
            assert_eq!(*r, &j * &sol.c.eval(*t).unwrap());
            assert_eq!(*x, m.family_value(*t, &alpha).unwrap() + r);
        }
    }

    #[test]
    fn exact_family_converges_immediately() {
        let m = fixtures::exact();
        let prof = ExponentProfile {
            mu: Estimate::exact(f64::INFINITY),
            s: Estimate::exact(f64::NEG_INFINITY),
            ..exact_profile(1, 0.0, 0.0, 0.0, 0.0, 0.0)
        };
        let opts = ContractionOptions::default();
        let setup = prepare(&m, &prof, &[0.3], &opts).unwrap();
        assert_eq!(setup.t, m.sys.t0);
        assert_eq!((setup.m_k, setup.m1, setup.k_radius), (0.0, 0.0, 0.0));
        let sol = picard_solve(&m, &prof, &setup, &[0.3], &opts).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.c.values().iter().all(|v| v[0] == 0.0));
        let asm = assemble(&m, &[0.3], &sol, f64::INFINITY).unwrap();
        assert!(asm.decay_fit.is_degenerate());
        assert_eq!(asm.x, asm.family);
    }

    #[test]
    fn riccati_certificate() {
        let m = fixtures::riccati();
        let prof = riccati_profile();
        let opts = ContractionOptions::default();
        let setup = prepare(&m, &prof, &[1.0], &opts).unwrap();
        assert_eq!(setup.t, 4.0);
        let op = Operator::new(&m, &prof, &setup, &[1.0], &opts).unwrap();
        let cert = contraction_certificate(&op, &setup, 20, 7).unwrap();
        assert!(cert.holds, "{cert:?}");
    }

    #[test]
    fn oscillator_converges() {
        let m = fixtures::oscillator();
        let popts = ProfileOptions {
            window: FitWindow::new(100.0, 1e4, 50).unwrap(),
            mode: FitMode::Auto,
            density: Density::from_phase_scale(Some(1.0)),
        };
        let prof = profile(&m, &m.fam.compact.tensor_grid(3), &popts).unwrap();
        let opts = ContractionOptions {
            tmax_factor: 100.0,
            quad: QuadratureSpec {
                phase_scale: Some(1.0),
                ..QuadratureSpec::default()
            },
            ..ContractionOptions::default()
        };
        let alpha = [1.0, -0.5];
        let setup = prepare(&m, &prof, &alpha, &opts).unwrap();
        assert_eq!(setup.t, 10.0);
        let op = Operator::new(&m, &prof, &setup, &alpha, &opts).unwrap();
        let sol = picard_with(&op, &setup, &alpha).unwrap();
        assert!(sol.iterations <= 15);
        assert!(sol.max_ratio() <= 0.5, "{:?}", sol.increments);
        assert!(sol.c_norm.is_finite() && sol.c_norm <= setup.k_radius);
        let cert = contraction_certificate(&op, &setup, 20, 11).unwrap();
        assert!(cert.holds, "{cert:?}");
    }

    #[test]
    fn alpha_outside_domain_is_rejected() {
        let m = fixtures::riccati();
        let err = prepare(&m, &riccati_profile(), &[3.0], &ContractionOptions::default());
        assert!(matches!(
            err,
            Err(ContractionError::Family(FamilyError::AlphaOutsideDomain { .. }))
        ));
    }
}
