//! Composite Simpson quadrature in `u = log t` over the cells of a geometric
//! grid, and tail integrals `∫_t^∞` truncated at the grid end.

use crate::grid::{GridError, GridFunction};
use crate::linalg::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSpec {
    /// Successive Simpson estimates must agree to this relative tolerance.
    pub rel_tol: f64,
    /// Angular frequency of the fastest phase, when the integrand oscillates.
    pub phase_scale: Option<f64>,
    /// Subintervals per period when `phase_scale` is set.
    pub per_period: usize,
    /// Bound on panel doublings per cell.
    pub max_doublings: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-8,
            phase_scale: None,
            per_period: 40,
            max_doublings: 14,
        }
    }
}

/// Fixed Simpson nodes and weights for one grid cell; weights include the
/// `dt = t du` factor.
#[derive(Clone, Debug)]
pub struct CellRule {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
}

impl CellRule {
    fn simpson(a: f64, b: f64, panels: usize) -> CellRule {
        let (ua, ub) = (a.ln(), b.ln());
        let m = 2 * panels;
        let h = (ub - ua) / m as f64;
        let mut t = Vec::with_capacity(m + 1);
        let mut w = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let tj = if j == 0 {
                a
            } else if j == m {
                b
            } else {
                (ua + h * j as f64).exp()
            };
            let coef = if j == 0 || j == m {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            t.push(tj);
            w.push(coef * h / 3.0 * tj);
        }
        CellRule { t, w }
    }
}

/// Per-cell quadrature rules for a grid, fixed once and reused.
#[derive(Clone, Debug)]
pub struct CellPlan {
    pub cells: Vec<CellRule>,
}

impl CellPlan {
    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|c| c.t.len()).sum()
    }
}

/// Result of refining a plan against a probe integrand.
#[derive(Clone, Debug)]
pub struct ProbedPlan {
    pub plan: CellPlan,
    /// `∫` of the probe over each cell.
    pub cell_integrals: Vec<Vector>,
    /// Euclidean norm of the probe at each node of each cell.
    pub node_norms: Vec<Vec<f64>>,
}

fn initial_panels(a: f64, b: f64, spec: &QuadratureSpec) -> usize {
    match spec.phase_scale {
        Some(omega) if omega > 0.0 => {
            let period = 2.0 * std::f64::consts::PI / omega;
            let step = period / spec.per_period.max(1) as f64;
            let subintervals = ((b.ln() - a.ln()) * b / step).ceil();
            ((subintervals / 2.0).ceil() as usize).max(1)
        }
        _ => 1,
    }
}

/// Doubles the Simpson panel count of every cell until consecutive estimates
/// of the probe integral agree to `rel_tol` (relative to the integral of the
/// probe's magnitude, so oscillatory cancellation does not stall refinement).
pub fn build_plan<E>(
    grid: &[f64],
    spec: &QuadratureSpec,
    mut probe: impl FnMut(f64) -> Result<Vector, E>,
) -> Result<ProbedPlan, E> {
    let mut cells = Vec::with_capacity(grid.len().saturating_sub(1));
    let mut cell_integrals = Vec::with_capacity(cells.capacity());
    let mut node_norms = Vec::with_capacity(cells.capacity());
    for pair in grid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mut panels = initial_panels(a, b, spec);
        let mut rule = CellRule::simpson(a, b, panels);
        let mut values = rule
            .t
            .iter()
            .map(|t| probe(*t))
            .collect::<Result<Vec<_>, E>>()?;
        let mut estimate = weighted_sum(&rule, &values);
        for _ in 0..spec.max_doublings {
            let finer = CellRule::simpson(a, b, 2 * panels);
            let mut fine_values = Vec::with_capacity(finer.t.len());
            for (j, t) in finer.t.iter().enumerate() {
                if j % 2 == 0 {
                    fine_values.push(values[j / 2].clone());
                } else {
                    fine_values.push(probe(*t)?);
                }
            }
            let fine_estimate = weighted_sum(&finer, &fine_values);
            let mass = abs_mass(&finer, &fine_values);
            let change = (&fine_estimate - &estimate).amax();
            panels *= 2;
            rule = finer;
            values = fine_values;
            estimate = fine_estimate;
            if change <= spec.rel_tol * mass || mass == 0.0 {
                break;
            }
        }
        node_norms.push(values.iter().map(|v| v.norm()).collect());
        cell_integrals.push(estimate);
        cells.push(rule);
    }
    Ok(ProbedPlan {
        plan: CellPlan { cells },
        cell_integrals,
        node_norms,
    })
}

fn weighted_sum(rule: &CellRule, values: &[Vector]) -> Vector {
    let mut acc = Vector::zeros(values[0].len());
    for (w, v) in rule.w.iter().zip(values) {
        acc.axpy(*w, v, 1.0);
    }
    acc
}

fn abs_mass(rule: &CellRule, values: &[Vector]) -> f64 {
    rule.w
        .iter()
        .zip(values)
        .map(|(w, v)| w * v.amax())
        .sum()
}

/// `S_i = Σ_{j ≥ i} cell_j`, with `S_m = 0` at the last node.
pub fn suffix_sums(cell_integrals: &[Vector], dim: usize) -> Vec<Vector> {
    let mut out = vec![Vector::zeros(dim); cell_integrals.len() + 1];
    for i in (0..cell_integrals.len()).rev() {
        out[i] = &out[i + 1] + &cell_integrals[i];
    }
    out
}

/// `∫_t^∞ w` on a grid: quadrature up to the grid end plus a power-law
/// extrapolation of the remaining tail.
#[derive(Clone, Debug)]
pub struct TailIntegral {
    pub values: GridFunction,
    /// Extrapolated `∫_{T_max}^∞ w`, already included in `values`.
    pub tail_estimate: Vector,
    /// Bound `c·T_max^{-decay}/decay` on `|∫_{T_max}^∞ w|` with
    /// `|w| ≤ c·t^{-decay-1}` fitted over the last decade.
    pub tail_bound: f64,
    pub plan: ProbedPlan,
}

/// Integrates `w` from each grid node to infinity assuming
/// `∫_t^∞ w ~ t^{-decay}` (`decay > 0`) beyond the grid.
pub fn integrate_to_infinity<E>(
    grid: &[f64],
    spec: &QuadratureSpec,
    decay: f64,
    w: impl FnMut(f64) -> Result<Vector, E>,
) -> Result<TailIntegral, E>
where
    E: From<GridError>,
{
    let probed = build_plan(grid, spec, w)?;
    let dim = probed
        .cell_integrals
        .first()
        .map(|v| v.len())
        .unwrap_or(0);
    let mut partial = suffix_sums(&probed.cell_integrals, dim);
    let t_max = *grid.last().expect("non-empty grid");

    let all_zero = partial.iter().all(|v| v.iter().all(|x| *x == 0.0))
        && probed.node_norms.iter().flatten().all(|x| *x == 0.0);
    let (tail_estimate, tail_bound) = if all_zero || !(decay > 0.0 && decay.is_finite()) {
        (Vector::zeros(dim), 0.0)
    } else {
        let last_decade: Vec<usize> = (0..grid.len())
            .filter(|&i| grid[i] >= t_max / 10.0)
            .collect();
        let rows: Vec<usize> = if last_decade.len() >= 3 {
            last_decade
        } else {
            (0..grid.len()).collect()
        };
        let estimate = extrapolate_tail(grid, &partial, &rows, decay, t_max);
        let mut c = 0.0f64;
        for (cell, norms) in probed.plan.cells.iter().zip(&probed.node_norms) {
            for (t, nrm) in cell.t.iter().zip(norms) {
                if *t >= t_max / 10.0 {
                    c = c.max(nrm * t.powf(decay + 1.0));
                }
            }
        }
        (estimate, c * t_max.powf(-decay) / decay)
    };
    for v in partial.iter_mut() {
        *v += &tail_estimate;
    }
    let values = GridFunction::new(grid.to_vec(), partial)?;
    Ok(TailIntegral {
        values,
        tail_estimate,
        tail_bound,
        plan: probed,
    })
}

/// Fits `F(t) ≈ c₁·(t/T_max)^{-decay} + c₂·(t/T_max)^{-decay-1} + d` per
/// component over `rows`; the tail `∫_{T_max}^∞` is then `-d`. The second
/// power absorbs the leading correction of an asymptotic expansion.
pub(crate) fn extrapolate_tail(
    grid: &[f64],
    partial: &[Vector],
    rows: &[usize],
    decay: f64,
    t_max: f64,
) -> Vector {
    let dim = partial[0].len();
    let columns = if rows.len() >= 6 { 3 } else { 2 };
    let design = Matrix::from_fn(rows.len(), columns, |i, j| {
        let x = grid[rows[i]] / t_max;
        match j {
            0 => 1.0,
            1 => x.powf(-decay),
            _ => x.powf(-decay - 1.0),
        }
    });
    let scale: Vec<f64> = (0..columns).map(|j| design.column(j).amax()).collect();
    let design = Matrix::from_fn(rows.len(), columns, |i, j| design[(i, j)] / scale[j]);
    let svd = design.svd(true, true);
    let mut out = Vector::zeros(dim);
    for comp in 0..dim {
        let rhs = Vector::from_fn(rows.len(), |i, _| partial[rows[i]][comp]);
        if let Ok(coef) = svd.solve(&rhs, 1e-14) {
            out[comp] = -coef[0] / scale[0];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::geometric_grid;

    type R = Result<Vector, GridError>;

    #[test]
    fn power_law_tail_is_exact() {
        // ∫_t^∞ a²/η² dη = a²/t
        let grid = geometric_grid(2.0, 2e4, 50).unwrap();
        let spec = QuadratureSpec::default();
        let tail = integrate_to_infinity(&grid, &spec, 1.0, |t| -> R {
            Ok(Vector::from_element(1, 1.0 / (t * t)))
        })
        .unwrap();
        for (t, v) in grid.iter().zip(tail.values.values()) {
            assert!((v[0] - 1.0 / t).abs() <= 1e-9 / t, "t={t}");
        }
        assert!((tail.tail_estimate[0] - 1.0 / 2e4).abs() < 1e-12);
        assert!(tail.tail_bound >= tail.tail_estimate[0] * (1.0 - 1e-6));
    }

    #[test]
    fn zero_integrand_has_zero_tail() {
        let grid = geometric_grid(1.0, 100.0, 20).unwrap();
        let tail = integrate_to_infinity(&grid, &QuadratureSpec::default(), 1.0, |_| -> R {
            Ok(Vector::zeros(2))
        })
        .unwrap();
        assert!(tail.values.values().iter().all(|v| v.amax() == 0.0));
        assert_eq!(tail.tail_bound, 0.0);
    }

    #[test]
    fn oscillatory_integrand_with_phase_hint() {
        // ∫_t^T cos(η) dη = sin(T) - sin(t)
        let grid = geometric_grid(10.0, 200.0, 20).unwrap();
        let spec = QuadratureSpec {
            phase_scale: Some(1.0),
            ..QuadratureSpec::default()
        };
        let probed = build_plan(&grid, &spec, |t| -> R { Ok(Vector::from_element(1, t.cos())) })
            .unwrap();
        let sums = suffix_sums(&probed.cell_integrals, 1);
        for (t, s) in grid.iter().zip(&sums) {
            let exact = 200f64.sin() - t.sin();
            assert!((s[0] - exact).abs() < 1e-7, "t={t}: {} vs {exact}", s[0]);
        }
    }
}
