//! The ODE system `dx/dt = t^k f(x, t)`, the candidate family `X(t; a)`, and
//! the derived quantities used to build the exact solution: residual `Y`,
//! parameter Jacobian `J = ∂X/∂a`, linearization `M0 = ∂f/∂x (X, t)`, the
//! quadratic remainder `G`, the reduced matrix `M = -J⁻¹ ∂Y/∂a`, and the
//! forcing `Z(t) = ∫_t^∞ J⁻¹Y`.
//!
//! All derivatives are symbolic; nothing here differentiates numerically.

use thiserror::Error;

use crate::expr::{Expr, ExprError, Var};
use crate::grid::GridError;
use crate::linalg::{inverse_with_det, LinalgError, Matrix, Vector};
use crate::quadrature::{integrate_to_infinity, QuadratureSpec, TailIntegral};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("parameter {alpha:?} is outside the parameter domain")]
    AlphaOutsideDomain { alpha: Vec<f64> },
    #[error("family is not bounded: |X| reaches {value:e} at t = {t:e}")]
    UnboundedFamily { t: f64, value: f64 },
    #[error("forcing integral diverges: decay exponent of J⁻¹Y is {exponent}, need < -1")]
    NonConvergentTail { exponent: f64 },
}

/// Axis-aligned box of parameters or states.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBox {
    pub bounds: Vec<(f64, f64)>,
}

impl ParamBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        ParamBox { bounds }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains_closed(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && self
                .bounds
                .iter()
                .zip(p)
                .all(|((lo, hi), v)| *v >= *lo && *v <= *hi)
    }

    pub fn contains_open(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && self
                .bounds
                .iter()
                .zip(p)
                .all(|((lo, hi), v)| *v > *lo && *v < *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Tensor grid with `per_axis` equispaced points per axis (endpoints
    /// included), in lexicographic order.
    pub fn tensor_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(1);
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|(lo, hi)| {
                if per_axis == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..per_axis)
                        .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SystemDef {
    pub n: usize,
    pub k: f64,
    pub f: Vec<Expr>,
    pub t0: f64,
    pub domain_hint: Option<ParamBox>,
}

impl SystemDef {
    pub fn new(
        n: usize,
        k: f64,
        f: Vec<Expr>,
        t0: f64,
        domain_hint: Option<ParamBox>,
    ) -> Result<Self, FamilyError> {
        if n == 0 {
            return Err(FamilyError::InvalidSystem("n must be at least 1".into()));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(FamilyError::InvalidSystem(format!("k = {k} must be >= 0")));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(FamilyError::InvalidSystem(format!("t0 = {t0} must be > 0")));
        }
        if f.len() != n {
            return Err(FamilyError::InvalidSystem(format!(
                "f has {} components, expected {n}",
                f.len()
            )));
        }
        if let Some(i) = f.iter().position(Expr::uses_params) {
            return Err(FamilyError::InvalidSystem(format!(
                "f[{i}] references parameters"
            )));
        }
        if let Some(hint) = &domain_hint {
            if hint.dim() != n {
                return Err(FamilyError::InvalidSystem(format!(
                    "domain_hint has {} axes, expected {n}",
                    hint.dim()
                )));
            }
        }
        Ok(SystemDef {
            n,
            k,
            f,
            t0,
            domain_hint,
        })
    }

    /// `t^k`, exactly 1 when `k = 0`.
    pub fn time_factor(&self, t: f64) -> f64 {
        if self.k == 0.0 {
            1.0
        } else {
            t.powf(self.k)
        }
    }

    /// `f(x, t)` without the time factor.
    pub fn field(&self, t: f64, x: &[f64]) -> Result<Vector, ExprError> {
        let mut out = Vector::zeros(self.n);
        for (i, fi) in self.f.iter().enumerate() {
            out[i] = fi.eval(t, x, &[])?;
        }
        Ok(out)
    }

    /// Full right side `t^k f(x, t)`.
    pub fn rhs(&self, t: f64, x: &[f64]) -> Result<Vector, ExprError> {
        Ok(self.field(t, x)? * self.time_factor(t))
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.domain_hint
            .as_ref()
            .is_none_or(|hint| hint.contains_closed(x))
    }
}

#[derive(Clone, Debug)]
pub struct AsymptoticFamily {
    pub x: Vec<Expr>,
    /// Open parameter domain `A0`.
    pub param_domain: ParamBox,
    /// Closed compact strictly inside `A0`.
    pub compact: ParamBox,
}

impl AsymptoticFamily {
    pub fn new(x: Vec<Expr>, param_domain: ParamBox, compact: ParamBox) -> Result<Self, FamilyError> {
        let n = x.len();
        if n == 0 {
            return Err(FamilyError::InvalidFamily("X is empty".into()));
        }
        if let Some(i) = x.iter().position(Expr::uses_state) {
            return Err(FamilyError::InvalidFamily(format!(
                "X[{i}] references state variables"
            )));
        }
        if param_domain.dim() != n || compact.dim() != n {
            return Err(FamilyError::InvalidFamily(format!(
                "parameter boxes must have {n} axes"
            )));
        }
        for (axis, ((lo0, hi0), (lo, hi))) in param_domain
            .bounds
            .iter()
            .zip(&compact.bounds)
            .enumerate()
        {
            if !(lo <= hi) {
                return Err(FamilyError::InvalidFamily(format!(
                    "compact axis {axis} is empty"
                )));
            }
            if !(lo0 < lo && hi < hi0) {
                return Err(FamilyError::InvalidFamily(format!(
                    "compact axis {axis} [{lo}, {hi}] is not strictly inside A0 ({lo0}, {hi0})"
                )));
            }
        }
        Ok(AsymptoticFamily {
            x,
            param_domain,
            compact,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn value(&self, t: f64, alpha: &[f64]) -> Result<Vector, ExprError> {
        let mut out = Vector::zeros(self.dim());
        for (i, xi) in self.x.iter().enumerate() {
            out[i] = xi.eval(t, &[], alpha)?;
        }
        Ok(out)
    }
}

/// Determinant floor `scale · t^exponent` used when inverting `J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetFloor {
    pub scale: f64,
    pub exponent: f64,
}

impl DetFloor {
    pub fn new(exponent: f64) -> Self {
        DetFloor {
            scale: 1e-10,
            exponent,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        if self.exponent.is_finite() {
            self.scale * t.powf(self.exponent)
        } else {
            0.0
        }
    }
}

impl Default for DetFloor {
    fn default() -> Self {
        DetFloor::new(0.0)
    }
}

/// Everything the contraction construction needs at one `(t, a)`.
#[derive(Clone, Debug)]
pub struct LocalData {
    pub t: f64,
    pub time_factor: f64,
    pub x: Vector,
    pub field: Vector,
    pub linearization: Matrix,
    pub jacobian: Matrix,
    pub jacobian_inv: Matrix,
    pub reduced: Matrix,
}

/// A system paired with a candidate family, with all symbolic derivatives
/// prepared once.
#[derive(Clone, Debug)]
pub struct Model {
    pub sys: SystemDef,
    pub fam: AsymptoticFamily,
    dx_dt: Vec<Expr>,
    jac: Vec<Expr>,
    djac_dt: Vec<Expr>,
    df_dx: Vec<Expr>,
    /// Nonzero second derivatives `∂²f_i/∂x_j∂x_l` with `j ≤ l`.
    d2f: Vec<(usize, usize, usize, Expr)>,
    /// `t^k f(X, t)`, the second term of the residual.
    forced: Vec<Expr>,
    residual: Vec<Expr>,
    dres_da: Vec<Expr>,
}

/// Gauss-Legendre nodes and weights on [0, 1].
const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_9, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

/// Below this ratio `|R| / max(1, |X|)` the remainder `G` is evaluated
/// from second derivatives instead of as a difference.
const TAYLOR_SWITCH: f64 = 1e-2;

impl Model {
    pub fn new(sys: SystemDef, fam: AsymptoticFamily) -> Result<Self, FamilyError> {
        let n = sys.n;
        if fam.dim() != n {
            return Err(FamilyError::InvalidFamily(format!(
                "X has {} components, expected {n}",
                fam.dim()
            )));
        }
        let mut bad = None;
        for e in sys.f.iter().chain(&fam.x) {
            e.visit_vars(&mut |v| match v {
                Var::X(i) | Var::A(i) if i >= n => bad = Some(v),
                _ => {}
            });
        }
        if let Some(v) = bad {
            return Err(FamilyError::InvalidSystem(format!(
                "variable {v} out of range for n = {n}"
            )));
        }

        let dx_dt: Vec<Expr> = fam.x.iter().map(|x| x.differentiate(Var::T)).collect();
        let mut jac = Vec::with_capacity(n * n);
        let mut df_dx = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                jac.push(fam.x[i].differentiate(Var::A(j)));
                df_dx.push(sys.f[i].differentiate(Var::X(j)));
            }
        }
        let djac_dt = jac.iter().map(|e| e.differentiate(Var::T)).collect();
        let mut d2f = Vec::new();
        for (i, fi) in sys.f.iter().enumerate() {
            for j in 0..n {
                let dj = fi.differentiate(Var::X(j));
                for l in j..n {
                    let djl = dj.differentiate(Var::X(l));
                    if djl != Expr::Num(0.0) {
                        d2f.push((i, j, l, djl));
                    }
                }
            }
        }

        let time_factor = if sys.k == 0.0 {
            None
        } else {
            Some(Expr::Pow(Box::new(Expr::Var(Var::T)), sys.k))
        };
        let forced: Vec<Expr> = (0..n)
            .map(|i| {
                let f_on_family = sys.f[i].substitute_state(&fam.x);
                match &time_factor {
                    Some(tk) => Expr::Mul(Box::new(tk.clone()), Box::new(f_on_family)),
                    None => f_on_family,
                }
            })
            .collect();
        let residual: Vec<Expr> = (0..n)
            .map(|i| Expr::Sub(Box::new(dx_dt[i].clone()), Box::new(forced[i].clone())))
            .collect();
        let mut dres_da = Vec::with_capacity(n * n);
        for yi in &residual {
            for j in 0..n {
                dres_da.push(yi.differentiate(Var::A(j)));
            }
        }
        Ok(Model {
            sys,
            fam,
            dx_dt,
            jac,
            djac_dt,
            df_dx,
            d2f,
            forced,
            residual,
            dres_da,
        })
    }

    pub fn n(&self) -> usize {
        self.sys.n
    }

    fn eval_vec(exprs: &[Expr], t: f64, x: &[f64], alpha: &[f64]) -> Result<Vector, ExprError> {
        let mut out = Vector::zeros(exprs.len());
        for (i, e) in exprs.iter().enumerate() {
            out[i] = e.eval(t, x, alpha)?;
        }
        Ok(out)
    }

    fn eval_mat(
        &self,
        exprs: &[Expr],
        t: f64,
        x: &[f64],
        alpha: &[f64],
    ) -> Result<Matrix, ExprError> {
        let n = self.n();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = exprs[i * n + j].eval(t, x, alpha)?;
            }
        }
        Ok(out)
    }

    pub fn family_value(&self, t: f64, alpha: &[f64]) -> Result<Vector, ExprError> {
        self.fam.value(t, alpha)
    }

    pub fn family_derivative(&self, t: f64, alpha: &[f64]) -> Result<Vector, ExprError> {
        Self::eval_vec(&self.dx_dt, t, &[], alpha)
    }

    /// `Y(t; a) = dX/dt - t^k f(X, t)`. Components within rounding of the
    /// two terms are returned as exact zeros, so an exact family has `Y ≡ 0`
    /// rather than noise that `J⁻¹` would amplify.
    pub fn residual(&self, t: f64, alpha: &[f64]) -> Result<Vector, ExprError> {
        let mut y = Self::eval_vec(&self.residual, t, &[], alpha)?;
        for i in 0..y.len() {
            let scale = self.dx_dt[i].eval(t, &[], alpha)?.abs()
                + self.forced[i].eval(t, &[], alpha)?.abs();
            if y[i].abs() <= 16.0 * f64::EPSILON * scale {
                y[i] = 0.0;
            }
        }
        Ok(y)
    }

    /// `∂Y/∂a`, differentiated symbolically from the residual expression.
    pub fn residual_param_derivative(&self, t: f64, alpha: &[f64]) -> Result<Matrix, ExprError> {
        self.eval_mat(&self.dres_da, t, &[], alpha)
    }

    /// `J(t; a) = ∂X/∂a`.
    pub fn jacobian(&self, t: f64, alpha: &[f64]) -> Result<Matrix, ExprError> {
        self.eval_mat(&self.jac, t, &[], alpha)
    }

    pub fn jacobian_time_derivative(&self, t: f64, alpha: &[f64]) -> Result<Matrix, ExprError> {
        self.eval_mat(&self.djac_dt, t, &[], alpha)
    }

    /// `∂f/∂x` at an arbitrary state.
    pub fn field_jacobian(&self, t: f64, x: &[f64]) -> Result<Matrix, ExprError> {
        self.eval_mat(&self.df_dx, t, x, &[])
    }

    /// `M0(t) = ∂f/∂x (X(t; a), t)`.
    pub fn linearization(&self, t: f64, alpha: &[f64]) -> Result<Matrix, ExprError> {
        let x = self.family_value(t, alpha)?;
        self.field_jacobian(t, x.as_slice())
    }

    /// `G(R, t) = f(X + R, t) - f(X, t) - ∂f/∂x(X, t) R`.
    pub fn nonlinear_part(&self, t: f64, alpha: &[f64], r: &Vector) -> Result<Vector, ExprError> {
        let x = self.family_value(t, alpha)?;
        let fx = self.sys.field(t, x.as_slice())?;
        let m0 = self.field_jacobian(t, x.as_slice())?;
        self.quadratic_remainder(t, &x, &fx, &m0, r)
    }

    /// For small `R` the difference form loses all digits to cancellation,
    /// so it is replaced by `∫₀¹ (1-s) f''(X + sR)[R, R] ds`.
    fn quadratic_remainder(
        &self,
        t: f64,
        x: &Vector,
        fx: &Vector,
        m0: &Matrix,
        r: &Vector,
    ) -> Result<Vector, ExprError> {
        if r.amax() > TAYLOR_SWITCH * x.amax().max(1.0) {
            let shifted = x + r;
            let f_shift = self.sys.field(t, shifted.as_slice())?;
            return Ok(f_shift - fx - m0 * r);
        }
        let mut out = Vector::zeros(r.len());
        let mut point = x.clone();
        for (s, w) in GAUSS4 {
            point.copy_from(x);
            point.axpy(s, r, 1.0);
            for (i, j, l, e) in &self.d2f {
                let sym = if j == l { 1.0 } else { 2.0 };
                out[*i] += w * (1.0 - s) * sym * e.eval(t, point.as_slice(), &[])? * r[*j] * r[*l];
            }
        }
        Ok(out)
    }

    /// `M(t) = -J⁻¹ ∂Y/∂a`.
    pub fn reduced_matrix(
        &self,
        t: f64,
        alpha: &[f64],
        floor: DetFloor,
    ) -> Result<Matrix, FamilyError> {
        let j = self.jacobian(t, alpha)?;
        let (j_inv, _) = inverse_with_det(&j, floor.at(t))?;
        let dy = self.residual_param_derivative(t, alpha)?;
        Ok(-(j_inv * dy))
    }

    /// `J⁻¹ Y`, the integrand of the forcing.
    pub fn forcing_integrand(
        &self,
        t: f64,
        alpha: &[f64],
        floor: DetFloor,
    ) -> Result<Vector, FamilyError> {
        let y = self.residual(t, alpha)?;
        if y.iter().all(|v| *v == 0.0) {
            return Ok(y);
        }
        let j = self.jacobian(t, alpha)?;
        let (j_inv, _) = inverse_with_det(&j, floor.at(t))?;
        Ok(j_inv * y)
    }

    /// `Z(t) = ∫_t^∞ J⁻¹Y dη` on `grid`. `lambda` is the decay exponent of
    /// `Z` (`μ - r - 1`), used for the tail beyond the grid end.
    pub fn forcing(
        &self,
        alpha: &[f64],
        grid: &[f64],
        quad: &QuadratureSpec,
        lambda: f64,
        floor: DetFloor,
    ) -> Result<TailIntegral, FamilyError> {
        self.check_alpha(alpha)?;
        let integral = integrate_to_infinity(grid, quad, lambda, |t| {
            self.forcing_integrand(t, alpha, floor)
        })?;
        let nonzero = integral
            .plan
            .node_norms
            .iter()
            .flatten()
            .any(|v| *v != 0.0);
        if nonzero && !(lambda > 0.0) {
            return Err(FamilyError::NonConvergentTail {
                exponent: -lambda - 1.0,
            });
        }
        Ok(integral)
    }

    /// All `C`-independent quantities at one node.
    pub fn local_data(
        &self,
        t: f64,
        alpha: &[f64],
        floor: DetFloor,
    ) -> Result<LocalData, FamilyError> {
        let x = self.family_value(t, alpha)?;
        let field = self.sys.field(t, x.as_slice())?;
        let linearization = self.field_jacobian(t, x.as_slice())?;
        let jacobian = self.jacobian(t, alpha)?;
        let (jacobian_inv, _) = inverse_with_det(&jacobian, floor.at(t))?;
        let dy = self.residual_param_derivative(t, alpha)?;
        let reduced = -(&jacobian_inv * dy);
        Ok(LocalData {
            t,
            time_factor: self.sys.time_factor(t),
            x,
            field,
            linearization,
            jacobian,
            jacobian_inv,
            reduced,
        })
    }

    /// `𝒢(C, t) = t^k J⁻¹ G(J C, t)` from cached local data.
    pub fn reduced_nonlinearity(&self, local: &LocalData, c: &Vector) -> Result<Vector, ExprError> {
        let r = &local.jacobian * c;
        if r.iter().all(|v| *v == 0.0) {
            return Ok(Vector::zeros(c.len()));
        }
        let g = self.quadratic_remainder(
            local.t,
            &local.x,
            &local.field,
            &local.linearization,
            &r,
        )?;
        Ok(&local.jacobian_inv * g * local.time_factor)
    }

    pub fn check_alpha(&self, alpha: &[f64]) -> Result<(), FamilyError> {
        if self.fam.param_domain.contains_open(alpha) {
            Ok(())
        } else {
            Err(FamilyError::AlphaOutsideDomain {
                alpha: alpha.to_vec(),
            })
        }
    }

    /// Largest entry of `dJ/dt - t^k M0 J - ∂Y/∂a`, relative to the largest
    /// entry of the three terms (floored at 1). Zero up to rounding for any
    /// well-formed model.
    pub fn jacobian_identity_defect(&self, t: f64, alpha: &[f64]) -> Result<f64, ExprError> {
        let dj = self.jacobian_time_derivative(t, alpha)?;
        let lin = self.linearization(t, alpha)? * self.jacobian(t, alpha)? * self.sys.time_factor(t);
        let dy = self.residual_param_derivative(t, alpha)?;
        let scale = dj.amax().max(lin.amax()).max(dy.amax()).max(1.0);
        Ok((dj - lin - dy).amax() / scale)
    }

    /// Numerical check that `X` stays bounded for `t ≥ t0` and `a` in the
    /// compact: sampled over six decades, the last decade may not exceed ten
    /// times the earlier maximum. Returns the sampled bound on `|X|`.
    pub fn check_bounded(&self, alphas: &[Vec<f64>]) -> Result<f64, FamilyError> {
        let t0 = self.sys.t0;
        let grid = crate::grid::geometric_grid(t0, t0 * 1e6, 20)?;
        let split = t0 * 1e5;
        let (mut early, mut late) = (0.0f64, 0.0f64);
        for alpha in alphas {
            for &t in &grid {
                let v = self.family_value(t, alpha)?.amax();
                if !v.is_finite() {
                    return Err(FamilyError::UnboundedFamily { t, value: v });
                }
                if t < split {
                    early = early.max(v);
                } else {
                    late = late.max(v);
                }
            }
        }
        if late > 10.0 * early + 1.0 {
            return Err(FamilyError::UnboundedFamily {
                t: t0 * 1e6,
                value: late,
            });
        }
        Ok(early.max(late))
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::grid::geometric_grid;

    #[test]
    fn riccati_residual_and_jacobian() {
        let m = riccati();
        let y = m.residual(10.0, &[1.0]).unwrap();
        assert!((y[0] - 1e-4).abs() < 1e-18);
        let j = m.jacobian(10.0, &[1.0]).unwrap();
        assert!((j[(0, 0)] - 0.01).abs() < 1e-18);
        let m0 = m.linearization(10.0, &[1.0]).unwrap();
        assert!((m0[(0, 0)] + 0.22).abs() < 1e-15);
        let g = m.nonlinear_part(37.0, &[0.3], &Vector::from_element(1, 0.1)).unwrap();
        assert!((g[0] + 0.01).abs() < 1e-15);
        let red = m.reduced_matrix(10.0, &[1.0], DetFloor::new(-2.0)).unwrap();
        assert!((red[(0, 0)] + 0.02).abs() < 1e-15);
    }

    #[test]
    fn exact_family_and_pendulum_have_zero_residual() {
        let m = exact();
        for t in [1.0, 7.5, 1e3] {
            assert_eq!(m.residual(t, &[0.7]).unwrap()[0], 0.0);
            assert_eq!(m.jacobian(t, &[0.7]).unwrap(), Matrix::identity(1, 1));
            let red = m.reduced_matrix(t, &[0.7], DetFloor::default()).unwrap();
            assert_eq!(red[(0, 0)], 0.0);
        }
        let p = pendulum();
        for t in [1.0, 3.0, 100.0] {
            assert_eq!(p.residual(t, &[0.1, 0.2]).unwrap().amax(), 0.0);
        }
        let m0 = p.linearization(2.0, &[0.0, 0.0]).unwrap();
        assert_eq!(m0, Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    }

    #[test]
    fn linear_field_has_exact_linearization() {
        let m = model(
            &["2*x1 - x2", "x1 + 3*x2"],
            &["a1/t", "a2/t"],
            0.0,
            1.0,
            vec![(-2.0, 2.0); 2],
            vec![(-1.0, 1.0); 2],
        );
        let a = Matrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 3.0]);
        for t in [1.5, 20.0] {
            assert_eq!(m.linearization(t, &[0.3, -0.4]).unwrap(), a);
            let g = m
                .nonlinear_part(t, &[0.3, -0.4], &Vector::from_vec(vec![0.5, -2.0]))
                .unwrap();
            assert!(g.amax() < 1e-15);
        }
        assert_eq!(
            m.nonlinear_part(3.0, &[0.3, -0.4], &Vector::zeros(2)).unwrap(),
            Vector::zeros(2)
        );
    }

    #[test]
    fn jacobian_identity_holds_with_time_factor() {
        let m = model(
            &["-x1^2 + x2", "x1*x2"],
            &["a1/t + a2/t^3", "exp(-a2*t)"],
            1.0,
            1.0,
            vec![(0.1, 2.0); 2],
            vec![(0.5, 1.0); 2],
        );
        for t in [1.0, 4.0, 30.0] {
            assert!(m.jacobian_identity_defect(t, &[0.7, 0.8]).unwrap() < 1e-13);
        }
    }

    #[test]
    fn remainder_is_accurate_for_tiny_increments() {
        let m = riccati();
        for r in [1e-12, 1e-6, 5e-3] {
            let g = m.nonlinear_part(1e3, &[0.4], &Vector::from_element(1, r)).unwrap();
            assert!((g[0] + r * r).abs() <= 1e-14 * r * r, "r = {r}: {}", g[0]);
        }
        let osc = oscillator();
        let r = Vector::from_vec(vec![3e-3, -2e-3]);
        let taylor = osc.nonlinear_part(20.0, &[0.3, 0.2], &r).unwrap();
        let x = osc.family_value(20.0, &[0.3, 0.2]).unwrap();
        let direct = osc.sys.field(20.0, (&x + &r).as_slice()).unwrap()
            - osc.sys.field(20.0, x.as_slice()).unwrap()
            - osc.linearization(20.0, &[0.3, 0.2]).unwrap() * &r;
        assert!((taylor - direct).amax() < 1e-15);
    }

    #[test]
    fn oscillator_jacobian_is_rotation() {
        let m = oscillator();
        for t in [10.0, 12.3, 400.0] {
            let j = m.jacobian(t, &[0.4, -0.9]).unwrap();
            let (s, c) = t.sin_cos();
            let rot = Matrix::from_row_slice(2, 2, &[c, s, -s, c]);
            assert!((j - &rot).amax() < 1e-15);
            assert!((rot.determinant() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn oscillator_reduced_matrix_bound() {
        let m = oscillator();
        let grid = geometric_grid(10.0, 1e4, 100).unwrap();
        for alpha in [[1.0f64, 1.0], [-1.0, 0.5], [0.2, -0.7]] {
            let c = 3.0 * (alpha[0].abs() + alpha[1].abs()).powi(2);
            for &t in &grid {
                let red = m.reduced_matrix(t, &alpha, DetFloor::default()).unwrap();
                assert!(crate::linalg::spectral_norm(&red) <= c * t.powi(-3) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn riccati_forcing_closed_form() {
        let m = riccati();
        let grid = geometric_grid(2.0, 2e4, 200).unwrap();
        let z = m
            .forcing(&[1.0], &grid, &QuadratureSpec::default(), 1.0, DetFloor::new(-2.0))
            .unwrap();
        let z10 = z.values.eval(10.0).unwrap()[0];
        assert!((z10 - 0.1).abs() < 1e-8, "{z10}");
        assert!(z.tail_bound > 0.0);
    }

    #[test]
    fn zero_residual_gives_zero_forcing() {
        let m = exact();
        let grid = geometric_grid(1.0, 1e3, 50).unwrap();
        let z = m
            .forcing(&[0.5], &grid, &QuadratureSpec::default(), f64::INFINITY, DetFloor::default())
            .unwrap();
        assert!(z.values.values().iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn forcing_rejects_divergent_tail() {
        let m = riccati();
        let grid = geometric_grid(2.0, 200.0, 50).unwrap();
        let err = m
            .forcing(&[1.0], &grid, &QuadratureSpec::default(), -0.5, DetFloor::new(-2.0))
            .unwrap_err();
        assert!(matches!(err, FamilyError::NonConvergentTail { .. }));
    }

    #[test]
    fn alpha_outside_domain() {
        let m = riccati();
        let grid = geometric_grid(2.0, 200.0, 50).unwrap();
        assert!(matches!(
            m.forcing(&[3.0], &grid, &QuadratureSpec::default(), 1.0, DetFloor::default()),
            Err(FamilyError::AlphaOutsideDomain { .. })
        ));
    }

    #[test]
    fn construction_errors() {
        use crate::expr::parse;
        let f = vec![parse("a1*x1", 1).unwrap()];
        assert!(SystemDef::new(1, 0.0, f, 1.0, None).is_err());
        let g = vec![parse("x1", 1).unwrap()];
        assert!(SystemDef::new(1, -1.0, g.clone(), 1.0, None).is_err());
        assert!(SystemDef::new(1, 0.0, g.clone(), 0.0, None).is_err());
        let x = vec![parse("x1/t", 1).unwrap()];
        assert!(AsymptoticFamily::new(
            x,
            ParamBox::new(vec![(-1.0, 1.0)]),
            ParamBox::new(vec![(-0.5, 0.5)])
        )
        .is_err());
        let x = vec![parse("a1/t", 1).unwrap()];
        assert!(AsymptoticFamily::new(
            x,
            ParamBox::new(vec![(-1.0, 1.0)]),
            ParamBox::new(vec![(-1.0, 0.5)])
        )
        .is_err());
    }

    #[test]
    fn boundedness_check() {
        let m = oscillator();
        let grid = ParamBox::new(vec![(-1.0, 1.0); 2]).tensor_grid(3);
        assert_eq!(grid.len(), 9);
        let bound = m.check_bounded(&grid).unwrap();
        assert!(bound <= 2f64.sqrt() + 1e-12);
        let growing = model(&["1"], &["t + a1"], 0.0, 1.0, vec![(-2.0, 2.0)], vec![(-1.0, 1.0)]);
        assert!(matches!(
            growing.check_bounded(&[vec![0.0]]),
            Err(FamilyError::UnboundedFamily { .. })
        ));
    }
}
