//! Expression DSL used to supply the right side `f(x, t)` and the candidate
//! family `X(t; a)`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' exponent)*
//! exponent:= number | '(' ['+' | '-'] number ['/' number] ')'
//! atom    := number | 't' | 'x'N | 'a'N | func '(' sum ')' | '(' sum ')'
//! func    := sin | cos | exp | log | sqrt | abs
//! ```
//!
//! Exponents are numeric literals only, which keeps differentiation total.
//! Trees are immutable after parsing and may be shared across threads.

mod diff;
mod parse;

use std::fmt;

use thiserror::Error;

pub use parse::parse;

/// Independent variables an expression may reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    /// Time `t`.
    T,
    /// State component `x{i+1}` (zero-based index).
    X(usize),
    /// Parameter `a{i+1}` (zero-based index).
    A(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::A(i) => write!(f, "a{}", i + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a literal exponent.
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{name}` at byte {offset} is out of range for n = {n}")]
    VariableOutOfRange {
        name: String,
        offset: usize,
        n: usize,
    },
    #[error("domain error: {reason} in `{subexpr}`")]
    Domain { reason: &'static str, subexpr: String },
    #[error("expected {expected} values for `{var}`, got {got}")]
    Arity {
        var: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Point at which an expression is evaluated.
#[derive(Clone, Copy, Debug)]
pub struct Point<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub alpha: &'a [f64],
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    /// Evaluates the tree. Missing state or parameter slots are a
    /// [`ExprError::Arity`] error, never a panic.
    pub fn eval(&self, t: f64, x: &[f64], alpha: &[f64]) -> Result<f64, ExprError> {
        self.eval_at(&Point { t, x, alpha })
    }

    pub fn eval_at(&self, p: &Point<'_>) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(Var::T) => Ok(p.t),
            Expr::Var(Var::X(i)) => p.x.get(*i).copied().ok_or(ExprError::Arity {
                var: "x",
                expected: i + 1,
                got: p.x.len(),
            }),
            Expr::Var(Var::A(i)) => p.alpha.get(*i).copied().ok_or(ExprError::Arity {
                var: "a",
                expected: i + 1,
                got: p.alpha.len(),
            }),
            Expr::Neg(e) => Ok(-e.eval_at(p)?),
            Expr::Add(l, r) => Ok(l.eval_at(p)? + r.eval_at(p)?),
            Expr::Sub(l, r) => Ok(l.eval_at(p)? - r.eval_at(p)?),
            Expr::Mul(l, r) => Ok(l.eval_at(p)? * r.eval_at(p)?),
            Expr::Div(l, r) => {
                let num = l.eval_at(p)?;
                let den = r.eval_at(p)?;
                if den == 0.0 {
                    return Err(self.domain("division by zero"));
                }
                Ok(num / den)
            }
            Expr::Pow(b, e) => {
                let base = b.eval_at(p)?;
                pow_checked(base, *e).ok_or_else(|| self.domain("invalid power"))
            }
            Expr::Call(func, arg) => {
                let v = arg.eval_at(p)?;
                match func {
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Exp => Ok(v.exp()),
                    Func::Abs => Ok(v.abs()),
                    Func::Log if v <= 0.0 => Err(self.domain("log of non-positive value")),
                    Func::Log => Ok(v.ln()),
                    Func::Sqrt if v < 0.0 => Err(self.domain("sqrt of negative value")),
                    Func::Sqrt => Ok(v.sqrt()),
                }
            }
        }
    }

    fn domain(&self, reason: &'static str) -> ExprError {
        ExprError::Domain {
            reason,
            subexpr: self.to_string(),
        }
    }

    /// Symbolic derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Expr {
        diff::derivative(self, var)
    }

    /// Replaces every state variable `x{i}` by `subs[i]`.
    pub fn substitute_state(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Var(Var::X(i)) => subs[*i].clone(),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute_state(subs))),
            Expr::Add(l, r) => Expr::Add(
                Box::new(l.substitute_state(subs)),
                Box::new(r.substitute_state(subs)),
            ),
            Expr::Sub(l, r) => Expr::Sub(
                Box::new(l.substitute_state(subs)),
                Box::new(r.substitute_state(subs)),
            ),
            Expr::Mul(l, r) => Expr::Mul(
                Box::new(l.substitute_state(subs)),
                Box::new(r.substitute_state(subs)),
            ),
            Expr::Div(l, r) => Expr::Div(
                Box::new(l.substitute_state(subs)),
                Box::new(r.substitute_state(subs)),
            ),
            Expr::Pow(b, e) => Expr::Pow(Box::new(b.substitute_state(subs)), *e),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute_state(subs))),
        }
    }

    /// Calls `visit` on every variable occurrence.
    pub fn visit_vars(&self, visit: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => visit(*v),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.visit_vars(visit),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.visit_vars(visit);
                r.visit_vars(visit);
            }
        }
    }

    pub fn uses_state(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= matches!(v, Var::X(_)));
        found
    }

    pub fn uses_params(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= matches!(v, Var::A(_)));
        found
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// `base^exp` restricted to the real domain.
fn pow_checked(base: f64, exp: f64) -> Option<f64> {
    if exp == 0.0 {
        return Some(1.0);
    }
    if base == 0.0 && exp < 0.0 {
        return None;
    }
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        return Some(base.powi(exp as i32));
    }
    if base < 0.0 {
        return None;
    }
    Some(base.powf(exp))
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.is_sign_negative() {
        write!(f, "-{}", -v)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_number(f, *v),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.write_child(f, 3)
            }
            Expr::Add(l, r) => {
                l.write_child(f, 1)?;
                write!(f, " + ")?;
                r.write_child(f, 2)
            }
            Expr::Sub(l, r) => {
                l.write_child(f, 1)?;
                write!(f, " - ")?;
                r.write_child(f, 2)
            }
            Expr::Mul(l, r) => {
                l.write_child(f, 2)?;
                write!(f, "*")?;
                r.write_child(f, 3)
            }
            Expr::Div(l, r) => {
                l.write_child(f, 2)?;
                write!(f, "/")?;
                r.write_child(f, 3)
            }
            Expr::Pow(b, e) => {
                b.write_child(f, 5)?;
                if e.is_sign_negative() {
                    write!(f, "^(")?;
                    write_number(f, *e)?;
                    write!(f, ")")
                } else {
                    write!(f, "^{e}")
                }
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str, n: usize) -> Expr {
        parse(src, n).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("t^2", 1).eval(3.0, &[0.0], &[0.0]).unwrap(), 9.0);
        let e = p("a1*cos(t)+a2*sin(t)", 2);
        assert_eq!(e.eval(0.0, &[0.0, 0.0], &[2.0, 5.0]).unwrap(), 2.0);
        let e = p("1/t + a1/t^2", 1);
        let v = e.eval(10.0, &[0.0], &[1.0]).unwrap();
        assert!((v - 0.11).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = p("1 + log(x1 - 1)", 1);
        match e.eval(1.0, &[0.5], &[0.0]) {
            Err(ExprError::Domain { subexpr, .. }) => assert_eq!(subexpr, "log(x1 - 1)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            p("1/(t-1)", 1).eval(1.0, &[0.0], &[0.0]),
            Err(ExprError::Domain { .. })
        ));
        assert!(matches!(
            p("sqrt(x1)", 1).eval(1.0, &[-1.0], &[0.0]),
            Err(ExprError::Domain { .. })
        ));
        assert!(matches!(
            p("x1^0.5", 1).eval(1.0, &[-1.0], &[0.0]),
            Err(ExprError::Domain { .. })
        ));
        // Integer powers of negative bases are fine.
        assert_eq!(p("x1^3", 1).eval(1.0, &[-2.0], &[0.0]).unwrap(), -8.0);
    }

    #[test]
    fn eval_is_bit_reproducible() {
        let e = p("exp(-t)*sin(x1)^3 + a1/t^(1/3)", 1);
        let a = e.eval(2.7, &[0.3], &[1.1]).unwrap();
        let b = e.eval(2.7, &[0.3], &[1.1]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn arity_error_instead_of_panic() {
        let e = p("x2", 2);
        assert!(matches!(
            e.eval(1.0, &[1.0], &[]),
            Err(ExprError::Arity { .. })
        ));
    }

    #[test]
    fn substitution_and_var_queries() {
        let f = p("-x1^2 + t", 1);
        let x = p("1/t + a1/t^2", 1);
        let y = f.substitute_state(&[x]);
        assert!(!y.uses_state());
        assert!(y.uses_params());
        let v = y.eval(2.0, &[], &[1.0]).unwrap();
        assert!((v - (2.0 - 0.75f64.powi(2))).abs() < 1e-15);
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        assert_eq!(p("-t^(-3) * x1^3", 2).to_string(), "-t^(-3)*x1^3");
        assert_eq!(p("a1 - (a1 - t)", 1).to_string(), "a1 - (a1 - t)");
        assert_eq!(p("(a1 - a1) - t", 1).to_string(), "a1 - a1 - t");
        assert_eq!(p("(x1*t)^2", 1).to_string(), "(x1*t)^2");
        assert_eq!(p("x1/(t*t)", 1).to_string(), "x1/(t*t)");
        assert_eq!(p("-(x1+t)", 1).to_string(), "-(x1 + t)");
    }
}
