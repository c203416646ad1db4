use super::{Expr, Func, Var};

// Smart constructors fold the zeros and ones that differentiation produces;
// they are not a simplifier.

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

fn add(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        _ if is_num(&l, 0.0) => r,
        _ if is_num(&r, 0.0) => l,
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a + b),
        _ => Expr::Add(Box::new(l), Box::new(r)),
    }
}

fn sub(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        _ if is_num(&r, 0.0) => l,
        _ if is_num(&l, 0.0) => neg(r),
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a - b),
        _ => Expr::Sub(Box::new(l), Box::new(r)),
    }
}

fn mul(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        _ if is_num(&l, 0.0) || is_num(&r, 0.0) => Expr::Num(0.0),
        _ if is_num(&l, 1.0) => r,
        _ if is_num(&r, 1.0) => l,
        (Expr::Num(a), Expr::Num(b)) => Expr::Num(a * b),
        _ => Expr::Mul(Box::new(l), Box::new(r)),
    }
}

fn div(l: Expr, r: Expr) -> Expr {
    if is_num(&l, 0.0) {
        return Expr::Num(0.0);
    }
    if is_num(&r, 1.0) {
        return l;
    }
    Expr::Div(Box::new(l), Box::new(r))
}

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn pow(base: Expr, exp: f64) -> Expr {
    if exp == 0.0 {
        Expr::Num(1.0)
    } else if exp == 1.0 {
        base
    } else {
        Expr::Pow(Box::new(base), exp)
    }
}

fn call(f: Func, arg: &Expr) -> Expr {
    Expr::Call(f, Box::new(arg.clone()))
}

pub(super) fn derivative(e: &Expr, var: Var) -> Expr {
    match e {
        Expr::Num(_) => Expr::Num(0.0),
        Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(u) => neg(derivative(u, var)),
        Expr::Add(l, r) => add(derivative(l, var), derivative(r, var)),
        Expr::Sub(l, r) => sub(derivative(l, var), derivative(r, var)),
        Expr::Mul(l, r) => add(
            mul(derivative(l, var), (**r).clone()),
            mul((**l).clone(), derivative(r, var)),
        ),
        Expr::Div(l, r) => {
            let dl = derivative(l, var);
            let dr = derivative(r, var);
            if is_num(&dr, 0.0) {
                div(dl, (**r).clone())
            } else {
                div(
                    sub(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                    pow((**r).clone(), 2.0),
                )
            }
        }
        Expr::Pow(b, c) => {
            let db = derivative(b, var);
            if is_num(&db, 0.0) {
                return Expr::Num(0.0);
            }
            mul(mul(Expr::Num(*c), pow((**b).clone(), c - 1.0)), db)
        }
        Expr::Call(f, u) => {
            let du = derivative(u, var);
            if is_num(&du, 0.0) {
                return Expr::Num(0.0);
            }
            let outer = match f {
                Func::Sin => call(Func::Cos, u),
                Func::Cos => neg(call(Func::Sin, u)),
                Func::Exp => call(Func::Exp, u),
                Func::Log => return div(du, (**u).clone()),
                Func::Sqrt => {
                    return div(du, mul(Expr::Num(2.0), call(Func::Sqrt, u)));
                }
                Func::Abs => div((**u).clone(), call(Func::Abs, u)),
            };
            mul(outer, du)
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Var};

    fn check(src: &str, var: Var, expected: &str, at: (f64, &[f64], &[f64])) {
        let n = at.1.len().max(at.2.len()).max(1);
        let d = parse(src, n).unwrap().differentiate(var);
        let e = parse(expected, n).unwrap();
        let got = d.eval(at.0, at.1, at.2).unwrap();
        let want = e.eval(at.0, at.1, at.2).unwrap();
        assert!(
            (got - want).abs() <= 1e-14 * (1.0 + want.abs()),
            "d/d{var} {src} = {d}: {got} vs {want}"
        );
    }

    #[test]
    fn textbook_rules() {
        check("1/t", Var::T, "-1/t^2", (3.0, &[0.0], &[0.0]));
        check("sin(x1)", Var::X(0), "cos(x1)", (3.0, &[0.7], &[0.0]));
        check("a1^2/t^4", Var::A(0), "2*a1/t^4", (3.0, &[0.0], &[1.3]));
        check("log(t*x1)", Var::T, "1/t", (2.0, &[0.4], &[0.0]));
        check("sqrt(t)", Var::T, "0.5/sqrt(t)", (2.0, &[0.0], &[0.0]));
        check("abs(x1)", Var::X(0), "-1", (2.0, &[-0.4], &[0.0]));
        check("exp(2*t)", Var::T, "2*exp(2*t)", (0.3, &[0.0], &[0.0]));
        check("cos(t^2)", Var::T, "-2*t*sin(t^2)", (0.3, &[0.0], &[0.0]));
    }

    #[test]
    fn unrelated_variable_gives_zero_tree() {
        let d = parse("x1^3 + sin(x1)", 1).unwrap().differentiate(Var::A(0));
        assert_eq!(d.to_string(), "0");
    }
}
