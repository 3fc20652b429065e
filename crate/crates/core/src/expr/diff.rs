//! Symbolic differentiation.
//!
//! The result is built through folding constructors that evaluate
//! constant subtrees and drop additive zeros and multiplicative ones. No
//! other simplification is attempted.
//!
//! `abs` and `sign` are not differentiable at 0. Their derivatives are
//! written so that evaluating them where the argument vanishes yields a
//! domain error: d|f| = (f/|f|)·f' and d sign(f) = (f/|f| - sign(f))·f'.

use super::{BinOp, Expr, Func, Var};

fn num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(c) => Some(*c),
        _ => None,
    }
}

fn fold(op: BinOp, a: &Expr, b: &Expr) -> Option<Expr> {
    let (x, y) = (num(a)?, num(b)?);
    let v = match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => x / y,
        BinOp::Pow => {
            if x < 0.0 && y.fract() != 0.0 {
                return None;
            }
            x.powf(y)
        }
    };
    v.is_finite().then_some(Expr::Num(v))
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Binary(op, Box::new(a), Box::new(b))
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Add, &a, &b) {
        return e;
    }
    match (num(&a), num(&b)) {
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => bin(BinOp::Add, a, b),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Sub, &a, &b) {
        return e;
    }
    match (num(&a), num(&b)) {
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => bin(BinOp::Sub, a, b),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Mul, &a, &b) {
        return e;
    }
    match (num(&a), num(&b)) {
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        (Some(-1.0), _) => neg(b),
        (_, Some(-1.0)) => neg(a),
        _ => bin(BinOp::Mul, a, b),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Div, &a, &b) {
        return e;
    }
    match num(&b) {
        Some(1.0) => a,
        _ => bin(BinOp::Div, a, b),
    }
}

pub(crate) fn pow(a: Expr, b: Expr) -> Expr {
    if let Some(e) = fold(BinOp::Pow, &a, &b) {
        return e;
    }
    match num(&b) {
        Some(1.0) => a,
        Some(0.0) => Expr::Num(1.0),
        _ => bin(BinOp::Pow, a, b),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(c) => Expr::Num(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl Expr {
    /// Symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(var)),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.as_ref(), b.as_ref());
                match op {
                    BinOp::Add => add(a.differentiate(var), b.differentiate(var)),
                    BinOp::Sub => sub(a.differentiate(var), b.differentiate(var)),
                    BinOp::Mul => add(
                        mul(a.differentiate(var), b.clone()),
                        mul(a.clone(), b.differentiate(var)),
                    ),
                    BinOp::Div => {
                        let num = sub(
                            mul(a.differentiate(var), b.clone()),
                            mul(a.clone(), b.differentiate(var)),
                        );
                        div(num, pow(b.clone(), Expr::Num(2.0)))
                    }
                    BinOp::Pow => diff_pow(a, b, var),
                }
            }
            Expr::Call(f, a) => {
                let inner = a.differentiate(var);
                if num(&inner) == Some(0.0) {
                    return Expr::Num(0.0);
                }
                let a = a.as_ref().clone();
                let outer = match f {
                    Func::Exp => call(Func::Exp, a),
                    Func::Ln => div(Expr::Num(1.0), a),
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Sqrt => div(Expr::Num(0.5), call(Func::Sqrt, a)),
                    Func::Abs => div(a.clone(), call(Func::Abs, a)),
                    Func::Sign => sub(
                        div(a.clone(), call(Func::Abs, a.clone())),
                        call(Func::Sign, a),
                    ),
                };
                mul(outer, inner)
            }
        }
    }
}

fn diff_pow(base: &Expr, exponent: &Expr, var: Var) -> Expr {
    let db = base.differentiate(var);
    if !exponent.depends_on(var) {
        // d(f^c) = c·f^(c-1)·f'
        let reduced = match num(exponent) {
            Some(c) => Expr::Num(c - 1.0),
            None => sub(exponent.clone(), Expr::Num(1.0)),
        };
        return mul(
            mul(exponent.clone(), pow(base.clone(), reduced)),
            db,
        );
    }
    let de = exponent.differentiate(var);
    let this = pow(base.clone(), exponent.clone());
    if !base.depends_on(var) {
        // d(c^g) = c^g·ln(c)·g'
        return mul(mul(this, call(Func::Ln, base.clone())), de);
    }
    // d(f^g) = f^g·(g'·ln f + g·f'/f)
    mul(
        this,
        add(
            mul(de, call(Func::Ln, base.clone())),
            div(mul(exponent.clone(), db), base.clone()),
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Env, ExprError};
    use super::*;

    fn d(src: &str, var: Var) -> Expr {
        parse(src).unwrap().differentiate(var)
    }

    fn central(e: &Expr, var: Var, env: Env) -> f64 {
        let x = env.get(var).unwrap();
        let h = f64::EPSILON.cbrt() * x.abs().max(1.0);
        let plus = e.eval(&env.with(var, x + h)).unwrap();
        let minus = e.eval(&env.with(var, x - h)).unwrap();
        (plus - minus) / (2.0 * h)
    }

    #[test]
    fn power_rule() {
        let e = d("x1^2", Var::X1);
        for x in [-2.0, 0.5, 3.0] {
            assert_eq!(e.eval(&Env::point([x, 0.0, 0.0])).unwrap(), 2.0 * x);
        }
    }

    #[test]
    fn independent_variable_gives_zero() {
        assert_eq!(d("x1", Var::X2), Expr::Num(0.0));
        assert_eq!(d("sin(x1)*exp(x3)", Var::X2), Expr::Num(0.0));
    }

    #[test]
    fn product_with_sine_matches_closed_form_and_fd() {
        let src = parse("sin(x1)*x1").unwrap();
        let e = src.differentiate(Var::X1);
        let env = Env::point([1.0, 0.0, 0.0]);
        let sym = e.eval(&env).unwrap();
        let expected = 1f64.cos() + 1f64.sin();
        assert!((sym - expected).abs() < 1e-15);
        let fd = central(&src, Var::X1, env);
        assert!((sym - fd).abs() / sym.abs().max(1.0) <= 1e-6);
    }

    #[test]
    fn general_power_and_quotients() {
        for (src, var, x) in [
            ("x1^x2", Var::X1, [1.7, 2.3, 0.0]),
            ("x1^x2", Var::X2, [1.7, 2.3, 0.0]),
            ("2^x3", Var::X3, [0.0, 0.0, 1.5]),
            ("ln(x1)/(1 + x2^2)", Var::X2, [2.0, 0.7, 0.0]),
            ("sqrt(x1*x2)", Var::X1, [2.0, 0.7, 0.0]),
            ("cos(exp(x1) - x3)", Var::X1, [0.3, 0.0, 0.2]),
            ("abs(x1 - x2)", Var::X1, [0.3, 1.0, 0.0]),
            ("x1^(x2/2)", Var::X2, [3.0, 1.0, 0.0]),
        ] {
            let e = parse(src).unwrap();
            let env = Env::point(x);
            let sym = e.differentiate(var).eval(&env).unwrap();
            let fd = central(&e, var, env);
            assert!(
                (sym - fd).abs() / sym.abs().max(1.0) <= 1e-6,
                "{src} d/d{var}: {sym} vs {fd}"
            );
        }
    }

    #[test]
    fn abs_and_sign_are_undefined_at_zero() {
        let da = d("abs(u)", Var::U);
        let ds = d("sign(u)", Var::U);
        assert!(matches!(da.eval_scalar(0.0), Err(ExprError::Domain(_))));
        assert!(matches!(ds.eval_scalar(0.0), Err(ExprError::Domain(_))));
        assert_eq!(da.eval_scalar(-2.0).unwrap(), -1.0);
        assert_eq!(ds.eval_scalar(-2.0).unwrap(), 0.0);
        assert_eq!(ds.eval_scalar(3.0).unwrap(), 0.0);
    }

    #[test]
    fn folding_keeps_constants_small() {
        assert_eq!(d("3*u + 2", Var::U), Expr::Num(3.0));
        assert_eq!(d("u^3", Var::U).to_string(), "3*u^2");
        assert_eq!(d("-u", Var::U), Expr::Num(-1.0));
    }
}
