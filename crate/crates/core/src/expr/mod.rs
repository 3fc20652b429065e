//! A small expression language for user-supplied scalar functions.
//!
//! Expressions are built over the fixed variables `x1`, `x2`, `x3` (points in
//! phase space) and `u` (the argument of one-variable fields). The grammar
//! supports numeric literals, `+ - * / ^`, unary minus and the functions
//! `exp ln sin cos sqrt abs sign`.
//!
//! Precedence, from tightest to loosest: `^` (right-associative), unary `-`,
//! `* /`, `+ -`. So `-2^2` is `-(2^2)` and `2^3^2` is `2^(3^2)`.

mod diff;
mod parser;

use std::collections::BTreeSet;
use std::fmt;
use std::ops;
use std::str::FromStr;

use thiserror::Error;

pub use parser::parse;

/// Errors produced while parsing or evaluating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{0}` is not bound")]
    UnboundVariable(Var),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("variable `{var}` is not allowed here (allowed: {allowed})")]
    IllegalVariable { var: Var, allowed: String },
}

/// The fixed set of variable names an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X1,
    X2,
    X3,
    U,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::X1, Var::X2, Var::X3, Var::U];
    pub const SPATIAL: [Var; 3] = [Var::X1, Var::X2, Var::X3];

    pub fn name(self) -> &'static str {
        match self {
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::X3 => "x3",
            Var::U => "u",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    pub(crate) fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Exp,
        Func::Ln,
        Func::Sin,
        Func::Cos,
        Func::Sqrt,
        Func::Abs,
        Func::Sign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, a: f64) -> Result<f64, ExprError> {
        let v = match self {
            Func::Exp => a.exp(),
            Func::Ln => {
                if a <= 0.0 {
                    return Err(ExprError::Domain(format!("ln({a})")));
                }
                a.ln()
            }
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Sqrt => {
                if a < 0.0 {
                    return Err(ExprError::Domain(format!("sqrt({a})")));
                }
                a.sqrt()
            }
            Func::Abs => a.abs(),
            Func::Sign => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, ExprError> {
        match self {
            BinOp::Add => Ok(a + b),
            BinOp::Sub => Ok(a - b),
            BinOp::Mul => Ok(a * b),
            BinOp::Div => Ok(a / b),
            BinOp::Pow => {
                if a < 0.0 && b.fract() != 0.0 {
                    return Err(ExprError::Domain(format!(
                        "negative base {a} raised to non-integer power {b}"
                    )));
                }
                Ok(a.powf(b))
            }
        }
    }
}

const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

/// Expression tree. Literals produced by the parser are always finite and
/// non-negative; negation is a separate node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable bindings used during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    values: [Option<f64>; 4],
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `x1, x2, x3` to the components of a point.
    pub fn point(x: [f64; 3]) -> Self {
        Self::new()
            .with(Var::X1, x[0])
            .with(Var::X2, x[1])
            .with(Var::X3, x[2])
    }

    /// Binds `u` only.
    pub fn scalar(u: f64) -> Self {
        Self::new().with(Var::U, u)
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.values[var.slot()] = Some(value);
        self
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.values[var.slot()]
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::Binary(BinOp::Pow, Box::new(self), Box::new(exponent))
    }

    /// Evaluates the expression. Every intermediate value must be finite,
    /// otherwise a domain error is returned.
    pub fn eval(&self, env: &Env) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::Var(var) => env.get(*var).ok_or(ExprError::UnboundVariable(*var))?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Binary(op, a, b) => op.apply(a.eval(env)?, b.eval(env)?)?,
            Expr::Call(f, a) => f.apply(a.eval(env)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain(format!("non-finite value in `{self}`")))
        }
    }

    /// Convenience wrapper for one-variable expressions in `u`.
    pub fn eval_scalar(&self, u: f64) -> Result<f64, ExprError> {
        self.eval(&Env::scalar(u))
    }

    /// Convenience wrapper for expressions in `x1, x2, x3`.
    pub fn eval_point(&self, x: [f64; 3]) -> Result<f64, ExprError> {
        self.eval(&Env::point(x))
    }

    /// Set of variables occurring in the expression.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    /// Fails unless every variable in the expression is in `allowed`.
    pub fn check_variables(&self, allowed: &[Var]) -> Result<(), ExprError> {
        match self.variables().into_iter().find(|v| !allowed.contains(v)) {
            None => Ok(()),
            Some(var) => Err(ExprError::IllegalVariable {
                var,
                allowed: allowed
                    .iter()
                    .map(|v| v.name())
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        }
    }

    /// Replaces every occurrence of `var` by `with`.
    pub fn substitute(&self, var: Var, with: &Expr) -> Expr {
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(v) if *v == var => with.clone(),
            Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(var, with))),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute(var, with))),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(var, with)),
                Box::new(b.substitute(var, with)),
            ),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Call(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(c) if c.is_sign_negative() => PREC_NEG,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_NEG,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

/// Prints with the minimal parentheses needed for `parse` to rebuild the
/// same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if c.is_sign_negative() {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, a.precedence() < PREC_NEG)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_parens, right_parens) = if *op == BinOp::Pow {
                    (a.precedence() <= p, b.precedence() < p)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                write_child(f, a, left_parens)?;
                f.write_str(op.symbol())?;
                write_child(f, b, right_parens)
            }
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Num(v)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Self {
        Expr::Var(v)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::Binary($op, Box::new(self), Box::new(rhs))
            }
        }
    };
}

impl_binop!(Add, add, BinOp::Add);
impl_binop!(Sub, sub, BinOp::Sub);
impl_binop!(Mul, mul, BinOp::Mul);
impl_binop!(Div, div, BinOp::Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
