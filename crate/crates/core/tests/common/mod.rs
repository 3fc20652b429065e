//! Random generators shared by the integration tests.
#![allow(dead_code)]

use poisson3d::expr::{parse, BinOp, Expr, Func, Var};
use poisson3d::family::{KappaMatrix, PoissonFamilySpec};
use poisson3d::scalar_fields::{DomainBox, Interval, ScalarField1D};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let v = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        v
    } else {
        -v
    }
}

/// `(phi, psi)` source pair: a constant, `a u + b`, `2 a u` or `exp(a u)`.
/// The interval is assumed to lie in `(0, 4)`.
pub fn random_density(rng: &mut ChaCha8Rng) -> (String, String) {
    match rng.gen_range(0..4) {
        0 => {
            let c = signed(rng, 0.5, 2.0);
            (format!("{c}"), format!("{c}*u"))
        }
        1 => {
            let a = rng.gen_range(-1.0..1.0);
            let b = signed(rng, 4.5, 6.0);
            (format!("{a}*u + {b}"), format!("{}*u^2 + {b}*u", a / 2.0))
        }
        2 => {
            let a = signed(rng, 0.5, 2.0);
            (format!("2*{a}*u"), format!("{a}*u^2"))
        }
        _ => {
            let a = signed(rng, 0.2, 1.0);
            (format!("exp({a}*u)"), format!("exp({a}*u)/{a}"))
        }
    }
}

pub fn random_axes(rng: &mut ChaCha8Rng, domain: &DomainBox) -> [ScalarField1D; 3] {
    [0, 1, 2].map(|i| {
        let (phi, psi) = random_density(rng);
        ScalarField1D::build(parse(&phi).unwrap(), parse(&psi).unwrap(), None, domain.axis(i))
            .unwrap_or_else(|e| panic!("axis {i}: {phi} / {psi}: {e}"))
    })
}

const HALPHEN_ETA: &str = "1/(2*(x1 - x2)*(x2 - x3)*(x3 - x1))";

/// A random family member: zero-sum kappa in [-5, 5], random densities and
/// an eta that is 1, a positive polynomial product or the Halphen form.
/// Boxes sit in the positive octant; for the Halphen form the three axis
/// intervals are disjoint so that `x_i != x_j` throughout.
pub fn random_instance(rng: &mut ChaCha8Rng) -> PoissonFamilySpec {
    let eta_kind = rng.gen_range(0..3);
    let bounds = if eta_kind == 2 {
        let mut slots = [0.0, 1.0, 2.0];
        slots.shuffle(rng);
        slots.map(|s| {
            let lo = 0.2 + 1.2 * s;
            [lo, lo + 0.8]
        })
    } else {
        [0, 1, 2].map(|_| {
            let lo = rng.gen_range(0.2..1.5);
            [lo, lo + rng.gen_range(0.3..1.5)]
        })
    };
    let domain = DomainBox::from_bounds(bounds).unwrap();
    let eta = match eta_kind {
        0 => "1".to_string(),
        1 => {
            let c: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(0.5..2.0));
            format!("({} + x1^2)*({} + x2*x3)*({} + x3)", c[0], c[1], c[2])
        }
        _ => HALPHEN_ETA.to_string(),
    };
    let axes = random_axes(rng, &domain);
    let kappa = KappaMatrix::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)).unwrap();
    PoissonFamilySpec::new("random", parse(&eta).unwrap(), axes, kappa, domain).unwrap()
}

pub fn interval(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

/// A random polynomial of degree at most two in `x1, x2, x3` with
/// coefficients in [-1, 1].
pub fn random_quadratic(rng: &mut ChaCha8Rng) -> String {
    const MONOMIALS: [&str; 10] = ["1", "x1", "x2", "x3", "x1^2", "x2^2", "x3^2", "x1*x2", "x2*x3", "x1*x3"];
    MONOMIALS
        .iter()
        .map(|m| format!("({})*{m}", rng.gen_range(-1.0..1.0)))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// A random expression tree over `x1, x2, x3` with non-negative literals,
/// as produced by the parser.
pub fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.6) {
            Expr::var(Var::SPATIAL[rng.gen_range(0..3)])
        } else {
            Expr::num(f64::from(rng.gen_range(0..100u32)) / 10.0)
        };
    }
    match rng.gen_range(0..10) {
        0..=4 => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][rng.gen_range(0..4)];
            Expr::Binary(
                op,
                Box::new(random_expr(rng, depth - 1)),
                Box::new(random_expr(rng, depth - 1)),
            )
        }
        5 => random_expr(rng, depth - 1).pow(Expr::num(f64::from(rng.gen_range(0..4u32)))),
        6 => Expr::Neg(Box::new(random_expr(rng, depth - 1))),
        _ => Expr::call(*Func::ALL.choose(rng).unwrap(), random_expr(rng, depth - 1)),
    }
}

/// False when `x` is within `margin` of a kink, pole or branch point of
/// `e` (arguments of `abs`, `sign`, `sqrt`, `ln`, denominators, and bases of
/// non-integer powers), or when a subexpression fails to evaluate.
pub fn smooth_at(e: &Expr, x: [f64; 3], margin: f64) -> bool {
    let val = |a: &Expr| a.eval_point(x).ok();
    match e {
        Expr::Num(_) | Expr::Var(_) => true,
        Expr::Neg(a) => smooth_at(a, x, margin),
        Expr::Call(f, a) => {
            if !smooth_at(a, x, margin) {
                return false;
            }
            match (f, val(a)) {
                (_, None) => false,
                (Func::Abs | Func::Sign | Func::Sqrt | Func::Ln, Some(v)) => v.abs() > margin,
                (_, Some(_)) => true,
            }
        }
        Expr::Binary(op, a, b) => {
            if !smooth_at(a, x, margin) || !smooth_at(b, x, margin) {
                return false;
            }
            match op {
                BinOp::Div => val(b).is_some_and(|v| v.abs() > margin),
                BinOp::Pow => match (val(a), val(b)) {
                    (Some(base), Some(p)) => p.fract() == 0.0 && p >= 0.0 || base.abs() > margin,
                    _ => false,
                },
                _ => true,
            }
        }
    }
}
