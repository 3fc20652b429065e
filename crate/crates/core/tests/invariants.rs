use poisson3d::casimir;
use poisson3d::expr::{parse, BinOp, Expr, Func, Var};
use poisson3d::family::{Axis, KappaMatrix, PoissonFamilySpec};
use poisson3d::scalar_fields::{DomainBox, ScalarField1D};
use poisson3d::verification::{self, DerivativeScheme};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        prop::sample::select(Var::SPATIAL.to_vec()).prop_map(Expr::var),
        (0u32..1000).prop_map(|n| Expr::num(f64::from(n) / 100.0)),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (
                prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (prop::sample::select(Func::ALL.to_vec()), inner).prop_map(|(f, a)| Expr::call(f, a)),
        ]
    })
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn print_parse_round_trip(e in expr()) {
        let back = parse(&e.to_string()).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn printing_is_stable(e in expr()) {
        let once = e.to_string();
        prop_assert_eq!(parse(&once).unwrap().to_string(), once);
    }

    #[test]
    fn derivative_is_linear(a in expr(), b in expr(), x in point(), v in 0usize..3) {
        let var = Var::SPATIAL[v];
        let lhs = (a.clone() + b.clone()).differentiate(var).eval_point(x);
        let rhs = a.differentiate(var).eval_point(x).and_then(|da| Ok(da + b.differentiate(var).eval_point(x)?));
        if let (Ok(l), Ok(r)) = (lhs, rhs) {
            prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_ignores_absent_variables(e in expr(), x in point()) {
        for var in Var::SPATIAL {
            if !e.depends_on(var) {
                if let Ok(d) = e.differentiate(var).eval_point(x) {
                    prop_assert_eq!(d, 0.0);
                }
            }
        }
    }

    #[test]
    fn substitution_matches_evaluation(e in expr(), x in point()) {
        let fixed = e.substitute(Var::X1, &Expr::num(x[0].abs()));
        let mut y = x;
        y[0] = x[0].abs();
        match (e.eval_point(y), fixed.eval_point(x)) {
            (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan())),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }
}

fn family(k12: f64, k23: f64, slopes: [f64; 3]) -> PoissonFamilySpec {
    let domain = DomainBox::from_bounds([[0.5, 1.5], [2.0, 3.0], [3.5, 4.5]]).unwrap();
    let axes = [0, 1, 2].map(|i| {
        let a = slopes[i];
        ScalarField1D::build(
            parse(&format!("exp({a}*u)")).unwrap(),
            parse(&format!("exp({a}*u)/{a}")).unwrap(),
            None,
            domain.axis(i),
        )
        .unwrap()
    });
    PoissonFamilySpec::new(
        "p",
        parse("(1 + x1^2)*x2").unwrap(),
        axes,
        KappaMatrix::new(k12, k23).unwrap(),
        domain,
    )
    .unwrap()
}

fn slope() -> impl Strategy<Value = f64> {
    prop_oneof![-1.0..-0.2f64, 0.2..1.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn family_members_satisfy_jacobi(
        k12 in -5.0..5.0f64,
        k23 in -5.0..5.0f64,
        slopes in [slope(), slope(), slope()],
        seed in any::<u64>(),
    ) {
        let spec = family(k12, k23, slopes);
        for x in spec.domain().sample(20, seed).unwrap() {
            let s = verification::jacobi_sample(&spec, &x, DerivativeScheme::Analytic).unwrap();
            prop_assert!(s.relative() <= 1e-12, "{s:?} at {x:?}");
        }
    }

    #[test]
    fn casimirs_are_annihilated(
        k12 in -5.0..5.0f64,
        k23 in -5.0..5.0f64,
        slopes in [slope(), slope(), slope()],
        seed in any::<u64>(),
    ) {
        let spec = family(k12, k23, slopes);
        for x in spec.domain().sample(10, seed).unwrap() {
            for k in Axis::ALL {
                if let Ok(a) = casimir::annihilation_residual(&spec, k, &x) {
                    prop_assert!(a.relative() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn structure_matrix_is_skew(
        k12 in -5.0..5.0f64,
        k23 in -5.0..5.0f64,
        slopes in [slope(), slope(), slope()],
        seed in any::<u64>(),
    ) {
        let spec = family(k12, k23, slopes);
        for x in spec.domain().sample(10, seed).unwrap() {
            let m = spec.structure_matrix_at(&x).unwrap().matrix();
            for (i, row) in m.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    prop_assert_eq!(*v, -m[j][i]);
                }
            }
        }
    }
}
