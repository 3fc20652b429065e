//! Numerical checks of the Jacobi identity for arbitrary 3x3 skew fields.
//!
//! A skew field is stored through its three upper entries `(J12, J23, J31)`,
//! so skew-symmetry holds by representation. In three dimensions the Jacobi
//! identities reduce to the single equation
//!
//! ```text
//! J12·∂1J31 − J31·∂1J12 + J23·∂2J12 − J12·∂2J23 + J31·∂3J23 − J23·∂3J31 = 0.
//! ```

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::scalar_fields::{fd_step, DomainBox, ScalarField1D};
use crate::Point;

/// A 3x3 skew matrix field given by its entries `(J12, J23, J31)`.
pub trait MatrixField3: Sync {
    fn entries(&self, x: &Point) -> Result<[f64; 3]>;

    /// `d J_entry / d x_l` laid out as `[l][entry]`, when known in closed form.
    fn entry_partials(&self, _x: &Point) -> Option<Result<[[f64; 3]; 3]>> {
        None
    }
}

/// Entries as expressions in `x1, x2, x3`, optionally with partials.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrixField {
    entries: [Expr; 3],
    partials: Option<[[Expr; 3]; 3]>,
}

impl ExprMatrixField {
    pub fn new(entries: [Expr; 3]) -> Result<Self> {
        for e in &entries {
            e.check_variables(&Var::SPATIAL)?;
        }
        Ok(Self {
            entries,
            partials: None,
        })
    }

    /// Attaches user-supplied partials, laid out as `[l][entry]`.
    pub fn with_partials(mut self, partials: [[Expr; 3]; 3]) -> Result<Self> {
        for e in partials.iter().flatten() {
            e.check_variables(&Var::SPATIAL)?;
        }
        self.partials = Some(partials);
        Ok(self)
    }

    /// Attaches partials obtained by symbolic differentiation.
    pub fn with_symbolic_partials(mut self) -> Self {
        let partials = Var::SPATIAL.map(|v| {
            [
                self.entries[0].differentiate(v),
                self.entries[1].differentiate(v),
                self.entries[2].differentiate(v),
            ]
        });
        self.partials = Some(partials);
        self
    }

    pub fn entry_exprs(&self) -> &[Expr; 3] {
        &self.entries
    }
}

impl MatrixField3 for ExprMatrixField {
    fn entries(&self, x: &Point) -> Result<[f64; 3]> {
        Ok([
            self.entries[0].eval_point(*x)?,
            self.entries[1].eval_point(*x)?,
            self.entries[2].eval_point(*x)?,
        ])
    }

    fn entry_partials(&self, x: &Point) -> Option<Result<[[f64; 3]; 3]>> {
        let p = self.partials.as_ref()?;
        let eval = || -> Result<[[f64; 3]; 3]> {
            let mut out = [[0.0; 3]; 3];
            for (row, exprs) in out.iter_mut().zip(p) {
                for (v, e) in row.iter_mut().zip(exprs) {
                    *v = e.eval_point(*x)?;
                }
            }
            Ok(out)
        };
        Some(eval())
    }
}

/// How the partial derivatives in the residual are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    Analytic,
    FiniteDifference,
}

impl fmt::Display for DerivativeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DerivativeScheme::Analytic => "analytic",
            DerivativeScheme::FiniteDifference => "finite-difference",
        })
    }
}

impl FromStr for DerivativeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(DerivativeScheme::Analytic),
            "fd" | "finite-difference" => Ok(DerivativeScheme::FiniteDifference),
            other => Err(Error::Precondition(format!(
                "unknown derivative scheme `{other}` (expected analytic or fd)"
            ))),
        }
    }
}

/// Central differences of the entries, `[l][entry]`, at steps `h` and `h/2`
/// with `h = fd_step(x_l)`, combined by one Richardson extrapolation.
pub fn fd_partials<F: MatrixField3 + ?Sized>(field: &F, x: &Point) -> Result<[[f64; 3]; 3]> {
    let central = |l: usize, h: f64| -> Result<[f64; 3]> {
        let mut plus = *x;
        let mut minus = *x;
        plus[l] += h;
        minus[l] -= h;
        let (a, b) = (field.entries(&plus)?, field.entries(&minus)?);
        Ok([0, 1, 2].map(|s| (a[s] - b[s]) / (2.0 * h)))
    };
    let mut out = [[0.0; 3]; 3];
    for (l, row) in out.iter_mut().enumerate() {
        let h = fd_step(x[l]);
        let coarse = central(l, h)?;
        let fine = central(l, 0.5 * h)?;
        for s in 0..3 {
            row[s] = (4.0 * fine[s] - coarse[s]) / 3.0;
        }
    }
    Ok(out)
}

fn partials<F: MatrixField3 + ?Sized>(
    field: &F,
    x: &Point,
    scheme: DerivativeScheme,
) -> Result<[[f64; 3]; 3]> {
    match scheme {
        DerivativeScheme::FiniteDifference => fd_partials(field, x),
        DerivativeScheme::Analytic => field.entry_partials(x).unwrap_or_else(|| {
            Err(Error::Precondition(
                "analytic scheme requires closed-form partials".into(),
            ))
        }),
    }
}

/// The six terms of the residual, in the order they are summed.
pub fn jacobi_terms(j: &[f64; 3], d: &[[f64; 3]; 3]) -> [f64; 6] {
    let [j12, j23, j31] = *j;
    [
        j12 * d[0][2],
        -j31 * d[0][0],
        j23 * d[1][0],
        -j12 * d[1][1],
        j31 * d[2][1],
        -j23 * d[2][2],
    ]
}

/// Residual at one point together with the magnitudes used to scale it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub residual: f64,
    /// Sum of the absolute values of the six terms.
    pub term_mass: f64,
    /// Largest entry magnitude.
    pub max_entry: f64,
}

impl ResidualSample {
    /// `|r| / (1 + sum |terms|)`: zero for a Poisson field up to rounding
    /// and derivative error, of order one for a generic field.
    pub fn relative(&self) -> f64 {
        self.residual.abs() / (1.0 + self.term_mass)
    }

    /// `|r| / (1 + max |J|)`.
    pub fn scaled(&self) -> f64 {
        self.residual.abs() / (1.0 + self.max_entry)
    }
}

pub fn jacobi_sample<F: MatrixField3 + ?Sized>(
    field: &F,
    x: &Point,
    scheme: DerivativeScheme,
) -> Result<ResidualSample> {
    let j = field.entries(x)?;
    let d = partials(field, x, scheme)?;
    let terms = jacobi_terms(&j, &d);
    let residual: f64 = terms.iter().sum();
    if !residual.is_finite() {
        return Err(Error::NonFinite(format!("Jacobi residual at {x:?}")));
    }
    Ok(ResidualSample {
        residual,
        term_mass: terms.iter().map(|t| t.abs()).sum(),
        max_entry: j.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

/// The Jacobi residual at `x`.
pub fn jacobi_residual<F: MatrixField3 + ?Sized>(
    field: &F,
    x: &Point,
    scheme: DerivativeScheme,
) -> Result<f64> {
    Ok(jacobi_sample(field, x, scheme)?.residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub max_abs_residual: f64,
    /// Largest `|r| / (1 + sum |terms|)`; the verdict compares this to `tol`.
    pub max_rel_residual: f64,
    /// Largest `|r| / (1 + max |J|)`.
    pub max_scaled_residual: f64,
    /// Point with the largest relative residual.
    pub worst_point: Point,
    pub worst_residual: f64,
    pub verdict: Verdict,
    pub derivative_scheme: DerivativeScheme,
    pub seed: u64,
    pub tol: f64,
    pub skew_symmetry: &'static str,
}

/// Samples `n_samples` seeded domain points and evaluates the residual at
/// each. The report is identical for identical `(seed, n_samples)` however
/// many threads run the loop.
pub fn verify_structure<F: MatrixField3 + ?Sized>(
    field: &F,
    domain: &DomainBox,
    n_samples: usize,
    tol: f64,
    seed: u64,
    scheme: DerivativeScheme,
) -> Result<VerificationReport> {
    if n_samples == 0 {
        return Err(Error::Precondition("n_samples must be at least 1".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be positive (got {tol})")));
    }
    let points = domain.sample(n_samples, seed)?;
    let results: Vec<Result<ResidualSample>> = points
        .par_iter()
        .map(|x| jacobi_sample(field, x, scheme))
        .collect();

    let mut report = VerificationReport {
        samples: points.len(),
        max_abs_residual: 0.0,
        max_rel_residual: 0.0,
        max_scaled_residual: 0.0,
        worst_point: points[0],
        worst_residual: 0.0,
        verdict: Verdict::Pass,
        derivative_scheme: scheme,
        seed,
        tol,
        skew_symmetry: "exact by representation",
    };
    for (x, r) in points.iter().zip(results) {
        let r = r?;
        report.max_abs_residual = report.max_abs_residual.max(r.residual.abs());
        report.max_scaled_residual = report.max_scaled_residual.max(r.scaled());
        if r.relative() > report.max_rel_residual {
            report.max_rel_residual = r.relative();
            report.worst_point = *x;
            report.worst_residual = r.residual;
        }
    }
    if report.max_rel_residual > tol {
        report.verdict = Verdict::Fail;
    }
    Ok(report)
}

/// Both sides of the algebraic identity behind the family: with `eta = 1`
/// and constants `kappa` of arbitrary sum `s`, the residual of
/// `J_ij = chi_ij·phi_k` equals `-2·phi1·phi2·phi3·s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionCheck {
    pub residual: f64,
    pub predicted: f64,
}

impl ReductionCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.residual - self.predicted).abs() / self.predicted.abs().max(1.0)
    }
}

/// Evaluates the identity for `(kappa12, kappa23, kappa31)`, which need not
/// sum to zero. The residual is computed from symbolically differentiated
/// expressions; the prediction only from the densities.
pub fn reduction_identity_check(
    axes: &[ScalarField1D; 3],
    kappa: [f64; 3],
    x: &Point,
) -> Result<ReductionCheck> {
    let sub = |a: usize, e: &Expr| e.substitute(Var::U, &Expr::var(Var::SPATIAL[a]));
    let entries = [(0, 1, 2), (1, 2, 0), (2, 0, 1)].map(|(a, b, c)| {
        (sub(a, axes[a].psi_expr()) - sub(b, axes[b].psi_expr()) + Expr::num(kappa[a]))
            * sub(c, axes[c].phi_expr())
    });
    let field = ExprMatrixField::new(entries)?.with_symbolic_partials();
    let residual = jacobi_residual(&field, x, DerivativeScheme::Analytic)?;
    let phi: f64 = (0..3)
        .map(|a| axes[a].phi(x[a]))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .product();
    let predicted = -2.0 * phi * kappa.iter().sum::<f64>();
    Ok(ReductionCheck {
        residual,
        predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::scalar_fields::Interval;

    fn expr_field(src: [&str; 3]) -> ExprMatrixField {
        ExprMatrixField::new(src.map(|s| parse(s).unwrap()))
            .unwrap()
            .with_symbolic_partials()
    }

    #[test]
    fn linear_field_residual() {
        let f = expr_field(["x1", "x2", "x3"]);
        let r = jacobi_residual(&f, &[1.0, 1.0, 1.0], DerivativeScheme::Analytic).unwrap();
        assert_eq!(r, -3.0);
        let r = jacobi_residual(&f, &[1.0, 1.0, 1.0], DerivativeScheme::FiniteDifference).unwrap();
        assert!((r + 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_field_has_zero_residual() {
        let f = expr_field(["1", "0", "0"]);
        for scheme in [DerivativeScheme::Analytic, DerivativeScheme::FiniteDifference] {
            assert_eq!(jacobi_residual(&f, &[0.3, -2.0, 7.0], scheme).unwrap(), 0.0);
        }
    }

    #[test]
    fn analytic_without_partials_is_a_precondition_error() {
        let f = ExprMatrixField::new([parse("x1").unwrap(), Expr::num(0.0), Expr::num(0.0)]).unwrap();
        assert!(matches!(
            jacobi_residual(&f, &[1.0; 3], DerivativeScheme::Analytic),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn user_partials_are_used() {
        let f = ExprMatrixField::new([parse("x1").unwrap(), parse("x2").unwrap(), parse("x3").unwrap()])
            .unwrap()
            .with_partials([
                ["1", "0", "0"].map(|s| parse(s).unwrap()),
                ["0", "1", "0"].map(|s| parse(s).unwrap()),
                ["0", "0", "1"].map(|s| parse(s).unwrap()),
            ])
            .unwrap();
        let r = jacobi_residual(&f, &[1.0, 2.0, 3.0], DerivativeScheme::Analytic).unwrap();
        assert_eq!(r, -6.0);
    }

    #[test]
    fn linear_field_fails_verification() {
        let f = expr_field(["x1", "x2", "x3"]);
        let domain = DomainBox::from_bounds([[1.0, 2.0]; 3]).unwrap();
        let rep = verify_structure(&f, &domain, 200, 1e-6, 7, DerivativeScheme::FiniteDifference)
            .unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
        assert!(rep.max_abs_residual >= 3.0);
        let s: f64 = rep.worst_point.iter().sum();
        assert!((rep.worst_residual + s).abs() < 1e-8);
    }

    #[test]
    fn zero_samples_rejected() {
        let f = expr_field(["x1", "x2", "x3"]);
        let domain = DomainBox::from_bounds([[1.0, 2.0]; 3]).unwrap();
        assert!(matches!(
            verify_structure(&f, &domain, 0, 1e-6, 1, DerivativeScheme::Analytic),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn empty_domain_reported() {
        let f = expr_field(["x1", "x2", "x3"]);
        let domain = DomainBox::from_bounds([[1.0, 2.0]; 3])
            .unwrap()
            .with_predicate(Expr::num(0.0))
            .unwrap();
        assert!(matches!(
            verify_structure(&f, &domain, 10, 1e-6, 1, DerivativeScheme::Analytic),
            Err(Error::EmptyDomain { .. })
        ));
    }

    #[test]
    fn report_is_independent_of_thread_count() {
        let f = expr_field(["x1*x2 - x3^2", "sin(x1) + x2", "x3*x1"]);
        let domain = DomainBox::from_bounds([[-1.0, 1.0]; 3]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    verify_structure(&f, &domain, 500, 1e-6, 42, DerivativeScheme::FiniteDifference)
                        .unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }

    fn unit_axes(phi: [&str; 3], psi: [&str; 3]) -> [ScalarField1D; 3] {
        let iv = Interval::new(1.0, 5.0).unwrap();
        [0, 1, 2].map(|a| {
            ScalarField1D::build(parse(phi[a]).unwrap(), parse(psi[a]).unwrap(), None, iv).unwrap()
        })
    }

    #[test]
    fn broken_kappa_identity_unit_densities() {
        let axes = unit_axes(["1", "1", "1"], ["u", "u", "u"]);
        let c = reduction_identity_check(&axes, [1.0, 0.0, 0.0], &[1.5, 2.5, 4.0]).unwrap();
        assert!((c.residual + 2.0).abs() < 1e-12);
        assert_eq!(c.predicted, -2.0);
    }

    #[test]
    fn broken_kappa_identity_linear_density() {
        let axes = unit_axes(["2*u", "1", "1"], ["u^2", "u", "u"]);
        let c = reduction_identity_check(&axes, [1.0, 0.0, 0.0], &[3.0, 2.0, 1.5]).unwrap();
        assert_eq!(c.predicted, -12.0);
        assert!(c.relative_gap() < 1e-9);
    }

    #[test]
    fn zero_sum_kappa_gives_zero_on_both_sides() {
        let axes = unit_axes(["2*u", "exp(u)", "3"], ["u^2", "exp(u)", "3*u"]);
        let c = reduction_identity_check(&axes, [0.7, -1.9, 1.2], &[1.2, 2.2, 3.3]).unwrap();
        assert!(c.predicted.abs() < 1e-12);
        assert!(c.residual.abs() < 1e-9);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("fd".parse::<DerivativeScheme>().unwrap(), DerivativeScheme::FiniteDifference);
        assert_eq!("analytic".parse::<DerivativeScheme>().unwrap(), DerivativeScheme::Analytic);
        assert!("exact".parse::<DerivativeScheme>().is_err());
    }
}
