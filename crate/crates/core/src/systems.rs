//! Ready-made family members: the Halphen structure, the circle-maps
//! structure and the Euler top.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, Var};
use crate::family::{KappaMatrix, PoissonFamilySpec};
use crate::scalar_fields::{DomainBox, Interval, ScalarField1D};

pub const BUILTIN_NAMES: [&str; 3] = ["halphen", "circle-maps", "euler-top"];

const PLANE_SAMPLES: u64 = 64;
const PLANE_SEED: u64 = 0x91a7e;

/// `(x1 - x2)(x2 - x3)(x3 - x1)`.
pub fn difference_product() -> Expr {
    parse("(x1 - x2)*(x2 - x3)*(x3 - x1)").expect("valid literal")
}

/// Nonzero only where `x1 < x2 < x3`: a single connected chamber of the
/// Halphen domain, on which every `chi_ij` keeps its sign.
pub fn ordered_chamber_predicate() -> Expr {
    parse("(1 + sign(x2 - x1))*(1 + sign(x3 - x2))*(x1 - x2)*(x2 - x3)*(x3 - x1)")
        .expect("valid literal")
}

/// Box with the difference-product predicate.
pub fn halphen_domain(bounds: [[f64; 2]; 3]) -> Result<DomainBox> {
    DomainBox::from_bounds(bounds)?.with_predicate(difference_product())
}

/// `[0, 1]³` with the difference-product predicate.
pub fn halphen_default_domain() -> DomainBox {
    halphen_domain([[0.0, 1.0]; 3]).expect("valid default box")
}

/// Rejects domains that admit points with `x_i = x_j`: sampled points on
/// every such plane inside the box must be excluded by the predicate.
fn check_pairwise_distinct(domain: &DomainBox) -> Result<()> {
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        let (a, b) = (domain.axis(i), domain.axis(j));
        let lo = a.lo().max(b.lo());
        let hi = a.hi().min(b.hi());
        if lo > hi {
            continue;
        }
        for n in 0..PLANE_SAMPLES {
            let mut x = domain.box_point(PLANE_SEED, n);
            let v = lo + (hi - lo) * (n as f64 + 0.5) / PLANE_SAMPLES as f64;
            x[i] = v;
            x[j] = v;
            if domain.contains(&x) {
                return Err(Error::Precondition(format!(
                    "domain admits x{} = x{} (e.g. {x:?}); a predicate excluding the planes is required",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

fn unit_axes(domain: &DomainBox) -> Result<[ScalarField1D; 3]> {
    let u = Expr::var(Var::U);
    let build = |i: usize| ScalarField1D::build(Expr::num(1.0), u.clone(), Some(u.clone()), domain.axis(i));
    Ok([build(0)?, build(1)?, build(2)?])
}

/// `psi_i = x_i`, `phi_i = 1`, `kappa = 0`,
/// `eta = 1/(2(x1 - x2)(x2 - x3)(x3 - x1))`.
pub fn halphen_structure(domain: DomainBox) -> Result<PoissonFamilySpec> {
    check_pairwise_distinct(&domain)?;
    let eta = parse("1/(2*(x1 - x2)*(x2 - x3)*(x3 - x1))").expect("valid literal");
    PoissonFamilySpec::new("halphen", eta, unit_axes(&domain)?, KappaMatrix::zero(), domain)
}

/// As [`halphen_structure`] with `eta = -1/((x1 - x2)(x2 - x3)(x3 - x1))`.
pub fn circle_maps_structure(domain: DomainBox) -> Result<PoissonFamilySpec> {
    check_pairwise_distinct(&domain)?;
    let eta = parse("-1/((x1 - x2)*(x2 - x3)*(x3 - x1))").expect("valid literal");
    PoissonFamilySpec::new("circle-maps", eta, unit_axes(&domain)?, KappaMatrix::zero(), domain)
}

/// Principal moments of inertia and the derived constants
/// `alpha1 = (I2 - I3)/(I2 I3)` and cyclic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EulerTopParams {
    inertia: [f64; 3],
    alpha: [f64; 3],
}

impl EulerTopParams {
    pub fn new(i1: f64, i2: f64, i3: f64) -> Result<Self> {
        let inertia = [i1, i2, i3];
        if inertia.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Precondition(format!(
                "moments of inertia must be positive and finite (got {inertia:?})"
            )));
        }
        if i1 == i2 || i2 == i3 || i3 == i1 {
            return Err(Error::DegenerateParameters(format!(
                "moments {inertia:?} are not pairwise distinct, so alpha1·alpha2·alpha3 = 0"
            )));
        }
        let alpha = [
            (i2 - i3) / (i2 * i3),
            (i3 - i1) / (i1 * i3),
            (i1 - i2) / (i1 * i2),
        ];
        if alpha.iter().product::<f64>() == 0.0 {
            return Err(Error::DegenerateParameters(format!(
                "alpha {alpha:?} has a vanishing product"
            )));
        }
        Ok(Self { inertia, alpha })
    }

    pub fn inertia(&self) -> [f64; 3] {
        self.inertia
    }

    pub fn alpha(&self) -> [f64; 3] {
        self.alpha
    }

    /// `(alpha2·alpha3, alpha1·alpha3, alpha1·alpha2)`: `psi_i = c_i·x_i²`.
    pub fn psi_coefficients(&self) -> [f64; 3] {
        let [a1, a2, a3] = self.alpha;
        [a2 * a3, a1 * a3, a1 * a2]
    }
}

/// `[0.5, 1.5]³`, inside the positive octant.
pub fn euler_top_default_domain() -> DomainBox {
    DomainBox::from_bounds([[0.5, 1.5]; 3]).expect("valid default box")
}

fn octant_sign(iv: Interval, axis: usize) -> Result<f64> {
    if iv.lo() > 0.0 {
        Ok(1.0)
    } else if iv.hi() < 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::Precondition(format!(
            "axis {} interval [{}, {}] meets the plane x{} = 0; the Euler top needs a single open octant",
            axis + 1,
            iv.lo(),
            iv.hi(),
            axis + 1
        )))
    }
}

/// `eta = 1/(2 alpha1 alpha2 alpha3)`, `psi_i = c_i x_i²` with the
/// coefficients of [`EulerTopParams::psi_coefficients`], `kappa = 0`.
/// `zeta_i` takes the sign of the octant on axis i.
pub fn euler_top_structure(params: &EulerTopParams, domain: DomainBox) -> Result<PoissonFamilySpec> {
    let u = || Expr::var(Var::U);
    let coef = params.psi_coefficients();
    let mut axes = Vec::with_capacity(3);
    for (i, &c) in coef.iter().enumerate() {
        let iv = domain.axis(i);
        let sigma = octant_sign(iv, i)?;
        let psi = Expr::num(c) * u().pow(Expr::num(2.0));
        let phi = Expr::num(2.0 * c) * u();
        let zeta = Expr::num(sigma) * Expr::call(crate::expr::Func::Sqrt, u() / Expr::num(c));
        axes.push(ScalarField1D::build(phi, psi, Some(zeta), iv)?);
    }
    let axes: [ScalarField1D; 3] = axes.try_into().expect("three axes");
    let [a1, a2, a3] = params.alpha;
    let eta = Expr::num(1.0 / (2.0 * a1 * a2 * a3));
    PoissonFamilySpec::new("euler-top", eta, axes, KappaMatrix::zero(), domain)
}

/// The cubic form `J12 = (alpha2 x1² - alpha1 x2²) x3` and cyclic, written
/// without the family decomposition.
pub fn euler_top_raw_matrix(params: &EulerTopParams, x: &[f64; 3]) -> crate::family::StructureMatrixValue {
    let [a1, a2, a3] = params.alpha;
    let [x1, x2, x3] = *x;
    crate::family::StructureMatrixValue::from_entries([
        (a2 * x1 * x1 - a1 * x2 * x2) * x3,
        (a3 * x2 * x2 - a2 * x3 * x3) * x1,
        (a1 * x3 * x3 - a3 * x1 * x1) * x2,
    ])
}

/// `x1 + x2 + x3`.
pub fn halphen_hamiltonian() -> Expr {
    parse("x1 + x2 + x3").expect("valid literal")
}

/// Rotational kinetic energy `(x1²/I1 + x2²/I2 + x3²/I3)/2`.
pub fn euler_top_hamiltonian(params: &EulerTopParams) -> Expr {
    let [i1, i2, i3] = params.inertia;
    let sq = |v: Var| Expr::var(v).pow(Expr::num(2.0));
    Expr::num(0.5)
        * (sq(Var::X1) / Expr::num(i1) + sq(Var::X2) / Expr::num(i2) + sq(Var::X3) / Expr::num(i3))
}

/// A built-in structure with its default Hamiltonian.
#[derive(Debug, Clone)]
pub struct BuiltinSystem {
    pub spec: PoissonFamilySpec,
    pub hamiltonian: Expr,
}

/// Looks up a built-in by name. `inertia` applies to the Euler top only
/// (default `(1, 2, 3)`); `domain` replaces the default domain.
pub fn builtin(name: &str, inertia: Option<[f64; 3]>, domain: Option<DomainBox>) -> Result<BuiltinSystem> {
    match name {
        "halphen" | "circle-maps" => {
            if inertia.is_some() {
                return Err(Error::Precondition(format!("{name} takes no moments of inertia")));
            }
            let domain = domain.unwrap_or_else(halphen_default_domain);
            let spec = if name == "halphen" {
                halphen_structure(domain)?
            } else {
                circle_maps_structure(domain)?
            };
            Ok(BuiltinSystem {
                spec,
                hamiltonian: halphen_hamiltonian(),
            })
        }
        "euler-top" => {
            let [i1, i2, i3] = inertia.unwrap_or([1.0, 2.0, 3.0]);
            let params = EulerTopParams::new(i1, i2, i3)?;
            let domain = domain.unwrap_or_else(euler_top_default_domain);
            Ok(BuiltinSystem {
                spec: euler_top_structure(&params, domain)?,
                hamiltonian: euler_top_hamiltonian(&params),
            })
        }
        other => Err(Error::Precondition(format!(
            "unknown system `{other}` (available: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}
