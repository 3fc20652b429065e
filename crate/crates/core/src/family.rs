//! The three-function family of 3-D Poisson structures.
//!
//! A member is fixed by a nonvanishing factor `eta(x)`, one field triple per
//! axis and a zero-sum constant matrix `kappa`. With
//! `chi_ij = psi_i(x_i) - psi_j(x_j) + kappa_ij` the independent entries are
//!
//! ```text
//! J12 = eta·chi12·phi3(x3),  J23 = eta·chi23·phi1(x1),  J31 = eta·chi31·phi2(x2).
//! ```
//!
//! Since `chi12 + chi23 + chi31 = 0`, either no more than one entry vanishes
//! (rank 2) or all three do (rank 0).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::scalar_fields::{DomainBox, ScalarField1D};
use crate::verification::{ExprMatrixField, MatrixField3};
use crate::Point;

/// Default absolute tolerance for rank decisions and nonvanishing checks.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Two vanishing entries next to one larger than this multiple of the
/// tolerance cannot come from a family member.
pub const RANK_ALARM_RATIO: f64 = 1e3;
/// Number of domain samples used to check that `eta` does not vanish.
pub const ETA_CHECK_SAMPLES: usize = 256;
const ETA_CHECK_SEED: u64 = 0x5eed_e7a0;

/// `(a, b, c)` cyclic triples indexed by the entry they produce:
/// entry 0 is J12 (uses phi3), entry 1 is J23 (phi1), entry 2 is J31 (phi2).
pub(crate) const CYCLIC: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];

/// One of the three phase-space axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::X3];

    /// From the 1-based number used in formulas and on the command line.
    pub fn from_number(n: usize) -> Result<Axis> {
        match n {
            1 => Ok(Axis::X1),
            2 => Ok(Axis::X2),
            3 => Ok(Axis::X3),
            _ => Err(Error::InvalidAxis(n)),
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn from_index(i: usize) -> Axis {
        Axis::ALL[i % 3]
    }

    /// The pair `(i, j)` such that `(i, j, self)` is a cyclic permutation.
    pub fn cyclic_pair(self) -> (Axis, Axis) {
        let k = self.index();
        (Axis::from_index(k + 1), Axis::from_index(k + 2))
    }

    pub fn var(self) -> Var {
        Var::SPATIAL[self.index()]
    }
}

/// Skew-symmetric constants with `kappa12 + kappa23 + kappa31 = 0`.
///
/// Only `kappa12` and `kappa23` are stored; `kappa31` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaMatrix {
    k12: f64,
    k23: f64,
}

impl KappaMatrix {
    pub fn new(k12: f64, k23: f64) -> Result<Self> {
        if !(k12.is_finite() && k23.is_finite()) {
            return Err(Error::NonFinite(format!("kappa ({k12}, {k23})")));
        }
        Ok(Self { k12, k23 })
    }

    pub fn zero() -> Self {
        Self { k12: 0.0, k23: 0.0 }
    }

    pub fn k12(&self) -> f64 {
        self.k12
    }

    pub fn k23(&self) -> f64 {
        self.k23
    }

    pub fn k31(&self) -> f64 {
        -(self.k12 + self.k23)
    }

    /// `(kappa12, kappa23, kappa31)`.
    pub fn as_array(&self) -> [f64; 3] {
        [self.k12, self.k23, self.k31()]
    }

    pub fn get(&self, i: Axis, j: Axis) -> f64 {
        let a = self.as_array();
        match (i.index(), j.index()) {
            (p, q) if p == q => 0.0,
            (p, q) if (p + 1) % 3 == q => a[p],
            (_, q) => -a[q],
        }
    }

    /// `kappa_ij + shift_i - shift_j`, still zero-sum.
    pub fn shifted(&self, shift: [f64; 3]) -> Result<Self> {
        Self::new(
            self.k12 + shift[0] - shift[1],
            self.k23 + shift[1] - shift[2],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EtaFactor {
    expr: Expr,
    grad: [Expr; 3],
}

impl EtaFactor {
    fn new(expr: Expr) -> Result<Self> {
        expr.check_variables(&Var::SPATIAL)?;
        let grad = Var::SPATIAL.map(|v| expr.differentiate(v));
        Ok(Self { expr, grad })
    }
}

/// The prefactor `eta(x)` as an ordered product of factors.
///
/// Keeping the factors separate makes rescaling exact: an entry of the
/// rescaled structure is the new factor times the old entry, with the same
/// floating-point rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaField {
    factors: Vec<EtaFactor>,
}

impl EtaField {
    pub fn new(expr: Expr) -> Result<Self> {
        Ok(Self {
            factors: vec![EtaFactor::new(expr)?],
        })
    }

    fn rescaled(&self, factor: Expr) -> Result<Self> {
        let mut factors = self.factors.clone();
        factors.push(EtaFactor::new(factor)?);
        Ok(Self { factors })
    }

    /// `eta(x)·inner`, applying the factors in order.
    pub fn apply(&self, x: &Point, inner: f64) -> Result<f64> {
        let mut v = inner;
        for f in &self.factors {
            v *= f.expr.eval_point(*x)?;
        }
        Ok(v)
    }

    pub fn value(&self, x: &Point) -> Result<f64> {
        let mut factors = self.factors.iter();
        let first = factors.next().expect("eta has at least one factor");
        let mut v = first.expr.eval_point(*x)?;
        for f in factors {
            v *= f.expr.eval_point(*x)?;
        }
        Ok(v)
    }

    pub fn gradient(&self, x: &Point) -> Result<[f64; 3]> {
        let values = self
            .factors
            .iter()
            .map(|f| f.expr.eval_point(*x))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut grad = [0.0; 3];
        for (m, f) in self.factors.iter().enumerate() {
            let others: f64 = values
                .iter()
                .enumerate()
                .filter(|(n, _)| *n != m)
                .map(|(_, v)| v)
                .product();
            for (g, d) in grad.iter_mut().zip(&f.grad) {
                *g += d.eval_point(*x)? * others;
            }
        }
        Ok(grad)
    }

    /// The full product as a single expression.
    pub fn expr(&self) -> Expr {
        let mut factors = self.factors.iter();
        let first = factors.next().expect("eta has at least one factor");
        factors.fold(first.expr.clone(), |acc, f| f.expr.clone() * acc)
    }
}

/// The three independent entries `(J12, J23, J31)` of a skew 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructureMatrixValue {
    pub j12: f64,
    pub j23: f64,
    pub j31: f64,
}

impl StructureMatrixValue {
    pub fn from_entries(e: [f64; 3]) -> Self {
        Self {
            j12: e[0],
            j23: e[1],
            j31: e[2],
        }
    }

    /// Upper entries of a matrix; the rest is implied by skew-symmetry.
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        Self {
            j12: m[0][1],
            j23: m[1][2],
            j31: m[2][0],
        }
    }

    pub fn entries(&self) -> [f64; 3] {
        [self.j12, self.j23, self.j31]
    }

    /// Full matrix with zero diagonal and `J_ji = -J_ij`.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [0.0, self.j12, -self.j31],
            [-self.j12, 0.0, self.j23],
            [self.j31, -self.j23, 0.0],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `J·v`.
    pub fn apply(&self, v: &[f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
    }

    /// 0 when every entry is within `tol`, 2 otherwise. Exactly two small
    /// entries beside a large one raise [`Error::RankAlarm`].
    pub fn rank(&self, tol: f64) -> Result<u8> {
        let e = self.entries();
        let small = e.iter().filter(|v| v.abs() <= tol).count();
        match small {
            3 => Ok(0),
            2 if self.max_abs() > RANK_ALARM_RATIO * tol => Err(Error::RankAlarm(e)),
            _ => Ok(2),
        }
    }
}

/// One member of the family on a given domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonFamilySpec {
    name: String,
    eta: EtaField,
    axes: [ScalarField1D; 3],
    kappa: KappaMatrix,
    domain: DomainBox,
}

impl PoissonFamilySpec {
    /// Assembles a member. The axis intervals must match the domain box and
    /// `eta` must not vanish at sampled domain points.
    pub fn new(
        name: impl Into<String>,
        eta: Expr,
        axes: [ScalarField1D; 3],
        kappa: KappaMatrix,
        domain: DomainBox,
    ) -> Result<Self> {
        for (i, field) in axes.iter().enumerate() {
            if field.interval() != domain.axis(i) {
                return Err(Error::Precondition(format!(
                    "axis {} interval {:?} does not match the domain box {:?}",
                    i + 1,
                    field.interval(),
                    domain.axis(i)
                )));
            }
        }
        let spec = Self {
            name: name.into(),
            eta: EtaField::new(eta)?,
            axes,
            kappa,
            domain,
        };
        spec.check_eta_nonvanishing(&spec.eta)?;
        Ok(spec)
    }

    /// Without a predicate the domain is a box, which is connected, so a
    /// sign change between samples also means a zero.
    fn check_eta_nonvanishing(&self, eta: &EtaField) -> Result<()> {
        let connected = self.domain.predicate().is_none();
        let mut first: Option<f64> = None;
        for x in self.domain.sample(ETA_CHECK_SAMPLES, ETA_CHECK_SEED)? {
            let v = eta.value(&x)?;
            let sign_flip = connected && first.is_some_and(|s| s != v.signum());
            if v.abs() <= DEFAULT_TOL || sign_flip {
                return Err(Error::Vanishing {
                    what: "eta".into(),
                    at: x.to_vec(),
                });
            }
            first.get_or_insert(v.signum());
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eta(&self) -> &EtaField {
        &self.eta
    }

    pub fn axes(&self) -> &[ScalarField1D; 3] {
        &self.axes
    }

    pub fn axis(&self, a: Axis) -> &ScalarField1D {
        &self.axes[a.index()]
    }

    pub fn kappa(&self) -> KappaMatrix {
        self.kappa
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// `psi_a(x_a)`.
    pub fn psi(&self, a: Axis, x: &Point) -> Result<f64> {
        self.axes[a.index()].psi(x[a.index()])
    }

    /// `phi_a(x_a)`.
    pub fn phi(&self, a: Axis, x: &Point) -> Result<f64> {
        self.axes[a.index()].phi(x[a.index()])
    }

    /// `chi_ij(x) = psi_i(x_i) - psi_j(x_j) + kappa_ij`.
    pub fn chi(&self, i: Axis, j: Axis, x: &Point) -> Result<f64> {
        if i == j {
            return Err(Error::RepeatedAxis(i.number()));
        }
        Ok(self.psi(i, x)? - self.psi(j, x)? + self.kappa.get(i, j))
    }

    /// `(chi12, chi23, chi31)`.
    pub fn chis(&self, x: &Point) -> Result<[f64; 3]> {
        let psi = [
            self.psi(Axis::X1, x)?,
            self.psi(Axis::X2, x)?,
            self.psi(Axis::X3, x)?,
        ];
        let k = self.kappa.as_array();
        Ok([
            psi[0] - psi[1] + k[0],
            psi[1] - psi[2] + k[1],
            psi[2] - psi[0] + k[2],
        ])
    }

    /// Entries at `x` without checking domain membership.
    pub fn evaluate(&self, x: &Point) -> Result<StructureMatrixValue> {
        let chi = self.chis(x)?;
        let mut out = [0.0; 3];
        for (slot, &(_, _, c)) in CYCLIC.iter().enumerate() {
            let phi = self.axes[c].phi(x[c])?;
            out[slot] = self.eta.apply(x, chi[slot] * phi)?;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("structure matrix at {x:?}")));
        }
        Ok(StructureMatrixValue::from_entries(out))
    }

    /// Entries at a domain point.
    pub fn structure_matrix_at(&self, x: &Point) -> Result<StructureMatrixValue> {
        self.domain.check(x)?;
        self.evaluate(x)
    }

    /// Rank (0 or 2) at a domain point.
    pub fn rank_at(&self, x: &Point, tol: f64) -> Result<u8> {
        self.structure_matrix_at(x)?.rank(tol)
    }

    /// Same structure multiplied by a nonvanishing `factor(x)`.
    pub fn rescale(&self, factor: Expr) -> Result<Self> {
        let eta = self.eta.rescaled(factor)?;
        self.check_eta_nonvanishing(&eta)?;
        Ok(Self {
            eta,
            ..self.clone()
        })
    }

    /// Replaces each `psi_i` by `psi_i + shift_i` and `kappa_ij` by
    /// `kappa_ij + shift_i - shift_j`. The result is again a family member;
    /// its `chi_ij` differ from the original ones by `2(shift_i - shift_j)`.
    pub fn shift_primitives(&self, shift: [f64; 3]) -> Result<Self> {
        let axes = [0, 1, 2].map(|i| self.axes[i].shifted(shift[i]));
        Ok(Self {
            axes,
            kappa: self.kappa.shifted(shift)?,
            ..self.clone()
        })
    }

    /// Same structure matrix written with the primitives `psi_i + shift_i`:
    /// the constants absorb the shift as `kappa_ij - shift_i + shift_j`.
    pub fn reexpress_primitives(&self, shift: [f64; 3]) -> Result<Self> {
        let axes = [0, 1, 2].map(|i| self.axes[i].shifted(shift[i]));
        Ok(Self {
            axes,
            kappa: self.kappa.shifted(shift.map(|v| -v))?,
            ..self.clone()
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// `d J_entry / d x_l`, laid out as `[l][entry]`, from the product rule
    /// applied to `eta·chi·phi`.
    pub fn entry_partials(&self, x: &Point) -> Result<[[f64; 3]; 3]> {
        let eta = self.eta.value(x)?;
        let grad_eta = self.eta.gradient(x)?;
        let chi = self.chis(x)?;
        let phi = [0, 1, 2].map(|a| self.axes[a].phi(x[a]));
        let phi = [phi[0].clone()?, phi[1].clone()?, phi[2].clone()?];
        let mut out = [[0.0; 3]; 3];
        for (slot, &(a, b, c)) in CYCLIC.iter().enumerate() {
            let dphi_c = self.axes[c].dphi(x[c])?;
            for (l, row) in out.iter_mut().enumerate() {
                let dchi = if l == a {
                    phi[a]
                } else if l == b {
                    -phi[b]
                } else {
                    0.0
                };
                let dphi = if l == c { dphi_c } else { 0.0 };
                row[slot] = grad_eta[l] * chi[slot] * phi[c]
                    + eta * dchi * phi[c]
                    + eta * chi[slot] * dphi;
            }
        }
        Ok(out)
    }

    /// The entries as expressions in `x1, x2, x3`, for routes that should
    /// not share code with [`Self::evaluate`].
    pub fn symbolic_entries(&self) -> [Expr; 3] {
        let eta = self.eta.expr();
        let k = self.kappa.as_array();
        CYCLIC.map(|(a, b, c)| {
            let psi_a = self.axes[a].psi_expr().substitute(Var::U, &Expr::var(Var::SPATIAL[a]));
            let psi_b = self.axes[b].psi_expr().substitute(Var::U, &Expr::var(Var::SPATIAL[b]));
            let phi_c = self.axes[c].phi_expr().substitute(Var::U, &Expr::var(Var::SPATIAL[c]));
            eta.clone() * ((psi_a - psi_b + Expr::num(k[a])) * phi_c)
        })
    }

    /// Symbolic matrix field with symbolically differentiated partials.
    pub fn to_expr_field(&self) -> ExprMatrixField {
        ExprMatrixField::new(self.symbolic_entries())
            .expect("family entries only use x1, x2, x3")
            .with_symbolic_partials()
    }
}

impl MatrixField3 for PoissonFamilySpec {
    fn entries(&self, x: &Point) -> Result<[f64; 3]> {
        Ok(self.evaluate(x)?.entries())
    }

    fn entry_partials(&self, x: &Point) -> Option<Result<[[f64; 3]; 3]>> {
        Some(PoissonFamilySpec::entry_partials(self, x))
    }
}
