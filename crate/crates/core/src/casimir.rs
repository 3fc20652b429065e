//! Casimir invariants `C_k = chi_jk / chi_ij`, `(i, j, k)` cyclic.
//!
//! `C_k` exists wherever `chi_ij` does not vanish; the three of them multiply
//! to one where all are defined.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{Axis, PoissonFamilySpec};
use crate::scalar_fields::fd_step;
use crate::Point;

/// Relative threshold on the denominator `chi_ij`.
pub const DENOMINATOR_TOL: f64 = 1e-12;
/// Domain samples used by [`CasimirSelector::new`].
pub const SELECTOR_SAMPLES: usize = 512;
const SELECTOR_SEED: u64 = 0xc0ffee;

// Entry slots are (chi12, chi23, chi31) and (J12, J23, J31); slot a holds the
// pair (a, a+1). For C_k the denominator chi_ij sits in slot k+1 and the
// numerator chi_jk in slot k+2.
fn den_slot(k: Axis) -> usize {
    (k.index() + 1) % 3
}

fn num_slot(k: Axis) -> usize {
    (k.index() + 2) % 3
}

/// `(chi_jk, chi_ij)` after the threshold check on `chi_ij`.
fn fraction(spec: &PoissonFamilySpec, k: Axis, x: &Point) -> Result<(f64, f64)> {
    let chi = spec.chis(x)?;
    let (i, j) = k.cyclic_pair();
    let den = chi[den_slot(k)];
    let threshold = DENOMINATOR_TOL * (1.0 + spec.psi(i, x)?.abs() + spec.psi(j, x)?.abs());
    if den.abs() <= threshold {
        return Err(Error::UndefinedCasimir {
            k: k.number(),
            point: *x,
            denominator: den.abs(),
        });
    }
    Ok((chi[num_slot(k)], den))
}

/// `C_k(x)`.
pub fn casimir_value(spec: &PoissonFamilySpec, k: Axis, x: &Point) -> Result<f64> {
    let (num, den) = fraction(spec, k, x)?;
    Ok(num / den)
}

/// `∇C_k(x)` from `∂_i C_k = -J_jk / (eta·chi_ij²)` with `(i, j, k)` cyclic
/// in the component index.
pub fn casimir_gradient(spec: &PoissonFamilySpec, k: Axis, x: &Point) -> Result<[f64; 3]> {
    let (_, den) = fraction(spec, k, x)?;
    let j = spec.evaluate(x)?.entries();
    let eta = spec.eta().value(x)?;
    let scale = eta * den * den;
    Ok([0, 1, 2].map(|i| -j[(i + 1) % 3] / scale))
}

/// Central differences of [`casimir_value`]; a test oracle for
/// [`casimir_gradient`].
pub fn casimir_gradient_fd(spec: &PoissonFamilySpec, k: Axis, x: &Point) -> Result<[f64; 3]> {
    let mut g = [0.0; 3];
    for (l, gl) in g.iter_mut().enumerate() {
        let h = fd_step(x[l]);
        let mut plus = *x;
        let mut minus = *x;
        plus[l] += h;
        minus[l] -= h;
        *gl = (casimir_value(spec, k, &plus)? - casimir_value(spec, k, &minus)?) / (2.0 * h);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Annihilation {
    /// `||J·∇C_k||_∞`.
    pub residual: f64,
    /// `1 + max|J|·max|∇C_k|`, the scale the residual is measured against.
    pub scale: f64,
}

impl Annihilation {
    pub fn relative(&self) -> f64 {
        self.residual / self.scale
    }
}

/// `J(x)·∇C_k(x)` in the max norm.
pub fn annihilation_residual(spec: &PoissonFamilySpec, k: Axis, x: &Point) -> Result<Annihilation> {
    let grad = casimir_gradient(spec, k, x)?;
    let j = spec.evaluate(x)?;
    let v = j.apply(&grad);
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(Annihilation {
        residual: v.iter().fold(0.0, |m, c| m.max(c.abs())),
        scale: 1.0 + j.max_abs() * gmax,
    })
}

/// A Casimir index whose denominator `chi_ij` was checked not to vanish on
/// sampled domain points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CasimirSelector {
    pub k: Axis,
    /// Smallest sampled `|chi_ij|`.
    pub min_abs_denominator: f64,
    /// Whether every sample had the same sign of `chi_ij`.
    pub sign_constant: bool,
}

impl CasimirSelector {
    pub fn new(spec: &PoissonFamilySpec, k: Axis) -> Result<Self> {
        let points = spec.domain().sample(SELECTOR_SAMPLES, SELECTOR_SEED)?;
        Self::from_points(spec, k, &points)
    }

    pub(crate) fn from_points(spec: &PoissonFamilySpec, k: Axis, points: &[Point]) -> Result<Self> {
        let mut min_abs = f64::INFINITY;
        let mut sign = 0.0;
        let mut sign_constant = true;
        for x in points {
            let (_, den) = fraction(spec, k, x).map_err(|e| match e {
                Error::UndefinedCasimir { k, point, .. } => Error::HypothesisViolation {
                    k,
                    point,
                    reason: "chi_ij vanishes".into(),
                },
                other => other,
            })?;
            min_abs = min_abs.min(den.abs());
            if sign == 0.0 {
                sign = den.signum();
            } else if den.signum() != sign {
                sign_constant = false;
            }
        }
        Ok(Self {
            k,
            min_abs_denominator: min_abs,
            sign_constant,
        })
    }
}
