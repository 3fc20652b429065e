//! Global Darboux charts.
//!
//! For `(i, j, k)` cyclic and `chi_ij` nonvanishing on the domain, the map
//! `y_i = x_i`, `y_j = x_j`, `y_k = -C_k(x)` is a diffeomorphism with inverse
//!
//! ```text
//! x_k = zeta_k(psi_j(y_j) + kappa_jk + chi_ij(y_i, y_j)·y_k).
//! ```
//!
//! It carries `J` to `J_ij(x(y))·(e_i ∧ e_j)`, and the time change
//! `dτ = J_ij(x(y)) dt` leaves the constant canonical matrix.

use serde::Serialize;

use crate::casimir::{self, CasimirSelector, SELECTOR_SAMPLES};
use crate::error::{Error, Result};
use crate::family::{Axis, PoissonFamilySpec, StructureMatrixValue};
use crate::scalar_fields::fd_step;
use crate::verification::Verdict;
use crate::Point;

/// Entrywise tolerance on `J'/factor` against the canonical matrix.
pub const CANONICAL_TOL: f64 = 1e-8;
/// Round-trip tolerance, scaled by `max(1, |v|)`.
pub const ROUND_TRIP_TOL: f64 = 1e-10;
/// Below this magnitude the reparametrization factor counts as vanishing.
pub const FACTOR_TOL: f64 = 1e-12;
const CHART_SEED: u64 = 0xda7b0;

/// How the Jacobian of the forward map is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct DarbouxChart {
    spec: PoissonFamilySpec,
    k: Axis,
    i: Axis,
    j: Axis,
    sign_branch: Option<f64>,
    selector: CasimirSelector,
}

fn violation(k: Axis, point: Point, reason: impl Into<String>) -> Error {
    Error::HypothesisViolation {
        k: k.number(),
        point,
        reason: reason.into(),
    }
}

impl DarbouxChart {
    /// Builds the chart for index `k`, or for the best-conditioned index
    /// (largest sampled `min |chi_ij|`) when `k` is `None`.
    ///
    /// `chi_ij` must stay clear of zero on 512 domain samples. When the
    /// domain is a plain box, which is connected, a sign change of `chi_ij`
    /// between samples also counts as a violation.
    pub fn build(spec: &PoissonFamilySpec, k: Option<Axis>) -> Result<Self> {
        let points = spec.domain().sample(SELECTOR_SAMPLES, CHART_SEED)?;
        match k {
            Some(k) => Self::build_with(spec, k, &points),
            None => {
                let mut best: Option<DarbouxChart> = None;
                let mut first_err = None;
                for k in [Axis::X3, Axis::X1, Axis::X2] {
                    match Self::build_with(spec, k, &points) {
                        Ok(c) => {
                            let better = best.as_ref().is_none_or(|b| {
                                c.selector.min_abs_denominator > b.selector.min_abs_denominator
                            });
                            if better {
                                best = Some(c);
                            }
                        }
                        Err(e) => {
                            first_err.get_or_insert(e);
                        }
                    }
                }
                best.ok_or_else(|| first_err.expect("three attempts"))
            }
        }
    }

    fn build_with(spec: &PoissonFamilySpec, k: Axis, points: &[Point]) -> Result<Self> {
        let selector = CasimirSelector::from_points(spec, k, points)?;
        let (i, j) = k.cyclic_pair();
        if !selector.sign_constant && spec.domain().predicate().is_none() {
            let slot = i.index();
            let s0 = spec.chis(&points[0])?[slot].signum();
            let mut at = points[0];
            for x in points {
                if spec.chis(x)?[slot].signum() != s0 {
                    at = *x;
                    break;
                }
            }
            return Err(violation(
                k,
                at,
                format!(
                    "chi{}{} changes sign on a connected box, so it vanishes inside",
                    i.number(),
                    j.number()
                ),
            ));
        }
        let iv = spec.domain().axis(k.index());
        let sign_branch = if iv.straddles_zero() {
            None
        } else {
            Some(if iv.lo() > 0.0 { 1.0 } else { -1.0 })
        };
        Ok(Self {
            spec: spec.clone(),
            k,
            i,
            j,
            sign_branch,
            selector,
        })
    }

    pub fn spec(&self) -> &PoissonFamilySpec {
        &self.spec
    }

    pub fn k(&self) -> Axis {
        self.k
    }

    /// `(i, j)` with `(i, j, k)` cyclic.
    pub fn pair(&self) -> (Axis, Axis) {
        (self.i, self.j)
    }

    /// Sign of `x_k` when the domain lies on one side of `x_k = 0`.
    pub fn sign_branch(&self) -> Option<f64> {
        self.sign_branch
    }

    pub fn selector(&self) -> &CasimirSelector {
        &self.selector
    }

    /// Slot of `J_ij` among `(J12, J23, J31)`.
    fn pair_slot(&self) -> usize {
        self.i.index()
    }

    /// `y(x)`.
    pub fn forward_map(&self, x: &Point) -> Result<Point> {
        let mut y = *x;
        y[self.k.index()] = -casimir::casimir_value(&self.spec, self.k, x)?;
        Ok(y)
    }

    /// Argument of `zeta_k` in the inverse map.
    fn zeta_argument(&self, y: &Point) -> Result<f64> {
        let (i, j, k) = (self.i, self.j, self.k);
        let kappa = self.spec.kappa();
        let psi_i = self.spec.psi(i, y)?;
        let psi_j = self.spec.psi(j, y)?;
        let chi_ij = psi_i - psi_j + kappa.get(i, j);
        Ok(psi_j + kappa.get(j, k) + chi_ij * y[k.index()])
    }

    /// `x(y)`.
    pub fn inverse_map(&self, y: &Point) -> Result<Point> {
        let k = self.k.index();
        let target = self.zeta_argument(y)?;
        let xk = self.spec.axis(self.k).psi_inverse(target)?;
        if let Some(sign) = self.sign_branch {
            if xk.signum() != sign {
                return Err(Error::BranchMismatch {
                    axis: self.k.number(),
                    value: xk,
                    sign,
                });
            }
        }
        let mut x = *y;
        x[k] = xk;
        Ok(x)
    }

    /// `∂y/∂x` at `x`: rows `e_i`, `e_j` and `-∇C_k`.
    pub fn forward_jacobian(&self, x: &Point, mode: JacobianMode) -> Result<[[f64; 3]; 3]> {
        match mode {
            JacobianMode::Analytic => {
                let mut d = [[0.0; 3]; 3];
                d[self.i.index()][self.i.index()] = 1.0;
                d[self.j.index()][self.j.index()] = 1.0;
                let g = casimir::casimir_gradient(&self.spec, self.k, x)?;
                d[self.k.index()] = g.map(|v| -v);
                Ok(d)
            }
            JacobianMode::FiniteDifference => {
                let mut d = [[0.0; 3]; 3];
                for l in 0..3 {
                    let h = fd_step(x[l]);
                    let mut plus = *x;
                    let mut minus = *x;
                    plus[l] += h;
                    minus[l] -= h;
                    let (a, b) = (self.forward_map(&plus)?, self.forward_map(&minus)?);
                    for (row, (p, q)) in d.iter_mut().zip(a.iter().zip(&b)) {
                        row[l] = (p - q) / (2.0 * h);
                    }
                }
                Ok(d)
            }
        }
    }

    /// `∂x_k/∂y` at `y`, from differentiating the inverse map.
    pub fn inverse_gradient_k(&self, y: &Point) -> Result<[f64; 3]> {
        let (i, j, k) = (self.i, self.j, self.k);
        let x = self.inverse_map(y)?;
        let phi_k = self.spec.phi(k, &x)?;
        let yk = y[k.index()];
        let chi_ij = self.spec.chi(i, j, y)?;
        let mut g = [0.0; 3];
        g[i.index()] = self.spec.phi(i, y)? * yk / phi_k;
        g[j.index()] = self.spec.phi(j, y)? * (1.0 - yk) / phi_k;
        g[k.index()] = chi_ij / phi_k;
        Ok(g)
    }

    /// `J'(y) = D J Dᵀ` with `D = ∂y/∂x` evaluated at `x(y)`.
    pub fn pushforward_matrix(&self, y: &Point, mode: JacobianMode) -> Result<StructureMatrixValue> {
        let x = self.inverse_map(y)?;
        let j = self.spec.evaluate(&x)?.matrix();
        let d = self.forward_jacobian(&x, mode)?;
        let mut dj = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                dj[r][c] = (0..3).map(|l| d[r][l] * j[l][c]).sum();
            }
        }
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = (0..3).map(|l| dj[r][l] * d[c][l]).sum();
            }
        }
        Ok(StructureMatrixValue::from_matrix(&out))
    }

    /// `J_ij(x(y)) = eta·chi_ij(y_i, y_j)·phi_k(x_k(y))`.
    pub fn reparam_factor(&self, y: &Point) -> Result<f64> {
        let x = self.inverse_map(y)?;
        let eta = self.spec.eta().value(&x)?;
        let chi = self.spec.chi(self.i, self.j, y)?;
        let phi = self.spec.phi(self.k, &x)?;
        let factor = eta * chi * phi;
        if factor.is_nan() || factor.abs() <= FACTOR_TOL {
            return Err(violation(self.k, x, format!("reparametrization factor {factor:e} vanishes")));
        }
        Ok(factor)
    }

    /// `e_i ∧ e_j`: the constant matrix reached after the time change.
    pub fn canonical_matrix(&self) -> StructureMatrixValue {
        let mut e = [0.0; 3];
        e[self.pair_slot()] = 1.0;
        StructureMatrixValue::from_entries(e)
    }

    /// Samples `n_samples` domain points, maps them to `y` and checks the
    /// round trips, the decoupling of `y_k`, the agreement between factor
    /// and pushforward, and `J'/factor` against the canonical matrix.
    pub fn canonical_check(&self, n_samples: usize, seed: u64, mode: JacobianMode) -> Result<CanonicalReport> {
        if n_samples == 0 {
            return Err(Error::Precondition("n_samples must be at least 1".into()));
        }
        let points = self.spec.domain().sample(n_samples, seed)?;
        let canonical = self.canonical_matrix().entries();
        let slot = self.pair_slot();
        let mut r = CanonicalReport {
            k: self.k.number(),
            samples: points.len(),
            seed,
            max_canonical_deviation: 0.0,
            max_decoupling: 0.0,
            max_factor_gap: 0.0,
            max_round_trip_x: 0.0,
            max_round_trip_y: 0.0,
            factor_sign_constant: true,
            factor_range: [f64::INFINITY, f64::NEG_INFINITY],
            casimir_range: [f64::INFINITY, f64::NEG_INFINITY],
            worst_point: points[0],
            verdict: Verdict::Pass,
        };
        let mut factor_sign = 0.0;
        for x in &points {
            let y = self.forward_map(x)?;
            let x_back = self.inverse_map(&y)?;
            let y_back = self.forward_map(&x_back)?;
            let rt_x = (0..3)
                .map(|l| (x_back[l] - x[l]).abs() / x[l].abs().max(1.0))
                .fold(0.0, f64::max);
            let rt_y = (0..3)
                .map(|l| (y_back[l] - y[l]).abs() / y[l].abs().max(1.0))
                .fold(0.0, f64::max);
            r.max_round_trip_x = r.max_round_trip_x.max(rt_x);
            r.max_round_trip_y = r.max_round_trip_y.max(rt_y);

            let factor = self.reparam_factor(&y)?;
            let jp = self.pushforward_matrix(&y, mode)?.entries();
            let gap = (jp[slot] - factor).abs() / factor.abs();
            r.max_factor_gap = r.max_factor_gap.max(gap);
            let mut dev = 0.0f64;
            let mut dec = 0.0f64;
            for s in 0..3 {
                dev = dev.max((jp[s] / factor - canonical[s]).abs());
                if s != slot {
                    dec = dec.max(jp[s].abs() / (1.0 + factor.abs()));
                }
            }
            r.max_decoupling = r.max_decoupling.max(dec);
            if dev > r.max_canonical_deviation {
                r.max_canonical_deviation = dev;
                r.worst_point = *x;
            }
            if factor_sign == 0.0 {
                factor_sign = factor.signum();
            } else if factor.signum() != factor_sign {
                r.factor_sign_constant = false;
            }
            r.factor_range = [r.factor_range[0].min(factor), r.factor_range[1].max(factor)];
            let yk = y[self.k.index()];
            r.casimir_range = [r.casimir_range[0].min(yk), r.casimir_range[1].max(yk)];
        }
        let pass = r.max_canonical_deviation <= CANONICAL_TOL
            && r.max_decoupling <= CANONICAL_TOL
            && r.max_factor_gap <= CANONICAL_TOL
            && r.max_round_trip_x <= ROUND_TRIP_TOL
            && r.max_round_trip_y <= ROUND_TRIP_TOL;
        r.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalReport {
    pub k: usize,
    pub samples: usize,
    pub seed: u64,
    /// Largest `|J'/factor - J_D|` over entries and samples.
    pub max_canonical_deviation: f64,
    /// Largest `|J'_ik|, |J'_jk|` relative to `1 + |factor|`.
    pub max_decoupling: f64,
    /// Largest relative gap between the closed-form factor and `J'_ij`.
    pub max_factor_gap: f64,
    /// `max |x(y(x)) - x| / max(1, |x|)`.
    pub max_round_trip_x: f64,
    /// `max |y(x(y)) - y| / max(1, |y|)`.
    pub max_round_trip_y: f64,
    pub factor_sign_constant: bool,
    pub factor_range: [f64; 2],
    /// Range of the Casimir coordinate `y_k` over the samples.
    pub casimir_range: [f64; 2],
    pub worst_point: Point,
    pub verdict: Verdict,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, Var};
    use crate::family::KappaMatrix;
    use crate::scalar_fields::{DomainBox, ScalarField1D};
    use crate::systems::{self, EulerTopParams};

    fn halphen_wide() -> PoissonFamilySpec {
        systems::halphen_structure(systems::halphen_domain([[-10.0, 10.0]; 3]).unwrap()).unwrap()
    }

    fn halphen_chamber() -> PoissonFamilySpec {
        let d = systems::halphen_domain([[0.0, 1.0]; 3])
            .unwrap()
            .with_predicate(systems::ordered_chamber_predicate())
            .unwrap();
        systems::halphen_structure(d).unwrap()
    }

    fn euler_top() -> (EulerTopParams, PoissonFamilySpec) {
        let p = EulerTopParams::new(1.0, 2.0, 3.0).unwrap();
        let s = systems::euler_top_structure(&p, systems::euler_top_default_domain()).unwrap();
        (p, s)
    }

    #[test]
    fn halphen_maps_and_factor() {
        let chart = DarbouxChart::build(&halphen_wide(), Some(Axis::X3)).unwrap();
        let y = chart.forward_map(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(y, [1.0, 2.0, -2.0]);
        assert_eq!(chart.inverse_map(&y).unwrap(), [1.0, 2.0, 4.0]);
        let f = chart.reparam_factor(&y).unwrap();
        let (y1, y2, y3) = (y[0], y[1], y[2]);
        let closed = 1.0 / (2.0 * (y1 - y2).powi(2) * y3 * (1.0 - y3));
        assert!((f + 1.0 / 12.0).abs() < 1e-16);
        assert!((closed + 1.0 / 12.0).abs() < 1e-16);
        for mode in [JacobianMode::Analytic, JacobianMode::FiniteDifference] {
            let jp = chart.pushforward_matrix(&y, mode).unwrap();
            assert!((jp.j12 + 1.0 / 12.0).abs() < 1e-9);
            assert!(jp.j23.abs() < 1e-9 && jp.j31.abs() < 1e-9);
        }
    }

    #[test]
    fn halphen_inverse_matches_hand_formula() {
        let chart = DarbouxChart::build(&halphen_wide(), Some(Axis::X3)).unwrap();
        for y in [[0.3, -1.0, 0.25], [2.0, 5.0, -1.0]] {
            let x = chart.inverse_map(&y).unwrap();
            assert!((x[2] - (y[1] + (y[0] - y[1]) * y[2])).abs() < 1e-14);
        }
    }

    #[test]
    fn euler_top_maps() {
        let (p, spec) = euler_top();
        let chart = DarbouxChart::build(&spec, Some(Axis::X3)).unwrap();
        assert_eq!(chart.sign_branch(), Some(1.0));
        let y = chart.forward_map(&[1.0, 1.0, 1.0]).unwrap();
        assert!((y[2] - 7.0 / 15.0).abs() < 1e-15);
        let [a1, a2, a3] = p.alpha();
        let hand = ((a3 / a2) * y[1] * y[1] + ((a3 / a1) * y[0] * y[0] - (a3 / a2) * y[1] * y[1]) * y[2]).sqrt();
        assert!((hand - 1.0).abs() < 1e-14);
        let x = chart.inverse_map(&y).unwrap();
        assert!((x[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn canonical_checks_pass() {
        let (_, top) = euler_top();
        // chi31 of this top vanishes on a cone through the box, so k = 2 is
        // not available there.
        for (spec, ks) in [
            (halphen_chamber(), vec![Axis::X1, Axis::X2, Axis::X3]),
            (top, vec![Axis::X1, Axis::X3]),
        ] {
            for k in ks {
                let chart = DarbouxChart::build(&spec, Some(k)).unwrap();
                let r = chart.canonical_check(300, 5, JacobianMode::Analytic).unwrap();
                assert_eq!(r.verdict, Verdict::Pass, "{} k={k:?}: {r:?}", spec.name());
                assert!(r.factor_sign_constant);
            }
        }
    }

    #[test]
    fn euler_top_default_chart_is_well_conditioned() {
        let (_, spec) = euler_top();
        let chart = DarbouxChart::build(&spec, None).unwrap();
        let others: Vec<f64> = Axis::ALL
            .iter()
            .filter_map(|&k| DarbouxChart::build(&spec, Some(k)).ok())
            .map(|c| c.selector().min_abs_denominator)
            .collect();
        assert!(others.iter().all(|m| *m <= chart.selector().min_abs_denominator));
    }

    #[test]
    fn vanishing_chi_is_a_hypothesis_violation() {
        // chi12 = x1 - x2 crosses zero inside the box.
        let domain = DomainBox::from_bounds([[-1.0, 1.0], [-1.0, 1.0], [2.0, 3.0]]).unwrap();
        let u = Expr::var(Var::U);
        let axes = [0, 1, 2].map(|i| {
            ScalarField1D::build(Expr::num(1.0), u.clone(), Some(u.clone()), domain.axis(i)).unwrap()
        });
        let spec = PoissonFamilySpec::new("flat", Expr::num(1.0), axes, KappaMatrix::zero(), domain).unwrap();
        assert!(matches!(
            DarbouxChart::build(&spec, Some(Axis::X3)),
            Err(Error::HypothesisViolation { k: 3, .. })
        ));
        // chi23 and chi31 keep their signs, so k = 1 and k = 2 work.
        assert!(DarbouxChart::build(&spec, Some(Axis::X1)).is_ok());
        assert!(DarbouxChart::build(&spec, Some(Axis::X2)).is_ok());
        assert_ne!(DarbouxChart::build(&spec, None).unwrap().k(), Axis::X3);
    }

    #[test]
    fn inverse_outside_range() {
        let (_, spec) = euler_top();
        let chart = DarbouxChart::build(&spec, Some(Axis::X3)).unwrap();
        assert!(matches!(
            chart.inverse_map(&[1.0, 1.0, 100.0]),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn inverse_gradient_matches_fd() {
        let chart = DarbouxChart::build(&halphen_chamber(), Some(Axis::X1)).unwrap();
        let y = chart.forward_map(&[0.1, 0.4, 0.8]).unwrap();
        let g = chart.inverse_gradient_k(&y).unwrap();
        for l in 0..3 {
            let h = 1e-6;
            let mut p = y;
            let mut m = y;
            p[l] += h;
            m[l] -= h;
            let fd = (chart.inverse_map(&p).unwrap()[0] - chart.inverse_map(&m).unwrap()[0]) / (2.0 * h);
            assert!((fd - g[l]).abs() < 1e-6 * g[l].abs().max(1.0), "{l}: {fd} vs {}", g[l]);
        }
    }
}
