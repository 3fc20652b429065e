//! One-variable field triples `(phi, psi, zeta)` and the domains they live on.
//!
//! `psi` is a user-supplied primitive of the density `phi`; `zeta`, when
//! given, is the inverse of `psi`. Construction validates the triple on a
//! sampling grid. Nonvanishing of `phi` is therefore certified only at the
//! sampled points plus the absence of sign changes between neighbours; it is
//! not an interval-arithmetic proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::Point;

/// Grid size used when validating a field.
pub const VALIDATION_GRID: usize = 256;
/// A predicate value at or below this magnitude excludes the point.
pub const PREDICATE_TOL: f64 = 1e-12;
/// Threshold below which a sampled function value counts as zero.
pub const ZERO_TOL: f64 = 1e-12;

const PRIMITIVE_TOL: f64 = 1e-6;
const ZETA_TOL: f64 = 1e-9;
const INVERSE_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 80;

/// Central-difference step used throughout the crate: cbrt(eps)·max(1, |x|).
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// A closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Whether the interval contains zero.
    pub fn straddles_zero(&self) -> bool {
        self.contains(0.0)
    }

    /// `n >= 2` equally spaced points including both endpoints.
    pub fn linspace(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let last = (n.max(2) - 1) as f64;
        (0..n.max(2)).map(move |k| {
            if k as f64 == last {
                self.hi
            } else {
                self.lo + (k as f64 / last) * self.width()
            }
        })
    }
}

/// Three closed intervals plus an optional predicate that must not vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    axes: [Interval; 3],
    predicate: Option<Expr>,
}

impl DomainBox {
    pub fn new(axes: [Interval; 3], predicate: Option<Expr>) -> Result<Self> {
        if let Some(p) = &predicate {
            p.check_variables(&Var::SPATIAL)?;
        }
        Ok(Self { axes, predicate })
    }

    /// Box from `[[lo, hi]; 3]` without a predicate.
    pub fn from_bounds(bounds: [[f64; 2]; 3]) -> Result<Self> {
        let axes = [
            Interval::new(bounds[0][0], bounds[0][1])?,
            Interval::new(bounds[1][0], bounds[1][1])?,
            Interval::new(bounds[2][0], bounds[2][1])?,
        ];
        Self::new(axes, None)
    }

    pub fn with_predicate(self, predicate: Expr) -> Result<Self> {
        Self::new(self.axes, Some(predicate))
    }

    pub fn axes(&self) -> &[Interval; 3] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> Interval {
        self.axes[i]
    }

    pub fn predicate(&self) -> Option<&Expr> {
        self.predicate.as_ref()
    }

    pub fn in_box(&self, x: &Point) -> bool {
        self.axes.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    /// Box membership and a predicate value above [`PREDICATE_TOL`] in
    /// magnitude. A predicate that fails to evaluate excludes the point.
    pub fn contains(&self, x: &Point) -> bool {
        if !self.in_box(x) {
            return false;
        }
        match &self.predicate {
            None => true,
            Some(p) => matches!(p.eval_point(*x), Ok(v) if v.abs() > PREDICATE_TOL),
        }
    }

    pub fn check(&self, x: &Point) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(*x))
        }
    }

    /// Uniform draw from the box (predicate not applied). Each draw depends
    /// only on `(seed, index)`, so parallel callers get identical points.
    pub fn box_point(&self, seed: u64, index: u64) -> Point {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut x = [0.0; 3];
        for (xi, iv) in x.iter_mut().zip(&self.axes) {
            *xi = iv.lo + rng.gen::<f64>() * iv.width();
        }
        x
    }

    /// Rejection-samples up to `n` domain points from at most `100·n` draws.
    /// Fails if fewer than `n/10` are accepted.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Point>> {
        let max_draws = 100 * n.max(1);
        let mut out = Vec::with_capacity(n);
        let mut draws = 0;
        while out.len() < n && draws < max_draws {
            let x = self.box_point(seed, draws as u64);
            draws += 1;
            if self.contains(&x) {
                out.push(x);
            }
        }
        if out.len() < n.div_ceil(10).max(1) {
            return Err(Error::EmptyDomain {
                accepted: out.len(),
                draws,
            });
        }
        Ok(out)
    }
}

/// Outcome of [`assert_nonvanishing`].
#[derive(Debug, Clone, PartialEq)]
pub struct NonvanishingReport {
    pub pass: bool,
    pub samples: usize,
    /// Sample with the smallest |f|.
    pub min_abs: f64,
    pub min_at: f64,
    /// First adjacent pair with a sign change, if any.
    pub sign_change: Option<(f64, f64)>,
}

/// Samples `f` on `samples` equally spaced points of `interval`. Fails if any
/// sample has |f| <= 1e-12 (or is not finite), or if `f` changes sign
/// between neighbouring samples.
pub fn assert_nonvanishing<F>(f: F, interval: Interval, samples: usize) -> NonvanishingReport
where
    F: Fn(f64) -> f64,
{
    let mut report = NonvanishingReport {
        pass: true,
        samples: samples.max(2),
        min_abs: f64::INFINITY,
        min_at: interval.lo,
        sign_change: None,
    };
    let mut prev: Option<(f64, f64)> = None;
    for u in interval.linspace(samples) {
        let v = f(u);
        let mag = if v.is_finite() { v.abs() } else { 0.0 };
        if mag < report.min_abs {
            report.min_abs = mag;
            report.min_at = u;
        }
        if mag <= ZERO_TOL {
            report.pass = false;
        }
        if let Some((pu, pv)) = prev {
            if report.sign_change.is_none() && pv.signum() != v.signum() {
                report.sign_change = Some((pu, u));
                report.pass = false;
            }
        }
        prev = Some((u, v));
    }
    report
}

/// Density `phi`, primitive `psi` and optional inverse `zeta` of one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField1D {
    phi: Expr,
    dphi: Expr,
    psi: Expr,
    zeta: Option<Expr>,
    interval: Interval,
    psi_range: (f64, f64),
}

impl ScalarField1D {
    /// Validates the triple on a 256-point grid: `psi' = phi`,
    /// `phi` nonvanishing, `psi` strictly monotone and `zeta(psi(u)) = u`.
    pub fn build(phi: Expr, psi: Expr, zeta: Option<Expr>, interval: Interval) -> Result<Self> {
        for e in std::iter::once(&phi).chain([&psi]).chain(zeta.as_ref()) {
            e.check_variables(&[Var::U])?;
        }
        let dphi = phi.differentiate(Var::U);
        let mut field = Self {
            phi,
            dphi,
            psi,
            zeta,
            interval,
            psi_range: (0.0, 0.0),
        };

        let report = assert_nonvanishing(
            |u| field.phi(u).unwrap_or(f64::NAN),
            interval,
            VALIDATION_GRID,
        );
        if !report.pass {
            let at = report
                .sign_change
                .map(|(a, b)| 0.5 * (a + b))
                .unwrap_or(report.min_at);
            return Err(Error::Vanishing {
                what: "phi".into(),
                at: vec![at],
            });
        }

        let grid: Vec<f64> = interval.linspace(VALIDATION_GRID).collect();
        let mut psi_values = Vec::with_capacity(grid.len());
        for &u in &grid {
            let phi = field.phi(u)?;
            let close = |d: f64| (d - phi).abs() <= PRIMITIVE_TOL * phi.abs().max(1.0);
            let mut derivative = field.psi_derivative_fd(u, fd_step(u))?;
            if !close(derivative) && u.abs() < 1.0 && u != 0.0 {
                // Near the origin psi can curve on the scale of |u| itself.
                derivative = field.psi_derivative_fd(u, f64::EPSILON.cbrt() * u.abs())?;
            }
            if !close(derivative) {
                return Err(Error::PrimitiveMismatch { u, derivative, phi });
            }
            psi_values.push(field.psi(u)?);
        }

        let increasing = psi_values[1] > psi_values[0];
        if psi_values
            .windows(2)
            .any(|w| (w[1] > w[0]) != increasing || w[1] == w[0])
        {
            return Err(Error::Precondition("psi is not strictly monotone".into()));
        }
        let (a, b) = (psi_values[0], psi_values[psi_values.len() - 1]);
        field.psi_range = (a.min(b), a.max(b));

        if let Some(zeta) = &field.zeta {
            for (&u, &p) in grid.iter().zip(&psi_values) {
                let back = zeta.eval_scalar(p)?;
                if (back - u).abs() > ZETA_TOL * u.abs().max(1.0) {
                    return Err(Error::ZetaRoundTrip { u, back });
                }
            }
        }
        Ok(field)
    }

    /// Central difference of psi with the stencil kept inside the interval.
    fn psi_derivative_fd(&self, u: f64, h: f64) -> Result<f64> {
        let iv = self.interval;
        let h = h.min(0.25 * iv.width());
        let c = u.clamp(iv.lo + h, iv.hi - h);
        let plus = self.psi(c + h)?;
        let minus = self.psi(c - h)?;
        let d = (plus - minus) / (2.0 * h);
        if c == u {
            return Ok(d);
        }
        // Shifted stencil: correct to first order with phi' at the centre.
        Ok(d + (u - c) * self.dphi(c)?)
    }

    pub fn phi(&self, u: f64) -> Result<f64> {
        Ok(self.phi.eval_scalar(u)?)
    }

    /// Derivative of `phi`, computed symbolically at construction.
    pub fn dphi(&self, u: f64) -> Result<f64> {
        Ok(self.dphi.eval_scalar(u)?)
    }

    pub fn psi(&self, u: f64) -> Result<f64> {
        Ok(self.psi.eval_scalar(u)?)
    }

    pub fn phi_expr(&self) -> &Expr {
        &self.phi
    }

    pub fn psi_expr(&self) -> &Expr {
        &self.psi
    }

    pub fn zeta_expr(&self) -> Option<&Expr> {
        self.zeta.as_ref()
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// `psi(interval)` as `(min, max)`.
    pub fn psi_range(&self) -> (f64, f64) {
        self.psi_range
    }

    /// Same field with `psi` replaced by `psi + shift` (and `zeta` adjusted).
    pub fn shifted(&self, shift: f64) -> Self {
        let psi = self.psi.clone() + Expr::num(shift);
        let zeta = self
            .zeta
            .as_ref()
            .map(|z| z.substitute(Var::U, &(Expr::var(Var::U) - Expr::num(shift))));
        Self {
            phi: self.phi.clone(),
            dphi: self.dphi.clone(),
            psi,
            zeta,
            interval: self.interval,
            psi_range: (self.psi_range.0 + shift, self.psi_range.1 + shift),
        }
    }

    /// Solves `psi(u) = target` on the interval. Uses `zeta` when present and
    /// accurate, otherwise a bisection-safeguarded secant search.
    pub fn psi_inverse(&self, target: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::NonFinite(format!("psi_inverse target {target}")));
        }
        let (lo, hi) = self.psi_range;
        let slack = INVERSE_TOL * target.abs().max(1.0);
        if target < lo - slack || target > hi + slack {
            return Err(Error::OutOfRange { target, lo, hi });
        }
        let tol = INVERSE_TOL * target.abs().max(1.0);
        if let Some(zeta) = &self.zeta {
            if let Ok(u) = zeta.eval_scalar(target) {
                if matches!(self.psi(u), Ok(p) if (p - target).abs() <= tol) {
                    return Ok(u);
                }
            }
        }
        self.bracketed_inverse(target, tol)
    }

    fn bracketed_inverse(&self, target: f64, tol: f64) -> Result<f64> {
        let g = |u: f64| self.psi(u).map(|p| p - target);
        let (mut a, mut b) = (self.interval.lo, self.interval.hi);
        let (mut ga, mut gb) = (g(a)?, g(b)?);
        if ga.abs() <= tol {
            return Ok(a);
        }
        if gb.abs() <= tol {
            return Ok(b);
        }
        if ga.signum() == gb.signum() {
            // Target sits within the rounding slack of an endpoint.
            return Ok(if ga.abs() < gb.abs() { a } else { b });
        }
        let mut best = if ga.abs() < gb.abs() { (a, ga) } else { (b, gb) };
        // Illinois variant of false position: the retained endpoint's value
        // is halved when the same side is kept twice, and any candidate that
        // leaves the bracket is replaced by the midpoint.
        let mut side = 0i8;
        for _ in 0..ROOT_MAX_ITER {
            let secant = (a * gb - b * ga) / (gb - ga);
            let x = if secant > a && secant < b {
                secant
            } else {
                0.5 * (a + b)
            };
            let gx = g(x)?;
            if gx.abs() < best.1.abs() {
                best = (x, gx);
            }
            if gx.abs() <= tol {
                return Ok(x);
            }
            if gx.signum() == gb.signum() {
                b = x;
                gb = gx;
                if side == -1 {
                    ga *= 0.5;
                }
                side = -1;
            } else {
                a = x;
                ga = gx;
                if side == 1 {
                    gb *= 0.5;
                }
                side = 1;
            }
            if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                return Ok(best.0);
            }
        }
        Err(Error::NoConvergence { target })
    }
}
