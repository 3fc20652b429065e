//! Poisson dynamics `dx/dt = J(x)·∇H(x)` with fixed-step integrators, and
//! the reduced one-degree-of-freedom flow in Darboux coordinates.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::casimir;
use crate::darboux::{DarbouxChart, FACTOR_TOL};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::family::{Axis, PoissonFamilySpec};
use crate::scalar_fields::fd_step;
use crate::Point;

/// A Hamiltonian `H(x1, x2, x3)` with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianField {
    h: Expr,
    grad: [Expr; 3],
}

impl HamiltonianField {
    /// Gradient by symbolic differentiation.
    pub fn new(h: Expr) -> Result<Self> {
        h.check_variables(&Var::SPATIAL)?;
        let grad = Var::SPATIAL.map(|v| h.differentiate(v));
        Ok(Self { h, grad })
    }

    /// User-supplied gradient; see [`Self::gradient_gap`] for a check.
    pub fn with_gradient(h: Expr, grad: [Expr; 3]) -> Result<Self> {
        for e in std::iter::once(&h).chain(&grad) {
            e.check_variables(&Var::SPATIAL)?;
        }
        Ok(Self { h, grad })
    }

    pub fn expr(&self) -> &Expr {
        &self.h
    }

    pub fn value(&self, x: &Point) -> Result<f64> {
        Ok(self.h.eval_point(*x)?)
    }

    pub fn gradient(&self, x: &Point) -> Result<[f64; 3]> {
        Ok([
            self.grad[0].eval_point(*x)?,
            self.grad[1].eval_point(*x)?,
            self.grad[2].eval_point(*x)?,
        ])
    }

    /// Largest `|grad - fd| / max(1, |grad|)` over the components at `x`.
    pub fn gradient_gap(&self, x: &Point) -> Result<f64> {
        let g = self.gradient(x)?;
        let mut gap = 0.0f64;
        for l in 0..3 {
            let h = fd_step(x[l]);
            let mut p = *x;
            let mut m = *x;
            p[l] += h;
            m[l] -= h;
            let fd = (self.value(&p)? - self.value(&m)?) / (2.0 * h);
            gap = gap.max((g[l] - fd).abs() / g[l].abs().max(1.0));
        }
        Ok(gap)
    }
}

/// Fixed-step explicit integrators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Midpoint,
}

impl Method {
    pub fn order(self) -> u32 {
        match self {
            Method::Rk4 => 4,
            Method::Midpoint => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::Midpoint => "midpoint",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "midpoint" => Ok(Method::Midpoint),
            other => Err(Error::Precondition(format!(
                "unknown method `{other}` (expected rk4 or midpoint)"
            ))),
        }
    }
}

fn axpy(x: &Point, h: f64, k: &Point) -> Point {
    [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2]]
}

/// One step of `method` for `dx/ds = f(x)`.
fn step<F>(f: &F, x: &Point, h: f64, method: Method) -> Result<Point>
where
    F: Fn(&Point) -> Result<Point>,
{
    match method {
        Method::Rk4 => {
            let k1 = f(x)?;
            let k2 = f(&axpy(x, 0.5 * h, &k1))?;
            let k3 = f(&axpy(x, 0.5 * h, &k2))?;
            let k4 = f(&axpy(x, h, &k3))?;
            Ok([0, 1, 2].map(|l| x[l] + h / 6.0 * (k1[l] + 2.0 * k2[l] + 2.0 * k3[l] + k4[l])))
        }
        Method::Midpoint => {
            let k1 = f(x)?;
            let k2 = f(&axpy(x, 0.5 * h, &k1))?;
            Ok(axpy(x, h, &k2))
        }
    }
}

/// `J(x)·∇H(x)` at a domain point.
pub fn hamiltonian_vector_field(spec: &PoissonFamilySpec, h: &HamiltonianField, x: &Point) -> Result<Point> {
    spec.domain().check(x)?;
    raw_field(spec, h, x)
}

fn raw_field(spec: &PoissonFamilySpec, h: &HamiltonianField, x: &Point) -> Result<Point> {
    Ok(spec.evaluate(x)?.apply(&h.gradient(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    /// Reparametrized time; present for reduced runs.
    pub tau: Option<f64>,
    /// State in the original coordinates.
    pub x: Point,
    /// Chart coordinates; present for reduced runs.
    pub y: Option<Point>,
    pub h: f64,
    /// Monitored Casimir value, when one is defined.
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub system: String,
    pub method: Method,
    /// Step in the integration clock (`t` for direct runs, `|dτ|` for
    /// reduced ones).
    pub step: f64,
    pub casimir_k: Option<Axis>,
    pub samples: Vec<TrajectorySample>,
}

/// The `k` whose Casimir denominator `|chi_ij(x)|` is largest at `x`.
pub fn default_monitor(spec: &PoissonFamilySpec, x: &Point) -> Option<Axis> {
    let chi = spec.chis(x).ok()?;
    Axis::ALL
        .into_iter()
        .filter(|&k| casimir::casimir_value(spec, k, x).is_ok())
        .max_by(|a, b| {
            let (ca, cb) = (chi[(a.index() + 1) % 3].abs(), chi[(b.index() + 1) % 3].abs());
            ca.total_cmp(&cb)
        })
}

fn monitored(spec: &PoissonFamilySpec, k: Option<Axis>, x: &Point) -> Option<f64> {
    k.and_then(|k| casimir::casimir_value(spec, k, x).ok())
}

/// Step count and final step length for covering `[0, span]` with steps of
/// `h`; a remainder within rounding of a full step is absorbed.
fn partition(span: f64, h: f64) -> (usize, f64) {
    let ratio = span / h;
    let n = ratio.round();
    if (ratio - n).abs() <= 1e-9 * ratio.max(1.0) {
        (n as usize, h)
    } else {
        let n = ratio.ceil();
        (n as usize, span - (n - 1.0) * h)
    }
}

/// Integrates `dx/dt = J·∇H` from `x0` over `[0, t_end]` with fixed step
/// `dt`, recording `H` and the Casimir `C_k` (if `monitor` is given) at
/// every step. Leaving the domain aborts with [`Error::DomainExit`].
pub fn integrate(
    spec: &PoissonFamilySpec,
    h: &HamiltonianField,
    x0: &Point,
    t_end: f64,
    dt: f64,
    method: Method,
    monitor: Option<Axis>,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be positive (got {dt})")));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::Precondition(format!("t_end must be nonnegative (got {t_end})")));
    }
    spec.domain().check(x0)?;
    let mut samples = vec![TrajectorySample {
        t: 0.0,
        tau: None,
        x: *x0,
        y: None,
        h: h.value(x0)?,
        c: monitored(spec, monitor, x0),
    }];
    let (n, last) = if t_end == 0.0 { (0, 0.0) } else { partition(t_end, dt) };
    let f = |x: &Point| raw_field(spec, h, x);
    let mut x = *x0;
    for s in 0..n {
        let t_prev = s as f64 * dt;
        let hs = if s + 1 == n { last } else { dt };
        let exit = |_| Error::DomainExit { t: t_prev, last: x };
        let next = step(&f, &x, hs, method).map_err(exit)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state at t = {}", t_prev + hs)));
        }
        if !spec.domain().contains(&next) {
            return Err(Error::DomainExit { t: t_prev, last: x });
        }
        x = next;
        let t = if s + 1 == n { t_end } else { (s + 1) as f64 * dt };
        samples.push(TrajectorySample {
            t,
            tau: None,
            x,
            y: None,
            h: h.value(&x)?,
            c: monitored(spec, monitor, &x),
        });
    }
    Ok(Trajectory {
        system: spec.name().to_string(),
        method,
        step: dt,
        casimir_k: monitor,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftReport {
    pub samples: usize,
    pub max_abs_dh: f64,
    pub max_rel_dh: f64,
    pub max_abs_dc: Option<f64>,
    pub max_rel_dc: Option<f64>,
}

/// Largest deviation of `H` and `C` from their initial values; relative
/// versions divide by `max(1, |initial|)`.
pub fn invariant_drift(traj: &Trajectory) -> Result<DriftReport> {
    let first = traj
        .samples
        .first()
        .ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    let mut dh = 0.0f64;
    let mut dc: Option<f64> = first.c.map(|_| 0.0);
    for s in &traj.samples {
        dh = dh.max((s.h - first.h).abs());
        if let (Some(c0), Some(d)) = (first.c, dc.as_mut()) {
            match s.c {
                Some(c) => *d = d.max((c - c0).abs()),
                None => *d = f64::INFINITY,
            }
        }
    }
    Ok(DriftReport {
        samples: traj.samples.len(),
        max_abs_dh: dh,
        max_rel_dh: dh / first.h.abs().max(1.0),
        max_abs_dc: dc,
        max_rel_dc: dc.zip(first.c).map(|(d, c0)| d / c0.abs().max(1.0)),
    })
}

/// Gradient of `H̃(y) = H(x(y))` in the chart coordinates.
fn reduced_gradient(chart: &DarbouxChart, h: &HamiltonianField, y: &Point) -> Result<[f64; 3]> {
    let x = chart.inverse_map(y)?;
    let gx = h.gradient(&x)?;
    let dxk = chart.inverse_gradient_k(y)?;
    let k = chart.k().index();
    let mut g = [0.0; 3];
    for l in 0..3 {
        g[l] = if l == k { 0.0 } else { gx[l] } + gx[k] * dxk[l];
    }
    Ok(g)
}

/// Integrates the canonical flow `dy_i/dτ = ∂H̃/∂y_j`, `dy_j/dτ = -∂H̃/∂y_i`
/// with `y_k` held fixed, from `y0` to the signed `tau_end` in steps of
/// `dtau`. The original time follows from `dt = dτ / J_ij(x(y))` by the
/// trapezoid rule; samples carry both clocks and the state mapped back to
/// `x`. A factor that falls below the threshold or changes sign aborts the
/// run with [`Error::ReparamBreakdown`].
pub fn integrate_reduced(
    chart: &DarbouxChart,
    h: &HamiltonianField,
    y0: &Point,
    tau_end: f64,
    dtau: f64,
    method: Method,
) -> Result<Trajectory> {
    if !(dtau.is_finite() && dtau > 0.0) {
        return Err(Error::Precondition(format!("dtau must be positive (got {dtau})")));
    }
    if !tau_end.is_finite() {
        return Err(Error::NonFinite(format!("tau_end {tau_end}")));
    }
    let spec = chart.spec();
    let (i, j) = chart.pair();
    let (i, j) = (i.index(), j.index());
    let k = chart.k();
    let x0 = chart.inverse_map(y0)?;
    spec.domain().check(&x0)?;

    let factor_at = |y: &Point, tau: f64| -> Result<f64> {
        match chart.reparam_factor(y) {
            Ok(f) => Ok(f),
            Err(Error::HypothesisViolation { .. }) => Err(Error::ReparamBreakdown {
                tau,
                y: *y,
                factor: 0.0,
            }),
            Err(e) => Err(e),
        }
    };
    let field = |y: &Point| -> Result<Point> {
        let g = reduced_gradient(chart, h, y)?;
        let mut v = [0.0; 3];
        v[i] = g[j];
        v[j] = -g[i];
        Ok(v)
    };

    let sign = if tau_end < 0.0 { -1.0 } else { 1.0 };
    let (n, last) = if tau_end == 0.0 {
        (0, 0.0)
    } else {
        partition(tau_end.abs(), dtau)
    };
    let mut y = *y0;
    let mut f_prev = factor_at(&y, 0.0)?;
    let mut t = 0.0;
    let mut samples = vec![TrajectorySample {
        t,
        tau: Some(0.0),
        x: x0,
        y: Some(*y0),
        h: h.value(&x0)?,
        c: monitored(spec, Some(k), &x0),
    }];
    for s in 0..n {
        let tau_prev = sign * s as f64 * dtau;
        let hs = sign * if s + 1 == n { last } else { dtau };
        let last_x = samples.last().expect("nonempty").x;
        let exit = || Error::DomainExit { t, last: last_x };
        let next = step(&field, &y, hs, method).map_err(|_| exit())?;
        let x = chart.inverse_map(&next).map_err(|_| exit())?;
        if !spec.domain().contains(&x) {
            return Err(exit());
        }
        let tau = if s + 1 == n { tau_end } else { sign * (s + 1) as f64 * dtau };
        let f_next = factor_at(&next, tau)?;
        if f_next.abs() <= FACTOR_TOL || f_next.signum() != f_prev.signum() {
            return Err(Error::ReparamBreakdown {
                tau: tau_prev,
                y: next,
                factor: f_next,
            });
        }
        t += 0.5 * hs * (1.0 / f_prev + 1.0 / f_next);
        f_prev = f_next;
        y = next;
        samples.push(TrajectorySample {
            t,
            tau: Some(tau),
            x,
            y: Some(y),
            h: h.value(&x)?,
            c: monitored(spec, Some(k), &x),
        });
    }
    Ok(Trajectory {
        system: spec.name().to_string(),
        method,
        step: dtau,
        casimir_k: Some(k),
        samples,
    })
}

/// State of a direct trajectory at time `t`, by a partial step of `method`
/// from the last sample at or before `t`.
pub fn resample(
    spec: &PoissonFamilySpec,
    h: &HamiltonianField,
    traj: &Trajectory,
    t: f64,
) -> Result<Point> {
    let s = &traj.samples;
    let first = s.first().ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    let last = s.last().expect("nonempty");
    if t < first.t || t > last.t {
        return Err(Error::Precondition(format!(
            "t = {t} outside the trajectory span [{}, {}]",
            first.t, last.t
        )));
    }
    let idx = s.partition_point(|p| p.t <= t).saturating_sub(1);
    let base = &s[idx];
    if base.t == t {
        return Ok(base.x);
    }
    step(&|x: &Point| raw_field(spec, h, x), &base.x, t - base.t, traj.method)
}
