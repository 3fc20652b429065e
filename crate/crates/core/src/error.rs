use thiserror::Error;

use crate::expr::ExprError;
use crate::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("primitive mismatch at u = {u}: d(psi)/du = {derivative}, phi = {phi}")]
    PrimitiveMismatch { u: f64, derivative: f64, phi: f64 },

    #[error("{what} vanishes near {at:?}")]
    Vanishing { what: String, at: Vec<f64> },

    #[error("zeta does not invert psi at u = {u}: zeta(psi(u)) = {back}")]
    ZetaRoundTrip { u: f64, back: f64 },

    #[error("target {target} outside psi range [{lo}, {hi}]")]
    OutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("root finder did not converge for target {target}")]
    NoConvergence { target: f64 },

    #[error("axis must be 1, 2 or 3 (got {0})")]
    InvalidAxis(usize),

    #[error("chi requires two distinct axes (got {0} and {0})")]
    RepeatedAxis(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Point),

    #[error("domain is empty after predicate filtering ({accepted} of {draws} draws accepted)")]
    EmptyDomain { accepted: usize, draws: usize },

    #[error("entries {0:?}: exactly two vanish, which no family member allows")]
    RankAlarm([f64; 3]),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Casimir C{k} undefined at {point:?}: |chi| = {denominator:e} is below threshold")]
    UndefinedCasimir {
        k: usize,
        point: Point,
        denominator: f64,
    },

    #[error("chart hypothesis violated for k = {k} at {point:?}: {reason}")]
    HypothesisViolation {
        k: usize,
        point: Point,
        reason: String,
    },

    #[error("inverse map landed on the wrong branch: x{axis} = {value} but sign must be {sign}")]
    BranchMismatch { axis: usize, value: f64, sign: f64 },

    #[error("trajectory left the domain at t = {t}; last valid state {last:?}")]
    DomainExit { t: f64, last: Point },

    #[error("time reparametrization broke down at tau = {tau}, y = {y:?} (factor {factor:e})")]
    ReparamBreakdown { tau: f64, y: Point, factor: f64 },

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
