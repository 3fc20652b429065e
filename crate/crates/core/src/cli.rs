//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad input (parse, domain or
//! precondition errors).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::casimir;
use crate::darboux::{CanonicalReport, DarbouxChart, JacobianMode};
use crate::dynamics::{self, HamiltonianField, Method, Trajectory};
use crate::error::Error;
use crate::expr::{parse, Expr};
use crate::family::{Axis, KappaMatrix, PoissonFamilySpec};
use crate::scalar_fields::{DomainBox, ScalarField1D};
use crate::systems;
use crate::verification::{self, DerivativeScheme, ExprMatrixField, VerificationReport};
use crate::Point;

pub const SEED_ENV: &str = "POISSON3D_SEED";
const DEFAULT_SEED: u64 = 42;
/// `||J·∇C||` must stay below this multiple of `1 + |J|·|∇C|`.
const ANNIHILATION_TOL: f64 = 1e-9;
pub const CSV_HEADER: &str = "t,tau,x1,x2,x3,H,C";

#[derive(Debug, Parser)]
#[command(name = "poisson3d", version, about = "Three-dimensional Poisson structures: verification, Casimirs, Darboux charts and dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the Jacobi identity on sampled domain points.
    Verify {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Defaults to $POISSON3D_SEED, then 42.
        #[arg(long)]
        seed: Option<u64>,
        /// analytic or fd.
        #[arg(long, default_value = "analytic")]
        scheme: String,
    },
    /// Casimir value, gradient and annihilation residual at a point.
    Casimir {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        k: usize,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Build a Darboux chart and check it.
    Darboux {
        #[command(flatten)]
        system: SystemArgs,
        /// Casimir index; the best-conditioned one when omitted.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        check_samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// A point in the original coordinates to map through the chart.
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        /// Differentiate the forward map by central differences.
        #[arg(long)]
        fd_jacobian: bool,
    },
    /// Integrate dx/dt = J·∇H and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        /// End of the integration clock (τ in reduced mode).
        #[arg(long)]
        t_end: f64,
        /// Step of the integration clock (τ in reduced mode).
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value = "rk4")]
        method: String,
        #[arg(long, allow_hyphen_values = true)]
        hamiltonian: Option<String>,
        /// Integrate the canonical flow in Darboux coordinates.
        #[arg(long)]
        reduced: bool,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the built-in system names.
    List,
}

#[derive(Debug, Args)]
struct SystemArgs {
    /// Built-in system: halphen, circle-maps or euler-top.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    system: Option<String>,
    /// JSON system-spec file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Moments of inertia for euler-top, as I1,I2,I3.
    #[arg(long = "I", value_name = "I1,I2,I3")]
    inertia: Option<String>,
    /// Domain box for a built-in system, as lo1,hi1,lo2,hi2,lo3,hi3.
    #[arg(long = "box", value_name = "BOUNDS", allow_hyphen_values = true)]
    bounds: Option<String>,
    /// Domain predicate for a built-in system; points where it is
    /// (numerically) zero are excluded.
    #[arg(long, allow_hyphen_values = true)]
    predicate: Option<String>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<crate::expr::ExprError> for CliError {
    fn from(e: crate::expr::ExprError) -> Self {
        Self::input(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs one command line (program name first) and returns the exit code.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    match cmd {
        Command::Verify {
            system,
            samples,
            tol,
            seed,
            scheme,
        } => {
            let scheme: DerivativeScheme = scheme.parse()?;
            let seed = resolve_seed(seed)?;
            let loaded = load_system(&system)?;
            let (name, report) = match &loaded {
                Loaded::Family { spec, .. } => (
                    spec.name().to_string(),
                    verification::verify_structure(spec, spec.domain(), samples, tol, seed, scheme)?,
                ),
                Loaded::Raw { name, field, domain } => (
                    name.clone(),
                    verification::verify_structure(field, domain, samples, tol, seed, scheme)?,
                ),
            };
            #[derive(Serialize)]
            struct Out<'a> {
                system: &'a str,
                #[serde(flatten)]
                report: &'a VerificationReport,
            }
            emit_json(out, &Out { system: &name, report: &report })?;
            Ok(if report.verdict.passed() { 0 } else { 1 })
        }
        Command::Casimir { system, k, point } => {
            let spec = load_family(&system)?.0;
            let k = Axis::from_number(k)?;
            let x = parse_point(&point, "--point")?;
            let value = casimir::casimir_value(&spec, k, &x)?;
            let gradient = casimir::casimir_gradient(&spec, k, &x)?;
            let ann = casimir::annihilation_residual(&spec, k, &x)?;
            let pass = ann.residual <= ANNIHILATION_TOL * ann.scale;
            #[derive(Serialize)]
            struct Out<'a> {
                system: &'a str,
                k: usize,
                point: Point,
                value: f64,
                gradient: [f64; 3],
                annihilation_residual: f64,
                annihilation_scale: f64,
                pass: bool,
            }
            emit_json(
                out,
                &Out {
                    system: spec.name(),
                    k: k.number(),
                    point: x,
                    value,
                    gradient,
                    annihilation_residual: ann.residual,
                    annihilation_scale: ann.scale,
                    pass,
                },
            )?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Darboux {
            system,
            k,
            check_samples,
            seed,
            point,
            fd_jacobian,
        } => {
            let spec = load_family(&system)?.0;
            let k = k.map(Axis::from_number).transpose()?;
            let seed = resolve_seed(seed)?;
            let mode = if fd_jacobian {
                JacobianMode::FiniteDifference
            } else {
                JacobianMode::Analytic
            };
            let chart = DarbouxChart::build(&spec, k)?;
            let check = chart.canonical_check(check_samples, seed, mode)?;
            let point_report = point
                .map(|p| -> CliResult<PointReport> {
                    let x = parse_point(&p, "--point")?;
                    spec.domain().check(&x)?;
                    let y = chart.forward_map(&x)?;
                    let x_back = chart.inverse_map(&y)?;
                    let factor = chart.reparam_factor(&y)?;
                    let pushforward = chart.pushforward_matrix(&y, mode)?.entries();
                    Ok(PointReport {
                        x,
                        y,
                        x_back,
                        factor,
                        pushforward,
                    })
                })
                .transpose()?;
            let (i, j) = chart.pair();
            #[derive(Serialize)]
            struct Out<'a> {
                system: &'a str,
                k: usize,
                pair: [usize; 2],
                sign_branch: Option<f64>,
                min_abs_denominator: f64,
                denominator_sign_constant: bool,
                check: &'a CanonicalReport,
                #[serde(skip_serializing_if = "Option::is_none")]
                point: Option<PointReport>,
            }
            emit_json(
                out,
                &Out {
                    system: spec.name(),
                    k: chart.k().number(),
                    pair: [i.number(), j.number()],
                    sign_branch: chart.sign_branch(),
                    min_abs_denominator: chart.selector().min_abs_denominator,
                    denominator_sign_constant: chart.selector().sign_constant,
                    check: &check,
                    point: point_report,
                },
            )?;
            Ok(if check.verdict.passed() { 0 } else { 1 })
        }
        Command::Simulate {
            system,
            x0,
            t_end,
            dt,
            method,
            hamiltonian,
            reduced,
            k,
            out: path,
        } => {
            let (spec, default_h) = load_family(&system)?;
            let method: Method = method.parse()?;
            let x0 = parse_point(&x0, "--x0")?;
            let h_expr = match hamiltonian {
                Some(src) => parse(&src)?,
                None => default_h.ok_or_else(|| {
                    CliError::input("no Hamiltonian: pass --hamiltonian or add one to the spec file")
                })?,
            };
            let h = HamiltonianField::new(h_expr)?;
            let k = k.map(Axis::from_number).transpose()?;
            let traj = if reduced {
                let chart = DarbouxChart::build(&spec, k)?;
                let y0 = chart.forward_map(&x0)?;
                // Pick the τ direction in which t increases.
                let sign = chart.reparam_factor(&y0)?.signum();
                dynamics::integrate_reduced(&chart, &h, &y0, sign * t_end, dt, method)?
            } else {
                let monitor = k.or_else(|| dynamics::default_monitor(&spec, &x0));
                dynamics::integrate(&spec, &h, &x0, t_end, dt, method, monitor)?
            };
            write_csv(&path, &traj)?;
            let drift = dynamics::invariant_drift(&traj)?;
            #[derive(Serialize)]
            struct Out<'a> {
                system: &'a str,
                method: Method,
                reduced: bool,
                casimir_k: Option<usize>,
                samples: usize,
                t_final: f64,
                drift: dynamics::DriftReport,
            }
            emit_json(
                out,
                &Out {
                    system: spec.name(),
                    method,
                    reduced,
                    casimir_k: traj.casimir_k.map(Axis::number),
                    samples: traj.samples.len(),
                    t_final: traj.samples.last().map_or(0.0, |s| s.t),
                    drift,
                },
            )?;
            let _ = err;
            Ok(0)
        }
        Command::List => {
            for name in systems::BUILTIN_NAMES {
                writeln!(out, "{name}").map_err(io_error)?;
            }
            Ok(0)
        }
    }
}

#[derive(Debug, Serialize)]
struct PointReport {
    x: Point,
    y: Point,
    x_back: Point,
    factor: f64,
    pushforward: [f64; 3],
}

fn io_error(e: std::io::Error) -> CliError {
    CliError::input(format!("I/O error: {e}"))
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(e.to_string()))?;
    writeln!(out, "{text}").map_err(io_error)
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn parse_floats(src: &str, what: &str, n: usize) -> CliResult<Vec<f64>> {
    let values: Vec<f64> = src
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::input(format!("{what}: expected {n} comma-separated numbers, got `{src}`")))?;
    if values.len() != n || values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::input(format!(
            "{what}: expected {n} finite comma-separated numbers, got `{src}`"
        )));
    }
    Ok(values)
}

fn parse_point(src: &str, what: &str) -> CliResult<Point> {
    let v = parse_floats(src, what, 3)?;
    Ok([v[0], v[1], v[2]])
}

/// CSV with header `t,tau,x1,x2,x3,H,C`; absent values are empty fields.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let num = |v: f64| format!("{v:.16e}");
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut s = String::with_capacity(64 * (traj.samples.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for p in &traj.samples {
        let row = [
            num(p.t),
            opt(p.tau),
            num(p.x[0]),
            num(p.x[1]),
            num(p.x[2]),
            num(p.h),
            opt(p.c),
        ];
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn write_csv(path: &Path, traj: &Trajectory) -> CliResult<()> {
    fs::write(path, trajectory_csv(traj))
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

enum Loaded {
    Family {
        spec: PoissonFamilySpec,
        hamiltonian: Option<Expr>,
    },
    Raw {
        name: String,
        field: ExprMatrixField,
        domain: DomainBox,
    },
}

fn load_family(args: &SystemArgs) -> CliResult<(PoissonFamilySpec, Option<Expr>)> {
    match load_system(args)? {
        Loaded::Family { spec, hamiltonian } => Ok((spec, hamiltonian)),
        Loaded::Raw { name, .. } => Err(CliError::input(format!(
            "`{name}` defines raw matrix entries; this command needs a family member (eta, axes, kappa)"
        ))),
    }
}

fn load_system(args: &SystemArgs) -> CliResult<Loaded> {
    if let Some(path) = &args.spec {
        if args.inertia.is_some() || args.bounds.is_some() || args.predicate.is_some() {
            return Err(CliError::input(
                "--I, --box and --predicate apply to built-in systems; edit the spec file instead",
            ));
        }
        return load_spec_file(path);
    }
    let name = args.system.as_deref().expect("clap enforces --system or --spec");
    let inertia = args
        .inertia
        .as_deref()
        .map(|s| parse_floats(s, "--I", 3).map(|v| [v[0], v[1], v[2]]))
        .transpose()?;
    let domain = match (&args.bounds, &args.predicate) {
        (None, None) => None,
        (bounds, predicate) => {
            let bounds = match bounds {
                Some(b) => parse_bounds(b)?,
                None if name == "euler-top" => [[0.5, 1.5]; 3],
                None => [[0.0, 1.0]; 3],
            };
            let mut domain = DomainBox::from_bounds(bounds)?;
            match predicate {
                Some(p) => domain = domain.with_predicate(parse(p)?)?,
                None if name != "euler-top" => domain = domain.with_predicate(systems::difference_product())?,
                None => {}
            }
            Some(domain)
        }
    };
    let b = systems::builtin(name, inertia, domain)?;
    Ok(Loaded::Family {
        spec: b.spec,
        hamiltonian: Some(b.hamiltonian),
    })
}

fn parse_bounds(src: &str) -> CliResult<[[f64; 2]; 3]> {
    let v = parse_floats(src, "--box", 6)?;
    Ok([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]]])
}

/// JSON system-spec file. Either a family member (`eta`, `axes`, `kappa`)
/// or raw `entries` `[J12, J23, J31]` for verification only.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpecFile {
    pub name: String,
    pub eta: Option<String>,
    pub axes: Option<Vec<AxisSpec>>,
    pub kappa: Option<[f64; 2]>,
    pub entries: Option<[String; 3]>,
    pub domain: DomainSpec,
    pub hamiltonian: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub phi: String,
    pub psi: String,
    pub zeta: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(rename = "box")]
    pub bounds: [[f64; 2]; 3],
    pub predicate: Option<String>,
}

fn load_spec_file(path: &Path) -> CliResult<Loaded> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let file: SystemSpecFile = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut domain = DomainBox::from_bounds(file.domain.bounds)?;
    if let Some(p) = &file.domain.predicate {
        domain = domain.with_predicate(parse(p)?)?;
    }
    let hamiltonian = file.hamiltonian.as_deref().map(parse).transpose()?;

    if let Some(entries) = &file.entries {
        if file.eta.is_some() || file.axes.is_some() || file.kappa.is_some() {
            return Err(CliError::input("`entries` cannot be combined with eta, axes or kappa"));
        }
        let exprs = [parse(&entries[0])?, parse(&entries[1])?, parse(&entries[2])?];
        let field = ExprMatrixField::new(exprs)?.with_symbolic_partials();
        return Ok(Loaded::Raw {
            name: file.name,
            field,
            domain,
        });
    }

    let eta = parse(file.eta.as_deref().ok_or_else(|| CliError::input("missing `eta`"))?)?;
    let axes = file.axes.ok_or_else(|| CliError::input("missing `axes`"))?;
    if axes.len() != 3 {
        return Err(CliError::input(format!("`axes` needs 3 entries, got {}", axes.len())));
    }
    let mut fields = Vec::with_capacity(3);
    for (i, a) in axes.iter().enumerate() {
        let zeta = a.zeta.as_deref().map(parse).transpose()?;
        let field = ScalarField1D::build(parse(&a.phi)?, parse(&a.psi)?, zeta, domain.axis(i))
            .map_err(|e| CliError::input(format!("axis {}: {e}", i + 1)))?;
        fields.push(field);
    }
    let fields: [ScalarField1D; 3] = fields.try_into().expect("three axes");
    let [k12, k23] = file.kappa.unwrap_or([0.0, 0.0]);
    let spec = PoissonFamilySpec::new(file.name, eta, fields, KappaMatrix::new(k12, k23)?, domain)?;
    Ok(Loaded::Family { spec, hamiltonian })
}
