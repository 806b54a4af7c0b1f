use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use finsler_forge::cli::config::PointSpec;
use finsler_forge::cli::{self, expr, CliError, Command, RunConfig, RunOptions};
use finsler_forge::cosmo::{self, HubbleInit, HubbleState, SolitonParams};
use finsler_forge::dconn::{dconnection, ConnOptions, ConnectionKind};
use finsler_forge::dcurv::{curvature_pack, CurvOptions};
use finsler_forge::finsler_core::{hessian_metric as hessian_of, FinslerFunction};
use finsler_forge::jetcalc::Field;
use finsler_forge::nholon::DMetric;

create_exception!(finsler_forge_py, ForgeError, PyException, "Base class of every finsler-forge error.");
create_exception!(finsler_forge_py, ParseError, ForgeError);
create_exception!(finsler_forge_py, ModelError, ForgeError);
create_exception!(finsler_forge_py, NumericError, ForgeError);

fn to_py(e: impl Into<CliError>) -> PyErr {
    let e = e.into();
    let msg = e.to_string();
    match e {
        CliError::Parse { .. } | CliError::Input(_) => ParseError::new_err(msg),
        CliError::Model(_) => ModelError::new_err(msg),
        CliError::Numeric(_) => NumericError::new_err(msg),
        CliError::Io(_) | CliError::Csv(_) => ForgeError::new_err(msg),
    }
}

fn parse_expr(src: &str, vars: &[String]) -> PyResult<Field> {
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    expr::parse_field(src, &names).map_err(|e| ParseError::new_err(e.to_string()))
}

/// Scalar expression over named variables, differentiated exactly.
#[pyclass(frozen)]
struct Expression {
    source: String,
    vars: Vec<String>,
    field: Field,
}

#[pymethods]
impl Expression {
    #[new]
    fn new(source: &str, vars: Vec<String>) -> PyResult<Self> {
        let field = parse_expr(source, &vars)?;
        Ok(Expression { source: source.to_string(), vars, field })
    }

    #[getter]
    fn vars(&self) -> Vec<String> {
        self.vars.clone()
    }

    fn value(&self, point: Vec<f64>) -> PyResult<f64> {
        self.field.value(&point).map_err(to_py)
    }

    fn gradient(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.field.taylor(&point, 1).map_err(to_py)?.gradient())
    }

    fn hessian(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.field.taylor(&point, 2).map_err(to_py)?.hessian())
    }

    /// Mixed partial derivative; `orders[i]` is the order in variable `i`.
    fn derivative(&self, point: Vec<f64>, orders: Vec<u8>) -> PyResult<f64> {
        if orders.len() != self.vars.len() {
            return Err(ParseError::new_err(format!("expected {} orders", self.vars.len())));
        }
        let total = orders.iter().map(|&k| k as usize).sum();
        Ok(self.field.taylor(&point, total).map_err(to_py)?.derivative(&orders))
    }

    fn __repr__(&self) -> String {
        format!("Expression({:?}, {:?})", self.source, self.vars)
    }
}

/// Metric d-tensor built from the `[model]` table of a run configuration.
#[pyclass(frozen)]
struct Model {
    config: RunConfig,
    metric: DMetric,
    coords: Vec<String>,
    horizontal: usize,
}

fn kind_of(name: &str) -> PyResult<ConnectionKind> {
    name.parse().map_err(to_py)
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn from_toml(src: &str) -> PyResult<Self> {
        let config = RunConfig::parse(src, "<string>").map_err(to_py)?;
        let built = config.model().and_then(|m| m.build()).map_err(to_py)?;
        let horizontal = built.metric.layout().n;
        Ok(Model { metric: built.metric, coords: built.coords, horizontal, config })
    }

    #[getter]
    fn coords(&self) -> Vec<String> {
        self.coords.clone()
    }

    #[getter]
    fn horizontal(&self) -> usize {
        self.horizontal
    }

    /// Coordinate components of the full metric at `point`.
    fn metric(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = self.metric.full_metric(&point, 0).map_err(to_py)?;
        Ok(m.iter().map(|row| row.iter().map(|t| t.value()).collect()).collect())
    }

    /// Coefficients `L_h, L_v, C_h, C_v` of a d-connection in the adapted frame.
    #[pyo3(signature = (point, kind = "canonical"))]
    fn connection<'py>(&self, py: Python<'py>, point: Vec<f64>, kind: &str) -> PyResult<Bound<'py, PyDict>> {
        let c = dconnection(kind_of(kind)?, &self.metric, &point, ConnOptions::default()).map_err(to_py)?.values();
        let d = PyDict::new(py);
        d.set_item("L_h", c.lh)?;
        d.set_item("L_v", c.lv)?;
        d.set_item("C_h", c.ch)?;
        d.set_item("C_v", c.cv)?;
        Ok(d)
    }

    /// Ricci d-tensor, Einstein d-tensor and the scalar curvatures at `point`.
    #[pyo3(signature = (point, kind = "canonical"))]
    fn curvature<'py>(&self, py: Python<'py>, point: Vec<f64>, kind: &str) -> PyResult<Bound<'py, PyDict>> {
        let cp = curvature_pack(&self.metric, kind_of(kind)?, ConnOptions::default(), CurvOptions::default(), &point)
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("scalar", cp.einstein.scalar)?;
        d.set_item("h_scalar", cp.einstein.h_scalar)?;
        d.set_item("v_scalar", cp.einstein.v_scalar)?;
        d.set_item("ricci", cp.ricci.full())?;
        d.set_item("einstein", cp.einstein.einstein)?;
        Ok(d)
    }

    /// Largest residual of each field equation, as `{equation: (max, argmax)}`.
    #[pyo3(signature = (points = None))]
    fn verify<'py>(&self, py: Python<'py>, points: Option<Vec<Vec<f64>>>) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = self.config.clone();
        if let Some(points) = points {
            cfg.points = Some(PointSpec::List { points });
        }
        let (report, _) = cli::residual_report(&cfg).map_err(to_py)?;
        let d = PyDict::new(py);
        for e in report.equations {
            d.set_item(e.id, (e.max_abs, e.argmax))?;
        }
        Ok(d)
    }
}

/// Hessian `g_ab = ½ ∂²F²/∂y^a∂y^b` of a Finsler function given as an expression.
#[pyfunction]
fn hessian_metric(f2: &str, coords: Vec<String>, base: usize, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    if base == 0 || coords.len() <= base {
        return Err(ParseError::new_err("coords must list base then fiber coordinates"));
    }
    let field = parse_expr(f2, &coords)?;
    let f = FinslerFunction::new(base, coords.len() - base, field).map_err(to_py)?;
    hessian_of(&f, &point).map_err(to_py)
}

#[pyfunction]
fn hubble_rhs(hh: f64, vh: f64) -> (f64, f64) {
    cosmo::hubble_rhs(HubbleState { hh, vh })
}

#[pyfunction]
fn gamma_rhs(gamma: f64, vh: f64) -> PyResult<f64> {
    cosmo::gamma_rhs(gamma, vh).map_err(to_py)
}

#[pyfunction]
fn critical_thresholds<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let t = cosmo::critical_thresholds();
    let d = PyDict::new(py);
    d.set_item("hplus", t.hplus)?;
    d.set_item("hminus", t.hminus)?;
    d.set_item("hatt", t.hatt)?;
    d.set_item("hrep", t.hrep)?;
    Ok(d)
}

/// Integrated regime of an initial rate fraction: `(label, final fraction, printed labels)`.
#[pyfunction]
fn classify_regime(gamma0: f64) -> PyResult<(String, f64, Vec<String>)> {
    let r = cosmo::classify_regime(gamma0).map_err(to_py)?;
    let printed = r.literal.iter().map(|l| l.label().to_string()).collect();
    Ok((r.regime.label().to_string(), r.gamma_end, printed))
}

/// Integrates the rate equations; returns the sample columns and the blow-up time, if any.
#[pyfunction]
#[pyo3(signature = (hh, vh, t1, dt, t0 = 0.0, ha = 1.0, va = 1.0, rho0 = 1.0, h_omega = 0.0, v_omega = 0.0))]
#[allow(clippy::too_many_arguments)]
fn evolve<'py>(
    py: Python<'py>,
    hh: f64,
    vh: f64,
    t1: f64,
    dt: f64,
    t0: f64,
    ha: f64,
    va: f64,
    rho0: f64,
    h_omega: f64,
    v_omega: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let init = HubbleInit { ha, va, rho0, h_omega, v_omega, ..HubbleInit::new(hh, vh) };
    let traj = cosmo::integrate_trajectory(&init, (t0, t1), dt).map_err(to_py)?;
    let d = PyDict::new(py);
    for (k, name) in cosmo::Sample::HEADER.iter().enumerate() {
        let column: Vec<f64> = traj.samples.iter().map(|s| s.row()[k]).collect();
        d.set_item(*name, column)?;
    }
    d.set_item("blowup", traj.blowup)?;
    Ok(d)
}

/// Line soliton of the KP equation: `(omega, residual)`.
#[pyfunction]
fn kp_line_soliton(kappa: f64, l: f64, eps_sign: f64) -> PyResult<(f64, f64)> {
    let s = cosmo::kp_line_soliton(&SolitonParams::new(kappa, l, eps_sign)).map_err(to_py)?;
    Ok((s.params.omega, s.residual))
}

/// Runs a CLI command on a config file: `(exit code, written files, summary)`.
#[pyfunction]
#[pyo3(signature = (command, config, out = PathBuf::from("."), threads = None, tolerance = None))]
fn run(
    command: &str,
    config: PathBuf,
    out: PathBuf,
    threads: Option<usize>,
    tolerance: Option<f64>,
) -> PyResult<(i32, Vec<PathBuf>, String)> {
    let command: Command = command.parse().map_err(to_py)?;
    let src = std::fs::read_to_string(&config).map_err(|e| to_py(CliError::Io(e)))?;
    let cfg = RunConfig::parse(&src, &config.display().to_string()).map_err(to_py)?;
    let opts = RunOptions { threads, tolerance, ..RunOptions::new(command, out) };
    let o = cli::run(&cfg, &opts).map_err(to_py)?;
    Ok((o.exit, o.files, o.summary))
}

#[pymodule]
fn finsler_forge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ForgeError", py.get_type::<ForgeError>())?;
    m.add("ParseError", py.get_type::<ParseError>())?;
    m.add("ModelError", py.get_type::<ModelError>())?;
    m.add("NumericError", py.get_type::<NumericError>())?;
    m.add_class::<Expression>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(hessian_metric, m)?)?;
    m.add_function(wrap_pyfunction!(hubble_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(critical_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(classify_regime, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(kp_line_soliton, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
