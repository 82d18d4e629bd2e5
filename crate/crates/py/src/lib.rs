//! Python module `ccm`.

use ccm_core::config::RunConfig;
use ccm_core::controller::{self, FeedbackContext};
use ccm_core::document::{certificate_from_json, certificate_to_json};
use ccm_core::geometry::{self, GeodesicOptions, MetricField};
use ccm_core::simulate::{self as sim, Reference, SimOptions};
use ccm_core::synthesis::lti::lti_gcc_riccati;
use ccm_core::synthesis::{self, CcmCertificate, Domain, Mode, SynthesisConfig, SynthesisError};
use ccm_core::ControlAffineSystem;
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(ccm, InfeasibleError, PyException, "No certificate exists on the grid.");
create_exception!(ccm, VerificationError, PyException, "A grid solution failed dense verification.");

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn synthesis_err(e: SynthesisError) -> PyErr {
    match e {
        SynthesisError::Infeasible(_) | SynthesisError::EmptyBasis | SynthesisError::Sdp(_) => {
            InfeasibleError::new_err(e.to_string())
        }
        SynthesisError::VerificationFailed { .. } => VerificationError::new_err(e.to_string()),
        SynthesisError::InvalidConfig(_) => value_err(e),
    }
}

fn matrix(rows: &[Vec<f64>], name: &str) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err(format!("{name} rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn parse_mode(s: &str) -> PyResult<Mode> {
    match s {
        "stabilize" => Ok(Mode::Stabilize),
        "exponential" => Ok(Mode::Exponential),
        "guaranteed_cost" => Ok(Mode::GuaranteedCost),
        _ => Err(PyValueError::new_err(format!(
            "unknown mode {s:?}; expected stabilize, exponential or guaranteed_cost"
        ))),
    }
}

/// Control-affine system `ẋ = f(x) + Bu` with polynomial drift.
#[pyclass(module = "ccm", frozen)]
pub struct System {
    inner: ControlAffineSystem,
}

#[pymethods]
impl System {
    #[new]
    fn new(f: Vec<String>, b: Vec<Vec<f64>>) -> PyResult<Self> {
        let refs: Vec<&str> = f.iter().map(String::as_str).collect();
        let inner = ControlAffineSystem::from_strings(&refs, matrix(&b, "B")?).map_err(value_err)?;
        Ok(System { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.drift_at(&x).map_err(value_err)?.as_slice().to_vec())
    }

    fn dynamics(&self, x: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.eval_dynamics(&x, &u).map_err(value_err)?.as_slice().to_vec())
    }

    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.jacobian().a_at(&x).map_err(value_err)?))
    }

    fn __repr__(&self) -> String {
        let f: Vec<String> = (0..self.inner.n()).map(|i| self.inner.drift().get(i, 0).to_string()).collect();
        format!("System(f={f:?}, m={})", self.inner.m())
    }
}

/// A synthesized (or loaded) metric certificate together with its system.
#[pyclass(module = "ccm", frozen)]
pub struct Certificate {
    sys: ControlAffineSystem,
    inner: CcmCertificate,
}

impl Certificate {
    fn metric_field(&self) -> PyResult<MetricField> {
        MetricField::from_certificate(&self.inner).map_err(value_err)
    }

    fn context(&self) -> PyResult<FeedbackContext> {
        FeedbackContext::new(self.sys.clone(), self.inner.clone()).map_err(value_err)
    }
}

#[pymethods]
impl Certificate {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let (sys, inner) = certificate_from_json(text).map_err(value_err)?;
        Ok(Certificate { sys, inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| value_err(format!("{path}: {e}")))?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> String {
        certificate_to_json(&self.sys, &self.inner)
    }

    #[getter]
    fn system(&self) -> System {
        System { inner: self.sys.clone() }
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.as_str()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn alpha1(&self) -> f64 {
        self.inner.alpha1
    }

    #[getter]
    fn alpha2(&self) -> f64 {
        self.inner.alpha2
    }

    #[getter]
    fn is_constant(&self) -> bool {
        self.inner.is_constant()
    }

    /// Dual metric `W(x)`.
    fn w_at(&self, x: Vec<f64>) -> Vec<Vec<f64>> {
        rows(&self.inner.w_at(&x))
    }

    /// Metric `M(x) = W(x)⁻¹`.
    fn metric_at(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.metric_field()?.metric_at(&x).map_err(value_err)?))
    }

    fn rho_at(&self, x: Vec<f64>) -> f64 {
        self.inner.rho_at(&x)
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(n={}, mode={}, lambda={}, constant={})",
            self.inner.n(),
            self.inner.mode.as_str(),
            self.inner.lambda,
            self.inner.is_constant()
        )
    }
}

/// Synthesizes a certificate on the box `[lower, upper]`.
#[pyfunction]
#[pyo3(signature = (
    system, lower, upper, *, mode = "stabilize", lambda_ = 0.0, basis_degree = 2, grid = 9,
    alpha1 = 0.1, alpha2 = 10.0, q = None, r = None, block_diagonal = None
))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    py: Python<'_>,
    system: &System,
    lower: Vec<f64>,
    upper: Vec<f64>,
    mode: &str,
    lambda_: f64,
    basis_degree: u32,
    grid: usize,
    alpha1: f64,
    alpha2: f64,
    q: Option<Vec<Vec<f64>>>,
    r: Option<Vec<Vec<f64>>>,
    block_diagonal: Option<Vec<usize>>,
) -> PyResult<Certificate> {
    let mut cfg = SynthesisConfig::new(Domain::new(lower, upper).map_err(value_err)?);
    cfg.mode = parse_mode(mode)?;
    cfg.lambda = lambda_;
    cfg.basis_degree = basis_degree;
    cfg.grid = grid;
    cfg.alpha1 = alpha1;
    cfg.alpha2 = alpha2;
    cfg.q = q.as_deref().map(|m| matrix(m, "Q")).transpose()?;
    cfg.r = r.as_deref().map(|m| matrix(m, "R")).transpose()?;
    cfg.block_diagonal = block_diagonal;
    let sys = system.inner.clone();
    let inner = py.detach(|| synthesis::synthesize(&sys, &cfg)).map_err(synthesis_err)?;
    Ok(Certificate { sys, inner })
}

/// Synthesizes from a scenario config document (JSON text).
#[pyfunction]
fn synthesize_config(py: Python<'_>, config_json: &str) -> PyResult<Certificate> {
    let cfg = RunConfig::from_json(config_json).map_err(value_err)?;
    let sys = cfg.system().map_err(value_err)?;
    let scfg = cfg.synthesis_config().map_err(value_err)?;
    let inner = py.detach(|| synthesis::synthesize(&sys, &scfg)).map_err(synthesis_err)?;
    Ok(Certificate { sys, inner })
}

/// Dense re-verification; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (cert, samples = 10_000, seed = 0))]
fn verify<'py>(py: Python<'py>, cert: &Certificate, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    if samples == 0 {
        return Err(PyValueError::new_err("samples must be positive"));
    }
    let rep = py.detach(|| synthesis::verify_certificate_seeded(&cert.sys, &cert.inner, samples, seed));
    let d = PyDict::new(py);
    d.set_item("num_samples", rep.num_samples)?;
    d.set_item("worst_margin_contraction", rep.worst_margin_contraction)?;
    d.set_item("worst_margin_bounds", rep.worst_margin_bounds)?;
    d.set_item("worst_point", rep.worst_point)?;
    d.set_item("pass", rep.pass)?;
    Ok(d)
}

/// Minimizing path from `x1` to `x2` under the certificate's metric.
#[pyfunction]
#[pyo3(signature = (cert, x1, x2, segments = 32))]
fn geodesic<'py>(
    py: Python<'py>,
    cert: &Certificate,
    x1: Vec<f64>,
    x2: Vec<f64>,
    segments: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mf = cert.metric_field()?;
    let opts = GeodesicOptions {
        segments,
        ..Default::default()
    };
    let g = geometry::geodesic(&x1, &x2, &mf, &opts).map_err(value_err)?;
    let path: Vec<Vec<f64>> = g.path.points().iter().map(|p| p.as_slice().to_vec()).collect();
    let d = PyDict::new(py);
    d.set_item("path", path)?;
    d.set_item("energy", g.energy)?;
    d.set_item("length", g.length)?;
    d.set_item("iterations", g.iterations)?;
    d.set_item("converged", g.converged)?;
    Ok(d)
}

#[pyfunction]
fn riemann_distance(cert: &Certificate, x1: Vec<f64>, x2: Vec<f64>) -> PyResult<f64> {
    geometry::riemann_distance(&x1, &x2, &cert.metric_field()?, &GeodesicOptions::default()).map_err(value_err)
}

/// Tracking input `u = u⋆ + ∫ K(γ) γ_s ds` at state `x`.
#[pyfunction]
fn feedback(cert: &Certificate, x_star: Vec<f64>, u_star: Vec<f64>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    let out = cert.context()?.feedback(&x_star, &u_star, &x).map_err(value_err)?;
    Ok(out.u.as_slice().to_vec())
}

/// Guaranteed-cost bound for a run starting at `x0` against a reference
/// starting at `x_star`.
#[pyfunction]
fn cost_bound(cert: &Certificate, x0: Vec<f64>, x_star: Vec<f64>) -> PyResult<f64> {
    controller::cost_bound(&cert.context()?, &x0, &x_star).map_err(value_err)
}

/// Closed-loop RK4 run with geodesic feedback towards the equilibrium
/// `(x_star, u_star)` (default: the origin with zero input).
#[pyfunction]
#[pyo3(signature = (cert, x0, t_final, dt = 1e-3, x_star = None, u_star = None))]
fn simulate<'py>(
    py: Python<'py>,
    cert: &Certificate,
    x0: Vec<f64>,
    t_final: f64,
    dt: f64,
    x_star: Option<Vec<f64>>,
    u_star: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let ctx = cert.context()?;
    let reference = Reference::Equilibrium {
        x: x_star.unwrap_or_else(|| vec![0.0; cert.sys.n()]),
        u: u_star.unwrap_or_else(|| vec![0.0; cert.sys.m()]),
    };
    let mut opts = SimOptions::new(t_final, dt);
    opts.domain = Some(cert.inner.domain.clone());
    let r = py
        .detach(|| sim::simulate_closed_loop(&cert.sys, &ctx, &reference, &x0, &opts))
        .map_err(value_err)?;
    let vecs = |v: &[DVector<f64>]| -> Vec<Vec<f64>> { v.iter().map(|x| x.as_slice().to_vec()).collect() };
    let d = PyDict::new(py);
    d.set_item("times", r.times.clone())?;
    d.set_item("states", vecs(&r.states))?;
    d.set_item("controls", vecs(&r.controls))?;
    d.set_item("tracking_error", r.tracking_error.clone())?;
    d.set_item("blew_up", r.flags.blew_up)?;
    d.set_item("left_domain", r.flags.left_domain)?;
    d.set_item("degraded", r.flags.degraded)?;
    Ok(d)
}

/// Stabilizing solution `M` of the LQR Riccati equation.
#[pyfunction]
fn lqr_riccati(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, q: Vec<Vec<f64>>, r: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let sol = lti_gcc_riccati(&matrix(&a, "A")?, &matrix(&b, "B")?, &matrix(&q, "Q")?, &matrix(&r, "R")?)
        .map_err(value_err)?;
    Ok(rows(&sol.m))
}

/// JSON text of a bundled scenario config.
#[pyfunction]
fn example_config(name: &str) -> PyResult<String> {
    ccm_core::bundled::example_config(name)
        .map(|c| c.to_json())
        .ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown example {name:?}; available: {}",
                ccm_core::bundled::EXAMPLE_NAMES.join(", ")
            ))
        })
}

#[pymodule]
fn ccm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_class::<Certificate>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("VerificationError", m.py().get_type::<VerificationError>())?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic, m)?)?;
    m.add_function(wrap_pyfunction!(riemann_distance, m)?)?;
    m.add_function(wrap_pyfunction!(feedback, m)?)?;
    m.add_function(wrap_pyfunction!(cost_bound, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(lqr_riccati, m)?)?;
    m.add_function(wrap_pyfunction!(example_config, m)?)?;
    Ok(())
}
