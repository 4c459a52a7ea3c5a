//! Python bindings: transforms, gain synthesis, the potential field and
//! scenario runs. Complex numbers cross the boundary as Python `complex`,
//! matrices as lists of rows.

use formation_core::linalg::{C64, CMatrix, CVector};
use formation_core::potential::{self, PotentialParams};
use formation_core::scenario::{self, RunSummary, ScenarioConfig};
use formation_core::shape::{self, Direction, JacobiScaling, TransformPair, WeightMatrix};
use formation_core::stabilizer::{self, SearchPolicy};
use formation_core::FormationError;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(formation_lab, FormationLabError, PyValueError);

fn py_err(e: FormationError) -> PyErr {
    FormationLabError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<C64>]) -> PyResult<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn from_matrix(m: &CMatrix) -> Vec<Vec<C64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn to_vector(v: Vec<C64>) -> CVector {
    CVector::from_vec(v)
}

fn policy(seed_eigenvalue: Option<f64>) -> SearchPolicy {
    let mut p = SearchPolicy::default();
    if let Some(s) = seed_eigenvalue {
        p.seed_eigenvalue = s;
    }
    p
}

/// Invertible shape transformation with its inverse.
#[pyclass(name = "Transform", module = "formation_lab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTransform {
    inner: TransformPair,
}

#[pymethods]
impl PyTransform {
    #[new]
    fn new(rows: Vec<Vec<C64>>) -> PyResult<Self> {
        let inner = TransformPair::new(to_matrix(&rows)?).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Jacobi coordinates for the given masses. `scaling` is
    /// "root_reduced_mass" (default) or "reduced_mass".
    #[staticmethod]
    #[pyo3(signature = (masses, scaling = "root_reduced_mass"))]
    fn jacobi(masses: Vec<f64>, scaling: &str) -> PyResult<Self> {
        let scaling = match scaling {
            "root_reduced_mass" => JacobiScaling::RootReducedMass,
            "reduced_mass" => JacobiScaling::ReducedMass,
            other => return Err(PyValueError::new_err(format!("unknown scaling {other:?}"))),
        };
        let agents = shape::AgentConfig::new(masses).map_err(py_err)?;
        let inner = shape::build_jacobi_scaled(&agents, scaling).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// The fixed six-agent transformation used by the hexagon presets.
    #[staticmethod]
    fn hexagon6() -> Self {
        Self {
            inner: shape::hexagon_phi6(),
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn forward(&self) -> Vec<Vec<C64>> {
        from_matrix(self.inner.forward())
    }

    #[getter]
    fn inverse(&self) -> Vec<Vec<C64>> {
        from_matrix(self.inner.inverse())
    }

    /// Leading principal minors of the inverse.
    #[getter]
    fn minors(&self) -> Vec<C64> {
        self.inner.minors().to_vec()
    }

    fn is_stabilizable(&self) -> bool {
        self.inner.is_stabilizable()
    }

    /// Left-multiply by diag(weights).
    fn weighted(&self, weights: Vec<C64>) -> PyResult<Self> {
        let w = WeightMatrix::new(weights).map_err(py_err)?;
        let inner = shape::apply_weight(&self.inner, &w).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// ξ = Φz
    fn to_shape(&self, z: Vec<C64>) -> PyResult<Vec<C64>> {
        let v = self.inner.map_points(&to_vector(z), Direction::Forward).map_err(py_err)?;
        Ok(v.iter().copied().collect())
    }

    /// z = Φ⁻¹ξ
    fn to_positions(&self, xi: Vec<C64>) -> PyResult<Vec<C64>> {
        let v = self.inner.map_points(&to_vector(xi), Direction::Inverse).map_err(py_err)?;
        Ok(v.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Transform(n={})", self.inner.n())
    }
}

/// Diagonal gains placing spec(D·Φ⁻¹) in the open right half-plane.
#[pyfunction]
#[pyo3(signature = (transform, pivot = false, seed_eigenvalue = None))]
fn stabilize_single<'py>(
    py: Python<'py>,
    transform: &PyTransform,
    pivot: bool,
    seed_eigenvalue: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let phi_inv = transform.inner.inverse();
    let p = policy(seed_eigenvalue);
    let r = if pivot {
        stabilizer::stabilize_single_pivoted(phi_inv, &p)
    } else {
        stabilizer::stabilize_single(phi_inv, &p)
    }
    .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("d", r.d)?;
    out.set_item("eigenvalues", r.achieved_eigs)?;
    out.set_item("margin", r.margin)?;
    out.set_item("permutation", r.permutation)?;
    Ok(out)
}

/// Double-integrator gains D₁ and D₂ = γD₁ with a Hurwitz block system.
#[pyfunction]
#[pyo3(signature = (transform, gamma = 1.0, pivot = false, seed_eigenvalue = None))]
fn stabilize_double<'py>(
    py: Python<'py>,
    transform: &PyTransform,
    gamma: f64,
    pivot: bool,
    seed_eigenvalue: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let phi_inv = transform.inner.inverse();
    let p = policy(seed_eigenvalue);
    let r = if pivot {
        stabilizer::stabilize_double_pivoted(phi_inv, &p, gamma)
    } else {
        stabilizer::stabilize_double(phi_inv, &p, gamma)
    }
    .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("d1", r.d1)?;
    out.set_item("d2", r.d2)?;
    out.set_item("gamma", r.gamma)?;
    out.set_item("sigma", r.sigma)?;
    out.set_item("block_eigenvalues", r.block_eigs)?;
    out.set_item("margin", r.margin)?;
    out.set_item("permutation", r.permutation)?;
    Ok(out)
}

/// Whether every eigenvalue of diag(d)·Φ⁻¹ has positive real part, and
/// the smallest real part.
#[pyfunction]
fn verify_gains(d: Vec<C64>, transform: &PyTransform) -> PyResult<(bool, f64)> {
    stabilizer::verify_half_plane(&d, transform.inner.inverse(), stabilizer::HalfPlane::Right)
        .map_err(py_err)
}

fn params(detection_radius: f64, avoidance_radius: f64) -> PyResult<PotentialParams> {
    PotentialParams::new(detection_radius, avoidance_radius).map_err(py_err)
}

#[pyfunction]
fn pair_potential(zi: C64, zj: C64, detection_radius: f64, avoidance_radius: f64) -> PyResult<f64> {
    potential::pair_potential(zi, zj, &params(detection_radius, avoidance_radius)?).map_err(py_err)
}

#[pyfunction]
fn total_potential(z: Vec<C64>, detection_radius: f64, avoidance_radius: f64) -> PyResult<f64> {
    potential::total_potential(&to_vector(z), &params(detection_radius, avoidance_radius)?)
        .map_err(py_err)
}

/// Matrix of potential P_z as a list of rows.
#[pyfunction]
fn potential_matrix(
    z: Vec<C64>,
    detection_radius: f64,
    avoidance_radius: f64,
) -> PyResult<Vec<Vec<C64>>> {
    let pz = potential::potential_matrix(&to_vector(z), &params(detection_radius, avoidance_radius)?)
        .map_err(py_err)?;
    Ok(from_matrix(pz.entries()))
}

/// Avoidance input −P_z·z.
#[pyfunction]
fn avoidance_control(
    z: Vec<C64>,
    detection_radius: f64,
    avoidance_radius: f64,
) -> PyResult<Vec<C64>> {
    let z = to_vector(z);
    let pz = potential::potential_matrix(&z, &params(detection_radius, avoidance_radius)?)
        .map_err(py_err)?;
    Ok(pz.gradient(&z).iter().map(|g| -g).collect())
}

/// A resolved scenario: preset or JSON config with gains synthesized.
#[pyclass(name = "Scenario", module = "formation_lab", frozen)]
struct PyScenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let cfg = ScenarioConfig::preset(name).ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown preset {name:?} (presets: {})",
                scenario::PRESETS.join(", ")
            ))
        })?;
        Self::resolve(&cfg)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::resolve(&ScenarioConfig::from_json(text).map_err(py_err)?)
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        scenario::PRESETS.to_vec()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.spec.transform.n()
    }

    #[getter]
    fn transform(&self) -> PyTransform {
        PyTransform {
            inner: self.inner.spec.transform.clone(),
        }
    }

    /// Eigen-report as JSON.
    fn eigen_report(&self) -> String {
        self.inner.report.to_json()
    }

    /// Integrate the closed loop. Returns the sampled series, the summary
    /// JSON and the error message when the run stopped early.
    fn simulate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let (log, error) = py.detach(|| match self.inner.simulate() {
            Ok(log) => (log, None),
            Err(f) => (f.partial, Some(f.error)),
        });
        let n = self.n();
        let mut csv = Vec::new();
        scenario::write_csv(&log, n, &mut csv)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let summary = RunSummary::new(&self.inner, &log, error.as_ref());
        let out = PyDict::new(py);
        out.set_item("t", log.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
        out.set_item(
            "z",
            log.samples
                .iter()
                .map(|s| s.z.iter().copied().collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )?;
        out.set_item("xi_e_norm", log.samples.iter().map(|s| s.xi_e_norm).collect::<Vec<_>>())?;
        out.set_item("min_dist", log.samples.iter().map(|s| s.min_dist).collect::<Vec<_>>())?;
        out.set_item("csv", String::from_utf8_lossy(&csv).into_owned())?;
        out.set_item("summary", summary.to_json())?;
        out.set_item("error", error.map(|e| e.to_string()))?;
        Ok(out)
    }

    /// Run the invariant checks. Returns (pass, report JSON).
    fn check(&self, py: Python<'_>) -> (bool, String) {
        let report = py.detach(|| self.inner.check());
        (report.pass(), report.to_json())
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, n={})", self.inner.name, self.n())
    }
}

impl PyScenario {
    fn resolve(cfg: &ScenarioConfig) -> PyResult<Self> {
        let inner = scenario::Scenario::resolve(cfg).map_err(py_err)?;
        Ok(Self { inner })
    }
}

#[pymodule]
fn formation_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FormationLabError", m.py().get_type::<FormationLabError>())?;
    m.add_class::<PyTransform>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(stabilize_single, m)?)?;
    m.add_function(wrap_pyfunction!(stabilize_double, m)?)?;
    m.add_function(wrap_pyfunction!(verify_gains, m)?)?;
    m.add_function(wrap_pyfunction!(pair_potential, m)?)?;
    m.add_function(wrap_pyfunction!(total_potential, m)?)?;
    m.add_function(wrap_pyfunction!(potential_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(avoidance_control, m)?)?;
    Ok(())
}
