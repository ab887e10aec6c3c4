//! Python bindings: scenario loading/running plus a few of the numerical
//! primitives (spline basis evaluation, Greville abscissae, section
//! properties) for scripting and cross-checking.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dirbeam::kinematics::DirectorMode;
use dirbeam::scenario::{self, RunOptions};
use dirbeam::section::{self, CrossSection};
use dirbeam::splines::KnotVector;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A scenario document; construct from JSON or a bundled example name.
#[pyclass]
struct Scenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Scenario {
            inner: scenario::parse_scenario(text).map_err(value_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (name, case=None))]
    fn bundled(name: &str, case: Option<&str>) -> PyResult<Self> {
        Ok(Scenario {
            inner: scenario::bundled(name, case).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn set_steps(&mut self, steps: usize) {
        match &mut self.inner.scheme {
            scenario::SchemeSpec::Dynamic { steps: n, .. } => *n = steps,
            scenario::SchemeSpec::QuasiStatic { phases } => {
                for ph in phases {
                    ph.steps = steps;
                }
            }
        }
    }

    fn set_director_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.geometry.director_mode = match mode {
            "discrete" | "D-disc" => DirectorMode::Discrete,
            "continuous" | "D-cont" => DirectorMode::Continuous,
            other => return Err(PyValueError::new_err(format!("unknown mode {other}"))),
        };
        Ok(())
    }

    /// Runs the scenario; returns a summary dict. Output files are written
    /// only when `out_dir` is given.
    #[pyo3(signature = (out_dir=None))]
    fn run(&self, py: Python<'_>, out_dir: Option<String>) -> PyResult<Py<PyAny>> {
        let opts = RunOptions {
            out_dir: out_dir.map(Into::into),
            ..Default::default()
        };
        let result = scenario::run(&self.inner, &opts).map_err(runtime_err)?;
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("name", &result.report.name)?;
        dict.set_item("steps", result.report.steps_completed)?;
        dict.set_item("iterations", result.report.total_iterations)?;
        dict.set_item("failure", result.report.failure.clone())?;
        dict.set_item("final_strain_energy", result.report.final_strain_energy)?;
        dict.set_item("final_total_energy", result.report.final_total_energy)?;
        let energy: Vec<f64> = result.diagnostics.iter().map(|d| d.strain_energy).collect();
        dict.set_item("strain_energy_history", energy)?;
        let total: Vec<f64> = result.diagnostics.iter().map(|d| d.total_energy).collect();
        dict.set_item("total_energy_history", total)?;
        dict.set_item("consistency_defects", result.consistency.clone())?;
        dict.set_item("reaction_moments", result.reaction_moments.clone())?;
        dict.set_item("manifest", result.report.manifest.clone())?;
        Ok(dict.into())
    }
}

/// Non-zero B-spline basis values and derivatives at `xi`.
///
/// Returns `(first_index, values)` where `values[k][j]` is the k-th
/// derivative of basis function `first_index + j`.
#[pyfunction]
#[pyo3(signature = (knots, degree, xi, n_derivs=0))]
fn eval_basis(
    knots: Vec<f64>,
    degree: usize,
    xi: f64,
    n_derivs: usize,
) -> PyResult<(usize, Vec<Vec<f64>>)> {
    let kv = KnotVector::new(knots, degree).map_err(value_err)?;
    let b = kv.eval_basis(xi, n_derivs).map_err(value_err)?;
    Ok((b.first, b.values))
}

/// Greville abscissae of an open knot vector.
#[pyfunction]
fn greville(knots: Vec<f64>, degree: usize) -> PyResult<Vec<f64>> {
    KnotVector::new(knots, degree)
        .and_then(|kv| kv.greville())
        .map_err(value_err)
}

/// Torsion stiffness factor of a solid rectangular section.
#[pyfunction]
fn torsion_factor(width: f64, height: f64) -> PyResult<f64> {
    let cs = CrossSection::new(width, height, 1.0).map_err(value_err)?;
    Ok(section::roark_torsion_k(&cs))
}

/// Dimensions of the incompatible strain basis for the given maximum degrees
/// (None disables a family): returns `([d1, d2, d3, d4], d_total)`.
#[pyfunction]
#[pyo3(signature = (width, height, m_in_plane=None, m_in_plane_shear=None, m_axial=None, m_transverse_shear=None))]
fn eas_dimensions(
    width: f64,
    height: f64,
    m_in_plane: Option<usize>,
    m_in_plane_shear: Option<usize>,
    m_axial: Option<usize>,
    m_transverse_shear: Option<usize>,
) -> PyResult<(Vec<usize>, usize)> {
    let cs = CrossSection::new(width, height, 1.0).map_err(value_err)?;
    let basis = section::build_eas_basis(
        &cs,
        &section::EasConfig {
            m_in_plane,
            m_in_plane_shear,
            m_axial,
            m_transverse_shear,
        },
    )
    .map_err(value_err)?;
    Ok((basis.dims.to_vec(), basis.d_a))
}

/// Bundled example catalog: list of (name, summary, cases).
#[pyfunction]
fn list_examples() -> Vec<(String, String, Vec<String>)> {
    scenario::catalog()
        .into_iter()
        .map(|e| {
            (
                e.name.to_string(),
                e.summary.to_string(),
                e.cases.iter().map(|c| c.to_string()).collect(),
            )
        })
        .collect()
}

#[pymodule]
fn dirbeam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(eval_basis, m)?)?;
    m.add_function(wrap_pyfunction!(greville, m)?)?;
    m.add_function(wrap_pyfunction!(torsion_factor, m)?)?;
    m.add_function(wrap_pyfunction!(eas_dimensions, m)?)?;
    m.add_function(wrap_pyfunction!(list_examples, m)?)?;
    Ok(())
}
