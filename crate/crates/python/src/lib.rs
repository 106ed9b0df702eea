//! Python module `multifrag`.

use std::path::PathBuf;

use multifrag::asymptotics::{biggins_martingale, stationary_distribution};
use multifrag::measures::{bernstein_matrix, examples, intensity_matrix};
use multifrag::paintbox::Paintbox;
use multifrag::rng::{run_replicas, stream};
use multifrag::simulate::{
    simulate_mass_fragmentation, simulate_partition_fragmentation, simulate_tagged as tagged, SimOptions,
    DEFAULT_MASS_FLOOR,
};
use multifrag::specfile::{parse_spec_str, read_spec_file, spec_to_json};
use multifrag::spectral::{self, spectral_data, DEFAULT_THETA_MAX};
use multifrag::{FragmentationSpec, TypedBlockPartition, TypedMassPartition};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(multifrag, SpecError, PyValueError, "Malformed or invalid model.");
create_exception!(multifrag, NumericError, PyArithmeticError, "A numerical routine failed.");
create_exception!(multifrag, SimulationError, PyRuntimeError, "A simulation could not run.");

fn spec_err(e: impl ToString) -> PyErr {
    SpecError::new_err(e.to_string())
}

fn numeric_err(e: impl ToString) -> PyErr {
    NumericError::new_err(e.to_string())
}

fn sim_err(e: impl ToString) -> PyErr {
    SimulationError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A validated fragmentation model.
#[pyclass(name = "Spec", module = "multifrag", frozen)]
struct PySpec {
    inner: FragmentationSpec,
}

#[pymethods]
impl PySpec {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_spec_str(text).map(|inner| Self { inner }).map_err(spec_err)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        read_spec_file(&path).map(|inner| Self { inner }).map_err(spec_err)
    }

    /// Built-in reference models `"a"`, `"b"` and `"c"`.
    #[staticmethod]
    fn example(name: &str) -> PyResult<Self> {
        let inner = match name.to_ascii_lowercase().as_str() {
            "a" => examples::spec_a(),
            "b" => examples::spec_b(),
            "c" => examples::spec_c(),
            other => return Err(PyValueError::new_err(format!("unknown example {other:?}"))),
        };
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        spec_to_json(&self.inner)
    }

    #[getter]
    fn types(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn conservative(&self) -> bool {
        self.inner.is_conservative()
    }

    fn total_rate(&self, ty: usize) -> PyResult<f64> {
        if !(1..=self.inner.k).contains(&ty) {
            return Err(PyValueError::new_err(format!("type {ty} is out of range")));
        }
        Ok(self.inner.total_rate(ty))
    }

    fn intensity_matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        intensity_matrix(&self.inner).map(|m| rows(&m)).map_err(spec_err)
    }

    fn bernstein_matrix(&self, theta: f64) -> PyResult<Vec<Vec<f64>>> {
        bernstein_matrix(&self.inner, theta).map(|m| rows(&m)).map_err(spec_err)
    }

    fn phi(&self, theta: f64) -> PyResult<f64> {
        spectral::phi(&self.inner, theta).map_err(numeric_err)
    }

    /// Perron data at `theta`: `phi`, its two derivatives, and `u`, `v` with
    /// `sum(u) = 1`, `sum(u * v) = 1`.
    fn perron<'py>(&self, py: Python<'py>, theta: f64) -> PyResult<Bound<'py, PyDict>> {
        let sd = spectral_data(&self.inner, theta).map_err(numeric_err)?;
        let d = PyDict::new(py);
        d.set_item("theta", sd.theta)?;
        d.set_item("phi", sd.phi)?;
        d.set_item("phi_d1", sd.phi_d1)?;
        d.set_item("phi_d2", sd.phi_d2)?;
        d.set_item("u", sd.u)?;
        d.set_item("v", sd.v)?;
        Ok(d)
    }

    /// `(theta_bar, phi'(theta_bar), residual)`.
    #[pyo3(signature = (theta_max = DEFAULT_THETA_MAX))]
    fn theta_bar(&self, theta_max: f64) -> PyResult<(f64, f64, f64)> {
        let c = spectral::theta_bar(&self.inner, theta_max).map_err(numeric_err)?;
        Ok((c.theta_bar, c.phi_prime, c.residual))
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        let lambda = intensity_matrix(&self.inner).map_err(spec_err)?;
        stationary_distribution(&lambda).map_err(numeric_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Spec(types={}, conservative={}, atoms={:?})",
            self.inner.k,
            self.inner.is_conservative(),
            self.inner.dislocation.iter().map(Vec::len).collect::<Vec<_>>()
        )
    }
}

#[pyfunction]
fn matrix_exponential(matrix: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    spectral::matrix_exponential(&m, t).map(|e| rows(&e)).map_err(numeric_err)
}

/// One mass path (replica `replica` of `seed`) observed at `times` (default `[t]`).
/// Each snapshot is a dict with `time`, `masses`, `types` and `dust`.
#[pyfunction]
#[pyo3(signature = (spec, t, seed, replica = 0, initial_type = 1, mass_floor = DEFAULT_MASS_FLOOR, times = None))]
#[allow(clippy::too_many_arguments)]
fn simulate_mass<'py>(
    py: Python<'py>,
    spec: &PySpec,
    t: f64,
    seed: u64,
    replica: u64,
    initial_type: usize,
    mass_floor: f64,
    times: Option<Vec<f64>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let opts = SimOptions {
        mass_floor,
        max_fragments: None,
    };
    let path = py
        .detach(|| simulate_mass_fragmentation(&spec.inner, t, initial_type, &opts, &mut stream(seed, replica)))
        .map_err(sim_err)?;
    times
        .unwrap_or_else(|| vec![t])
        .into_iter()
        .map(|time| {
            let snap = path.snapshot(time);
            let d = PyDict::new(py);
            d.set_item("time", time)?;
            d.set_item("masses", snap.fragments.iter().map(|f| f.mass).collect::<Vec<_>>())?;
            d.set_item("types", snap.fragments.iter().map(|f| f.ty).collect::<Vec<_>>())?;
            d.set_item("dust", snap.dust)?;
            Ok(d)
        })
        .collect()
}

/// `(type, position)` of the tagged fragment at `t` for each replica.
#[pyfunction]
#[pyo3(signature = (spec, t, seed, replicas = 1, initial_type = 1))]
fn simulate_tagged(
    py: Python<'_>,
    spec: &PySpec,
    t: f64,
    seed: u64,
    replicas: usize,
    initial_type: usize,
) -> PyResult<Vec<(usize, f64)>> {
    py.detach(|| {
        run_replicas(seed, replicas, |_, rng| tagged(&spec.inner, t, initial_type, rng).map(|p| p.state_at(t)))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(sim_err)
}

fn blocks(pi: &TypedBlockPartition) -> Vec<(Vec<usize>, usize)> {
    pi.blocks().iter().map(|b| (b.elements().to_vec(), b.ty())).collect()
}

/// Blocks `(elements, type)` of the partition of `{1..n}` at time `t`.
#[pyfunction]
#[pyo3(signature = (spec, n, t, seed, replica = 0, initial_type = 1))]
fn simulate_partition(
    spec: &PySpec,
    n: usize,
    t: f64,
    seed: u64,
    replica: u64,
    initial_type: usize,
) -> PyResult<Vec<(Vec<usize>, usize)>> {
    let path = simulate_partition_fragmentation(&spec.inner, n, t, initial_type, &mut stream(seed, replica))
        .map_err(sim_err)?;
    Ok(blocks(&path.state_at(t)))
}

/// Additive martingale at `(theta, t)` for each replica.
#[pyfunction]
#[pyo3(signature = (spec, theta, t, seed, replicas = 1, initial_type = 1, mass_floor = 0.0))]
#[allow(clippy::too_many_arguments)]
fn martingale(
    py: Python<'_>,
    spec: &PySpec,
    theta: f64,
    t: f64,
    seed: u64,
    replicas: usize,
    initial_type: usize,
    mass_floor: f64,
) -> PyResult<Vec<f64>> {
    let sd = spectral_data(&spec.inner, theta).map_err(numeric_err)?;
    let opts = SimOptions {
        mass_floor,
        max_fragments: None,
    };
    py.detach(|| {
        run_replicas(seed, replicas, |_, rng| {
            simulate_mass_fragmentation(&spec.inner, t, initial_type, &opts, rng)
                .map(|path| biggins_martingale(&path.snapshot(t), &sd))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
    })
    .map_err(sim_err)
}

/// Exchangeable typed partition of `{1..n}` painted from `(mass, type)` parts.
#[pyfunction]
fn paintbox(parts: Vec<(f64, usize)>, k: usize, n: usize, seed: u64) -> PyResult<Vec<(Vec<usize>, usize)>> {
    let x = TypedMassPartition::new(parts, k).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(blocks(&Paintbox::new(&x).sample(n, &mut stream(seed, 0))))
}

#[pymodule]
#[pyo3(name = "multifrag")]
fn multifrag_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpec>()?;
    m.add_function(wrap_pyfunction!(matrix_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_mass, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tagged, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_partition, m)?)?;
    m.add_function(wrap_pyfunction!(martingale, m)?)?;
    m.add_function(wrap_pyfunction!(paintbox, m)?)?;
    let py = m.py();
    m.add("SpecError", py.get_type::<SpecError>())?;
    m.add("NumericError", py.get_type::<NumericError>())?;
    m.add("SimulationError", py.get_type::<SimulationError>())?;
    Ok(())
}
