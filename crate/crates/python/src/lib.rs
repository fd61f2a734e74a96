//! Python bindings: measures, topologies, spectra, clouds, estimators and
//! the config runner.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use furstlab_core::entropy;
use furstlab_core::harness::{self, ExperimentConfig};
use furstlab_core::linalg::Matrix;
use furstlab_core::measure::{self, DepthCheck};
use furstlab_core::topology::{self, AdmissibleTopology as Topo, IntervalPartition};
use furstlab_core::walk::{self, Atom, MatrixMeasure as Measure, Mollifier, MollifierKind};
use furstlab_core::Error;

create_exception!(furstlab, FurstlabError, PyException, "Raised by the library; the message starts with the error kind.");

fn err(e: Error) -> PyErr {
    FurstlabError::new_err(format!("{}: {}", e.kind(), e))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(err)
}

fn partition(cuts: Option<Vec<usize>>, d: usize) -> PyResult<IntervalPartition> {
    match cuts {
        Some(c) => IntervalPartition::new(c).map_err(err),
        None => Ok(IntervalPartition::full(d)),
    }
}

/// Finitely supported measure on SL(d, R), optionally mollified.
#[pyclass(name = "MatrixMeasure", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMeasure {
    inner: Measure,
}

#[pymethods]
impl PyMeasure {
    /// `atoms` is a list of `(p, matrix)` pairs; `mollify` optionally
    /// `(kind, epsilon)` with kind "so_ball" or "so_ball_full".
    #[new]
    #[pyo3(signature = (atoms, mollify=None))]
    fn new(atoms: Vec<(f64, Vec<Vec<f64>>)>, mollify: Option<(String, f64)>) -> PyResult<Self> {
        let d = atoms.first().map(|a| a.1.len()).unwrap_or(0);
        let atoms = atoms.into_iter().map(|(p, m)| Ok(Atom { p, m: matrix(m)? })).collect::<PyResult<Vec<_>>>()?;
        let mollify = match mollify {
            None => None,
            Some((k, epsilon)) => {
                let kind = match k.as_str() {
                    "so_ball" => MollifierKind::SoBall,
                    "so_ball_full" => MollifierKind::SoBallFull,
                    _ => return Err(FurstlabError::new_err(format!("unknown mollifier {k}"))),
                };
                Some(Mollifier { kind, epsilon })
            }
        };
        Ok(PyMeasure { inner: Measure::new(d, atoms, mollify).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner: Measure = serde_json::from_str(s).map_err(|e| err(e.into()))?;
        Ok(PyMeasure { inner })
    }

    /// Measure of a bundled preset.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let cfg = ExperimentConfig::preset(name).map_err(err)?;
        let inner = cfg.measure.ok_or_else(|| FurstlabError::new_err("preset has no measure"))?;
        Ok(PyMeasure { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("measure serializes")
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn inverse(&self) -> PyResult<Self> {
        Ok(PyMeasure { inner: self.inner.inverse().map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("MatrixMeasure(d={}, atoms={})", self.inner.d(), self.inner.atoms().len())
    }
}

/// Admissible topology on {1..d}, given by its atoms.
#[pyclass(name = "Topology", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyTopology {
    inner: Topo,
}

#[pymethods]
impl PyTopology {
    #[new]
    fn new(atoms: Vec<Vec<usize>>) -> PyResult<Self> {
        Ok(PyTopology { inner: Topo::from_atoms(atoms.len(), &atoms).map_err(err)? })
    }

    #[staticmethod]
    fn finest(d: usize) -> Self {
        PyTopology { inner: Topo::finest(d) }
    }

    #[staticmethod]
    fn coarsest(d: usize) -> Self {
        PyTopology { inner: Topo::coarsest(d) }
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn atoms(&self) -> Vec<Vec<usize>> {
        self.inner.atoms()
    }

    fn open_sets(&self) -> Vec<Vec<usize>> {
        self.inner.open_sets()
    }

    fn is_finer(&self, other: &PyTopology) -> bool {
        topology::is_finer(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        format!("Topology({})", self.inner)
    }
}

#[pyfunction]
fn enumerate_admissible(d: usize) -> PyResult<Vec<PyTopology>> {
    Ok(topology::enumerate_admissible(d).map_err(err)?.into_iter().map(|inner| PyTopology { inner }).collect())
}

/// Number of one-step arrows among the admissible topologies of {1..d}.
#[pyfunction]
fn count_arrows(d: usize) -> PyResult<usize> {
    Ok(topology::all_arrows(&topology::enumerate_admissible(d).map_err(err)?).len())
}

#[pyfunction]
fn chain_decompose(fine: &PyTopology, coarse: &PyTopology, chi: Vec<f64>) -> PyResult<Vec<PyTopology>> {
    let chain = topology::chain_decompose(&fine.inner, &coarse.inner, &chi).map_err(err)?;
    Ok(chain.into_iter().map(|inner| PyTopology { inner }).collect())
}

#[pyclass(name = "LyapunovSpectrum", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpectrum {
    inner: walk::LyapunovSpectrum,
}

#[pymethods]
impl PySpectrum {
    #[getter]
    fn chi(&self) -> Vec<f64> {
        self.inner.chi.clone()
    }

    #[getter]
    fn stderr(&self) -> Vec<f64> {
        self.inner.stderr.clone()
    }

    fn sum_z(&self) -> f64 {
        self.inner.sum_z()
    }

    fn __repr__(&self) -> String {
        format!("LyapunovSpectrum(chi={:?})", self.inner.chi)
    }
}

#[pyfunction]
fn lyapunov_spectrum(mu: &PyMeasure, steps: usize, seed: u64) -> PySpectrum {
    PySpectrum { inner: walk::lyapunov_spectrum(&mu.inner, steps, seed) }
}

#[pyfunction]
#[pyo3(signature = (spectrum, cuts=None))]
fn furstenberg_bound(spectrum: &PySpectrum, cuts: Option<Vec<usize>>) -> PyResult<f64> {
    Ok(entropy::furstenberg_bound(&spectrum.inner, &partition(cuts, spectrum.inner.d())?))
}

/// Random-walk entropy by exact enumeration; returns `(h, ci)`.
#[pyfunction]
fn rw_entropy(mu: &PyMeasure, n_max: usize) -> PyResult<(f64, f64)> {
    let e = entropy::rw_entropy(&mu.inner, n_max).map_err(err)?;
    Ok((e.h, e.ci))
}

/// Sampled stationary measure on a partial flag variety.
#[pyclass(name = "PointCloud", frozen)]
struct PyCloud {
    inner: measure::PointCloud,
}

#[pymethods]
impl PyCloud {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    /// Record `k` as a row-major frame.
    fn point(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner.points().get(k).map(|m| m.to_rows()).ok_or_else(|| FurstlabError::new_err("index out of range"))
    }

    fn write_binary(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| err(e.into()))?;
        self.inner.write_binary(std::io::BufWriter::new(f)).map_err(err)
    }

    #[staticmethod]
    fn read_binary(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(|e| err(e.into()))?;
        Ok(PyCloud { inner: measure::PointCloud::read_binary(std::io::BufReader::new(f)).map_err(err)? })
    }
}

#[pyfunction]
#[pyo3(signature = (mu, n_points, depth, seed, cuts=None))]
fn sample_stationary_cloud(
    mu: &PyMeasure,
    n_points: usize,
    depth: usize,
    seed: u64,
    cuts: Option<Vec<usize>>,
) -> PyResult<PyCloud> {
    let q = partition(cuts, mu.inner.d())?;
    let inner = measure::sample_stationary_cloud(&mu.inner, &q, n_points, depth, seed, DepthCheck::Auto).map_err(err)?;
    Ok(PyCloud { inner })
}

/// Ball-mass local dimension; returns `(delta, ci)`.
#[pyfunction]
#[pyo3(signature = (cloud, seed, radii=None, n_centers=2000))]
fn local_dimension(cloud: &PyCloud, seed: u64, radii: Option<Vec<f64>>, n_centers: usize) -> PyResult<(f64, f64)> {
    let radii = radii.unwrap_or_else(measure::default_radii);
    let e = measure::local_dimension(&cloud.inner, &radii, n_centers, seed).map_err(err)?;
    Ok((e.delta, e.ci))
}

/// Runs a JSON config (or a preset name); returns `(report_json, exit_code)`.
#[pyfunction]
fn run_config(config: &str) -> PyResult<(String, i32)> {
    let cfg = if config.trim_start().starts_with('{') {
        ExperimentConfig::from_json(config)
    } else {
        ExperimentConfig::preset(config)
    }
    .map_err(err)?;
    let out = harness::run(&cfg);
    Ok((harness::render_report(&out.report), out.code))
}

#[pymodule]
fn furstlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FurstlabError", m.py().get_type::<FurstlabError>())?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyTopology>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyCloud>()?;
    m.add_function(wrap_pyfunction!(enumerate_admissible, m)?)?;
    m.add_function(wrap_pyfunction!(count_arrows, m)?)?;
    m.add_function(wrap_pyfunction!(chain_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(furstenberg_bound, m)?)?;
    m.add_function(wrap_pyfunction!(rw_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(sample_stationary_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(local_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
