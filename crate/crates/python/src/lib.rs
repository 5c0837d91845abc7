//! Python bindings: model loading, inference, exact marginals and certificates.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use presheaf_mp::bp::{bp_run, BpOptions, Init};
use presheaf_mp::energy::{bethe_free_energy, criticality_residual};
use presheaf_mp::io;
use presheaf_mp::mp::{mp_run, MpOptions};
use presheaf_mp::oracle;
use presheaf_mp::presheaf::DEFAULT_SEARCH_CAP;
use presheaf_mp::{Error, FieldBundle};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A loaded and validated model.
#[pyclass(name = "Model", module = "presheaf_mp", frozen)]
struct PyModel {
    inner: io::Model,
}

impl PyModel {
    fn bundle_dict<'py>(&self, py: Python<'py>, b: &FieldBundle) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (a, name) in self.inner.poset().names().iter().enumerate() {
            d.set_item(name, b.get(a).to_vec())?;
        }
        Ok(d)
    }

    fn bundle_from(&self, beliefs: &Bound<'_, PyDict>) -> PyResult<FieldBundle> {
        let p = self.inner.poset();
        let mut rows = Vec::with_capacity(p.len());
        for (a, name) in p.names().iter().enumerate() {
            let row: Vec<f64> = beliefs
                .get_item(name)?
                .ok_or_else(|| PyValueError::new_err(format!("missing beliefs for `{name}`")))?
                .extract()?;
            if row.len() != self.inner.presheaf.size(a) {
                return Err(PyValueError::new_err(format!(
                    "`{name}` has {} states, got {} values",
                    self.inner.presheaf.size(a),
                    row.len()
                )));
            }
            rows.push(row);
        }
        Ok(FieldBundle(rows))
    }
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: io::load_model(path.as_ref()).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: io::parse_model(text).map_err(py_err)?,
        })
    }

    /// Poset elements in declaration order.
    #[getter]
    fn elements(&self) -> Vec<String> {
        self.inner.poset().names().to_vec()
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.presheaf.sizes().to_vec()
    }

    /// Overcounting numbers `c(a)` keyed by element.
    fn overcounting<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (name, c) in self.inner.poset().names().iter().zip(self.inner.poset().overcount()) {
            d.set_item(name, *c)?;
        }
        Ok(d)
    }

    /// Canonical explicit JSON form.
    fn to_json(&self) -> String {
        io::to_pretty(&io::canonical_model_json(&self.inner))
    }

    /// Runs `"bp"` or `"mp"`; returns `(beliefs, converged, iterations)`.
    #[pyo3(signature = (algo, damping = 0.5, tol = 1e-10, max_iters = None, seed = None))]
    fn infer<'py>(
        &self,
        py: Python<'py>,
        algo: &str,
        damping: f64,
        tol: f64,
        max_iters: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<(Bound<'py, PyDict>, bool, usize)> {
        let m = &self.inner;
        let init = seed.map_or(Init::Ones, Init::Random);
        let (beliefs, converged, iters) = match algo {
            "bp" => {
                let opts = BpOptions {
                    max_iters: max_iters.unwrap_or(1000),
                    tol,
                    damping,
                    init,
                };
                let run = bp_run(&m.presheaf, &m.hamiltonians, &opts).map_err(py_err)?;
                (run.beliefs, run.converged, run.state.iteration)
            }
            "mp" => {
                let opts = MpOptions {
                    max_iters: max_iters.unwrap_or(10_000),
                    tol,
                    damping,
                    init,
                    ..MpOptions::default()
                };
                let run = mp_run(&m.presheaf, &m.hamiltonians, &m.weights_or_ones(), &opts).map_err(py_err)?;
                (run.beliefs, run.converged, run.iterations)
            }
            other => return Err(PyValueError::new_err(format!("unknown algorithm `{other}`"))),
        };
        Ok((self.bundle_dict(py, &beliefs)?, converged, iters))
    }

    /// Exact marginals by enumeration.
    fn exact<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.inner;
        let marg = match &m.graphical {
            Some(spec) => {
                let joint = oracle::exact_joint_hamiltonians(spec, &m.presheaf, &m.hamiltonians).map_err(py_err)?;
                oracle::exact_marginals(spec, &joint)
            }
            None => {
                oracle::section_marginals(&m.presheaf, &m.hamiltonians, DEFAULT_SEARCH_CAP)
                    .map_err(py_err)?
                    .0
            }
        };
        self.bundle_dict(py, &marg)
    }

    /// `(r_section, r_critical)` of a beliefs mapping.
    fn criticality(&self, beliefs: &Bound<'_, PyDict>) -> PyResult<(f64, f64)> {
        let q = self.bundle_from(beliefs)?;
        let c = criticality_residual(&self.inner.presheaf, &self.inner.hamiltonians, &q).map_err(py_err)?;
        Ok((c.section, c.critical))
    }

    fn bethe_free_energy(&self, beliefs: &Bound<'_, PyDict>) -> PyResult<f64> {
        let q = self.bundle_from(beliefs)?;
        bethe_free_energy(&self.inner.presheaf, &self.inner.hamiltonians, &q).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Model(elements={})", self.inner.poset().len())
    }
}

/// Intertwining residual for a transformation file (`theorem` 1 or 3).
#[pyfunction]
#[pyo3(signature = (transform, theorem = 1, trials = 100, seed = 0))]
fn check_intertwine(transform: &str, theorem: u32, trials: usize, seed: u64) -> PyResult<f64> {
    let file = io::load_transform_file(transform.as_ref()).map_err(py_err)?;
    let (Some(src), Some(tgt)) = (&file.source, &file.target) else {
        return Err(PyValueError::new_err("the transform must name its source and target"));
    };
    let src = io::load_model(src).map_err(py_err)?;
    let tgt = io::load_model(tgt).map_err(py_err)?;
    let phi = file.build(&src.presheaf, &tgt.presheaf).map_err(py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match theorem {
        1 => phi.check_theorem1(&src.hamiltonians, &src.weights_or_ones(), &tgt.weights_or_ones(), trials, &mut rng),
        3 => phi.check_theorem3(&src.hamiltonians, trials, &mut rng),
        other => return Err(PyValueError::new_err(format!("theorem must be 1 or 3, got {other}"))),
    }
    .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "presheaf_mp")]
fn presheaf_mp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(check_intertwine, m)?)?;
    Ok(())
}
