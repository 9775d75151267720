//! Python bindings. Matrices cross the boundary as lists of rows.

#[pyo3::pymodule(name = "actcomp")]
mod actcomp_module {
    use std::path::Path;

    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;
    use pyo3::types::PyBytes;

    use actcomp::blockwise;
    use actcomp::data::GraphDataset;
    use actcomp::dist;
    use actcomp::gnn::{self, TrainConfig};
    use actcomp::projection::RademacherProjector;
    use actcomp::quant::{self, BinEdges, Boundaries, Grouping, PackedQuantTensor, QuantScheme};
    use actcomp::varopt::{self, BoundaryTable};
    use actcomp::{DenseMatrix, Error, SeededRng};

    fn err(e: Error) -> PyErr {
        match e {
            Error::Io(_) | Error::Diverged { .. } | Error::QuadratureNonConvergence { .. } => {
                PyRuntimeError::new_err(e.to_string())
            }
            _ => PyValueError::new_err(e.to_string()),
        }
    }

    fn matrix(rows: Vec<Vec<f32>>) -> PyResult<DenseMatrix> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        DenseMatrix::from_vec(rows.len(), cols, rows.concat()).map_err(err)
    }

    fn to_rows(m: &DenseMatrix) -> Vec<Vec<f32>> {
        (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
    }

    fn scheme(bits: u8, group_size: Option<usize>, inner_edges: Option<Vec<f64>>) -> PyResult<QuantScheme> {
        let grouping = group_size.map_or(Grouping::PerRow, Grouping::Block);
        let boundaries = inner_edges.map_or(Boundaries::Uniform, Boundaries::Explicit);
        QuantScheme::new(bits, grouping, boundaries).map_err(err)
    }

    fn memory_dict(py: Python<'_>, m: &blockwise::MemoryReport) -> PyResult<Py<PyAny>> {
        let json = serde_json::to_string(m).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(py.import("json")?.call_method1("loads", (json,))?.unbind())
    }

    /// Sub-byte quantised matrix with per-group (zero-point, range).
    #[pyclass(name = "PackedTensor", module = "actcomp")]
    struct PyPackedTensor {
        inner: PackedQuantTensor,
    }

    #[pymethods]
    impl PyPackedTensor {
        #[getter]
        fn shape(&self) -> (usize, usize) {
            self.inner.shape()
        }

        #[getter]
        fn bits(&self) -> u8 {
            self.inner.scheme().bits()
        }

        fn codes(&self) -> PyResult<Vec<u8>> {
            self.inner.codes().map_err(err)
        }

        fn dequantize(&self) -> PyResult<Vec<Vec<f32>>> {
            Ok(to_rows(&self.inner.dequantize().map_err(err)?))
        }

        fn memory_report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
            memory_dict(py, &self.inner.memory_report())
        }

        fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
            PyBytes::new(py, &self.inner.to_bytes())
        }

        #[staticmethod]
        fn from_bytes(data: &[u8]) -> PyResult<Self> {
            Ok(Self {
                inner: PackedQuantTensor::from_bytes(data).map_err(err)?,
            })
        }

        fn __repr__(&self) -> String {
            let (r, c) = self.inner.shape();
            format!("PackedTensor(shape=({r}, {c}), bits={})", self.inner.scheme().bits())
        }
    }

    /// Stochastically rounds `rows` to `bits`-bit codes, per row or per
    /// block of `group_size` values.
    #[pyfunction]
    #[pyo3(signature = (rows, bits, group_size=None, inner_edges=None, seed=42))]
    fn quantize(rows: Vec<Vec<f32>>, bits: u8, group_size: Option<usize>, inner_edges: Option<Vec<f64>>, seed: u64) -> PyResult<PyPackedTensor> {
        let h = matrix(rows)?;
        let s = scheme(bits, group_size, inner_edges)?;
        let inner = quant::quantize(&h, &s, &mut SeededRng::new(seed)).map_err(err)?;
        Ok(PyPackedTensor { inner })
    }

    #[pyfunction]
    #[pyo3(signature = (rows, cols, bits, group_size=None))]
    fn memory_report(py: Python<'_>, rows: usize, cols: usize, bits: u8, group_size: Option<usize>) -> PyResult<Py<PyAny>> {
        memory_dict(py, &blockwise::memory_report(rows, cols, &scheme(bits, group_size, None)?))
    }

    /// `H·R` with a seeded `D × r` Rademacher matrix scaled by `1/√r`.
    #[pyfunction]
    fn project(rows: Vec<Vec<f32>>, r: usize, seed: u64) -> PyResult<Vec<Vec<f32>>> {
        let h = matrix(rows)?;
        let p = RademacherProjector::new(h.cols(), r, seed).map_err(err)?;
        Ok(to_rows(&p.project(&h).map_err(err)?))
    }

    /// `H_proj·Rᵀ` for the matrix that [`project`] used with the same seed.
    #[pyfunction]
    fn recover(rows: Vec<Vec<f32>>, d: usize, seed: u64) -> PyResult<Vec<Vec<f32>>> {
        let h = matrix(rows)?;
        let p = RademacherProjector::new(d, h.cols(), seed).map_err(err)?;
        Ok(to_rows(&p.recover(&h).map_err(err)?))
    }

    /// Clipped normal `CN_[1/D]` on `[0, 2^bits - 1]`.
    #[pyclass(name = "ClippedNormal", module = "actcomp")]
    struct PyClippedNormal {
        inner: dist::ClippedNormal,
    }

    #[pymethods]
    impl PyClippedNormal {
        #[new]
        fn new(bits: u8, d: f64) -> PyResult<Self> {
            Ok(Self {
                inner: dist::ClippedNormal::new(bits, d).map_err(err)?,
            })
        }

        #[getter]
        fn mu(&self) -> f64 {
            self.inner.mu()
        }

        #[getter]
        fn sigma(&self) -> f64 {
            self.inner.sigma()
        }

        fn pdf(&self, x: f64) -> f64 {
            self.inner.pdf(x)
        }

        fn cdf(&self, x: f64) -> f64 {
            self.inner.cdf(x)
        }

        #[pyo3(signature = (n, seed=42))]
        fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
            self.inner.sample(n, &mut SeededRng::new(seed))
        }

        /// `(jsd_uniform, jsd_clipped_normal)` of `values` against the two models.
        fn jsd(&self, values: Vec<f64>) -> PyResult<(f64, f64)> {
            dist::jsd_against_models(values, &self.inner).map_err(err)
        }
    }

    #[pyfunction]
    fn std_normal_quantile(p: f64) -> PyResult<f64> {
        dist::std_normal_quantile(p).map_err(err)
    }

    /// SR variance at `h` for the full edge list `[0, ..., B]`.
    #[pyfunction]
    fn sr_variance(h: f64, edges: Vec<f64>) -> PyResult<f64> {
        Ok(varopt::sr_variance(h, &BinEdges::new(edges).map_err(err)?))
    }

    /// Expected INT2 SR variance under `CN_[1/d]` for edges `[0, alpha, beta, 3]`.
    #[pyfunction]
    fn expected_variance(alpha: f64, beta: f64, d: f64) -> PyResult<f64> {
        let dist = dist::ClippedNormal::new(2, d).map_err(err)?;
        varopt::expected_variance(&BinEdges::int2(alpha, beta).map_err(err)?, &dist).map_err(err)
    }

    /// Freshly optimised `(alpha, beta, expected_variance)` for `CN_[1/d]`.
    #[pyfunction]
    fn optimize_boundaries(d: f64) -> PyResult<(f64, f64, f64)> {
        let dist = dist::ClippedNormal::new(2, d).map_err(err)?;
        let o = varopt::optimize_boundaries(&dist).map_err(err)?;
        Ok((o.alpha, o.beta, o.expected_variance))
    }

    /// Entry of the shipped boundary table.
    #[pyfunction]
    fn boundary_table_entry(d: usize) -> PyResult<(f64, f64, f64)> {
        let e = BoundaryTable::builtin().lookup(d).map_err(err)?;
        Ok((e.alpha, e.beta, e.expected_variance))
    }

    #[pyfunction]
    #[pyo3(signature = (values, alpha, beta, draws=varopt::DEFAULT_DRAWS, seed=42))]
    fn variance_reduction(values: Vec<f64>, alpha: f64, beta: f64, draws: usize, seed: u64) -> PyResult<f64> {
        let edges = BinEdges::int2(alpha, beta).map_err(err)?;
        varopt::variance_reduction(&values, &edges, &mut SeededRng::new(seed), draws).map_err(err)
    }

    /// Trains on a dataset directory (or `"synth200"`) and returns the
    /// report as a JSON string. `config_json` is a JSON object with any of
    /// the keys of the report's `config` section; missing keys use defaults.
    #[pyfunction]
    #[pyo3(signature = (dataset="synth200", config_json=None))]
    fn train(py: Python<'_>, dataset: &str, config_json: Option<&str>) -> PyResult<String> {
        let mut cfg = serde_json::to_value(TrainConfig::default()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        if let Some(s) = config_json {
            let overrides: serde_json::Value = serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?;
            let (Some(base), Some(over)) = (cfg.as_object_mut(), overrides.as_object()) else {
                return Err(PyValueError::new_err("config must be a JSON object"));
            };
            for (k, v) in over {
                base.insert(k.clone(), v.clone());
            }
        }
        let cfg: TrainConfig = serde_json::from_value(cfg).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let path = dataset.to_owned();
        py.detach(move || {
            let ds = GraphDataset::open(Path::new(&path))?;
            gnn::train(&ds, &cfg)?.report.to_json()
        })
        .map_err(err)
    }

    #[pymodule_init]
    fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
        m.add("__version__", env!("CARGO_PKG_VERSION"))
    }
}
