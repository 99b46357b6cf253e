use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use emdict::bench::{self, KeyDist, Mix, Selection, VerifyOptions, WorkloadSpec};
use emdict::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::BadParameters(m) => PyValueError::new_err(m),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// The hashing-based external-memory dictionary on a simulated paged memory.
#[pyclass(name = "Dictionary", unsendable)]
struct PyDictionary {
    inner: emdict::Dictionary,
}

#[pymethods]
impl PyDictionary {
    #[new]
    #[pyo3(signature = (n_max = 1 << 18, page_words = 64, cache_words = 1 << 16, lam = 16, t_min = None, seed = 0))]
    fn new(n_max: u64, page_words: usize, cache_words: u64, lam: u64, t_min: Option<u64>, seed: u64) -> PyResult<Self> {
        let params = emdict::DictParams {
            n_max,
            page_words,
            cache_words,
            lambda: lam,
            t_min,
            seed,
            ..emdict::DictParams::default()
        };
        Ok(PyDictionary {
            inner: emdict::Dictionary::new(params).map_err(to_py)?,
        })
    }

    fn insert(&mut self, key: u64, value: u64) -> PyResult<()> {
        self.inner.insert(key, value).map_err(to_py)
    }

    fn delete(&mut self, key: u64) -> PyResult<()> {
        self.inner.delete(key).map_err(to_py)
    }

    fn lookup(&self, key: u64) -> PyResult<Option<u64>> {
        self.inner.lookup(key).map_err(to_py)
    }

    fn rebuild(&mut self) -> PyResult<()> {
        self.inner.rebuild().map_err(to_py)
    }

    /// `(reads, writes)` since creation.
    fn io_stats(&self) -> (u64, u64) {
        let s = self.inner.io_stats();
        (s.reads, s.writes)
    }

    fn live_pages(&self) -> usize {
        self.inner.memory().live_pages()
    }

    fn log_len(&self) -> usize {
        self.inner.log_len()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.stats();
        let d = PyDict::new(py);
        d.set_item("inserts", s.inserts)?;
        d.set_item("deletes", s.deletes)?;
        d.set_item("log_len", s.log_len)?;
        d.set_item("rebuilds", s.rebuilds)?;
        d.set_item("distributions", s.tree.distributions)?;
        d.set_item("gadget_rebuilds", s.tree.gadget_rebuilds)?;
        d.set_item("nodes", s.nodes)?;
        d.set_item("depth", s.depth)?;
        d.set_item("live_pages", s.live_pages)?;
        d.set_item("reads", s.io.reads)?;
        d.set_item("writes", s.io.writes)?;
        d.set_item("lookups", s.lookup.lookups)?;
        d.set_item("false_positives", s.lookup.gadget.false_positives)?;
        Ok(d)
    }

    /// Problems found by a full uncounted sweep; empty when consistent.
    fn check_invariants(&self) -> PyResult<Vec<String>> {
        self.inner.check_invariants().map_err(to_py)
    }

    fn save(&mut self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDictionary {
            inner: emdict::Dictionary::load(path).map_err(to_py)?,
        })
    }

    fn __contains__(&self, key: u64) -> PyResult<bool> {
        Ok(self.lookup(key)?.is_some())
    }
}

/// Classic buffer tree over uncompressed pairs.
#[pyclass(name = "BaselineBufferTree", unsendable)]
struct PyBaseline {
    inner: emdict::BaselineBufferTree,
}

#[pymethods]
impl PyBaseline {
    #[new]
    #[pyo3(signature = (fanout = 16, page_words = 64))]
    fn new(fanout: usize, page_words: usize) -> PyResult<Self> {
        Ok(PyBaseline {
            inner: emdict::BaselineBufferTree::new(fanout, page_words, 64).map_err(to_py)?,
        })
    }

    fn insert(&mut self, key: u64, value: u64) -> PyResult<()> {
        self.inner.insert(key, value).map_err(to_py)
    }

    fn delete(&mut self, key: u64) -> PyResult<()> {
        self.inner.delete(key).map_err(to_py)
    }

    fn lookup(&self, key: u64) -> PyResult<Option<u64>> {
        self.inner.lookup(key).map_err(to_py)
    }

    fn io_stats(&self) -> (u64, u64) {
        let s = self.inner.io_stats();
        (s.reads, s.writes)
    }

    fn height(&self) -> u32 {
        self.inner.height()
    }
}

#[pyfunction]
fn predict_costs(n: u64, page_words: u64, cache_words: u64, lam: u64) -> PyResult<(f64, f64)> {
    emdict::dictionary::predict_costs(n, page_words, cache_words, lam).map_err(to_py)
}

#[pyfunction]
fn t_min_for_lambda(lam: u64) -> u64 {
    emdict::dictionary::t_min_for_lambda(lam)
}

fn spec(n: u64, ops: u64, seed: u64, lam: u64, mix: &str, keys: &str) -> PyResult<WorkloadSpec> {
    Ok(WorkloadSpec {
        n_max: n,
        ops,
        seed,
        lambda: lam,
        mix: mix.parse::<Mix>().map_err(to_py)?,
        keys: keys.parse::<KeyDist>().map_err(to_py)?,
        ..WorkloadSpec::default()
    })
}

/// Lockstep check of dictionary, baseline and oracle. Returns `None` on
/// success, otherwise a description of the first disagreement.
#[pyfunction]
#[pyo3(signature = (n = 1 << 18, ops = 100_000, seed = 1, lam = 16, mix = "45:10:45", structure = "both"))]
fn verify(n: u64, ops: u64, seed: u64, lam: u64, mix: &str, structure: &str) -> PyResult<Option<String>> {
    let opts = VerifyOptions {
        selection: structure.parse::<Selection>().map_err(to_py)?,
        ..VerifyOptions::default()
    };
    let r = bench::verify(&spec(n, ops, seed, lam, mix, "u2n")?, &opts).map_err(to_py)?;
    Ok(r.disagreement.map(|d| d.to_string()))
}

/// Sweep CSV as a string.
#[pyfunction]
#[pyo3(signature = (lambdas, n = 1 << 18, ops = 100_000, seed = 1, mix = "50:0:50", keys = "u64", structure = "both"))]
fn sweep(lambdas: Vec<u64>, n: u64, ops: u64, seed: u64, mix: &str, keys: &str, structure: &str) -> PyResult<String> {
    let first = *lambdas
        .first()
        .ok_or_else(|| PyValueError::new_err("empty lambda list"))?;
    let base = spec(n, ops, seed, first, mix, keys)?;
    let rows = bench::sweep(&base, &lambdas, structure.parse().map_err(to_py)?).map_err(to_py)?;
    let mut out = Vec::new();
    bench::write_csv(&rows, &mut out).map_err(to_py)?;
    String::from_utf8(out).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pyemdict(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyBaseline>()?;
    m.add_function(wrap_pyfunction!(predict_costs, m)?)?;
    m.add_function(wrap_pyfunction!(t_min_for_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
