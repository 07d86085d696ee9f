//! Python bindings for the `sskm` crate.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sskm::corpus::{self, CorpusMatrix, Vocabulary};
use sskm::engine::{self, Mode, RunConfig, StopReason};
use sskm::pruneindex::{self, QueryScratch, DEFAULT_LAMBDAS};
use sskm::synth::{self, SyntheticSpec};

fn to_py(e: sskm::Error) -> PyErr {
    match e {
        sskm::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Sparse vector of `(dim, weight)` pairs with sorted, distinct dims.
#[pyclass(name = "SparseVector", module = "pysskm", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySparseVector {
    inner: sskm::SparseVector,
}

#[pymethods]
impl PySparseVector {
    /// Entries may come in any order; zero weights are dropped, repeated dims
    /// are rejected.
    #[new]
    fn new(dims: usize, entries: Vec<(u32, f64)>) -> PyResult<Self> {
        let inner = sskm::SparseVector::from_unsorted(dims, entries).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn indices(&self) -> Vec<u32> {
        self.inner.indices().to_vec()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn items(&self) -> Vec<(u32, f64)> {
        self.inner.iter().collect()
    }

    fn get(&self, dim: u32) -> f64 {
        self.inner.get(dim).unwrap_or(0.0)
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn dot(&self, other: &PySparseVector) -> f64 {
        self.inner.dot(&other.inner)
    }

    fn normalize(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.normalize().map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.nnz()
    }

    fn __eq__(&self, other: &PySparseVector) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "SparseVector(dims={}, entries={:?})",
            self.inner.dims(),
            self.inner.iter().collect::<Vec<_>>()
        )
    }
}

impl From<sskm::SparseVector> for PySparseVector {
    fn from(inner: sskm::SparseVector) -> Self {
        Self { inner }
    }
}

fn unwrap_vectors(vs: &[PyRef<'_, PySparseVector>]) -> Vec<sskm::SparseVector> {
    vs.iter().map(|v| v.inner.clone()).collect()
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    corpus::tokenize(text)
}

/// Unit TF-IDF rows with their document ids.
#[pyclass(name = "Corpus", module = "pysskm", frozen)]
pub struct PyCorpus {
    matrix: CorpusMatrix,
    vocabulary: Option<Vocabulary>,
    dropped: Vec<String>,
}

impl PyCorpus {
    fn plain(matrix: CorpusMatrix) -> Self {
        Self {
            matrix,
            vocabulary: None,
            dropped: Vec::new(),
        }
    }
}

#[pymethods]
impl PyCorpus {
    /// Vectorizes `(id, text)` pairs.
    #[staticmethod]
    #[pyo3(signature = (docs, stop_words=None, max_df=corpus::DEFAULT_MAX_DF))]
    fn from_documents(
        docs: Vec<(String, String)>,
        stop_words: Option<HashSet<String>>,
        max_df: f64,
    ) -> PyResult<Self> {
        let out = corpus::vectorize_corpus(&docs, &stop_words.unwrap_or_default(), max_df)
            .map_err(to_py)?;
        Ok(Self {
            matrix: out.matrix,
            vocabulary: Some(out.vocabulary),
            dropped: out.dropped,
        })
    }

    /// Wraps vectors that are already unit length.
    #[staticmethod]
    #[pyo3(signature = (vectors, doc_ids=None))]
    fn from_vectors(
        vectors: Vec<PyRef<'_, PySparseVector>>,
        doc_ids: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let vectors = unwrap_vectors(&vectors);
        let dims = vectors.iter().map(|v| v.dims()).max().unwrap_or(0);
        let ids = doc_ids.unwrap_or_else(|| (0..vectors.len()).map(|i| i.to_string()).collect());
        let matrix = CorpusMatrix::new(vectors, ids, dims).map_err(to_py)?;
        Ok(Self::plain(matrix))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self::plain(corpus::load_matrix(&path).map_err(to_py)?))
    }

    /// Zipf-distributed synthetic corpus.
    #[staticmethod]
    #[pyo3(signature = (n_docs, vocab, avg_nnz, zipf_s=1.0, seed=0))]
    fn synthetic(n_docs: usize, vocab: usize, avg_nnz: usize, zipf_s: f64, seed: u64) -> PyResult<Self> {
        let spec = SyntheticSpec::new(n_docs, vocab, avg_nnz, zipf_s, seed);
        Ok(Self::plain(synth::generate(&spec).map_err(to_py)?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::write_matrix(&path, &self.matrix).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> usize {
        self.matrix.dims
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    #[getter]
    fn doc_ids(&self) -> Vec<String> {
        self.matrix.doc_ids.clone()
    }

    #[getter]
    fn dropped(&self) -> Vec<String> {
        self.dropped.clone()
    }

    /// `term -> (dim, document frequency)`, or None for loaded and synthetic
    /// corpora.
    fn vocabulary(&self) -> Option<HashMap<String, (u32, u32)>> {
        self.vocabulary.as_ref().map(|v| {
            v.terms()
                .enumerate()
                .map(|(d, (t, df))| (t.to_string(), (d as u32, df)))
                .collect()
        })
    }

    fn vector(&self, i: usize) -> PyResult<PySparseVector> {
        self.matrix
            .vectors
            .get(i)
            .map(|v| v.clone().into())
            .ok_or_else(|| PyIndexError::new_err(format!("row {i} out of range")))
    }

    fn __len__(&self) -> usize {
        self.matrix.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(n_docs={}, dims={}, nnz={})",
            self.matrix.len(),
            self.matrix.dims,
            self.matrix.nnz()
        )
    }
}

/// Pruning index over a set of unit centroids, one threshold level per λ.
#[pyclass(name = "PruneIndex", module = "pysskm", frozen)]
pub struct PyPruneIndex {
    inner: pruneindex::MultiIndex,
}

#[pymethods]
impl PyPruneIndex {
    #[new]
    #[pyo3(signature = (centroids, lambdas=None))]
    fn new(centroids: Vec<PyRef<'_, PySparseVector>>, lambdas: Option<Vec<f64>>) -> PyResult<Self> {
        let lambdas = lambdas.unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
        let inner = pruneindex::MultiIndex::build(&unwrap_vectors(&centroids), &lambdas)
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.thresholds().iter().map(|t| t.lambda()).collect()
    }

    /// Squared-value window operations spent per centroid, over all λ.
    #[getter]
    fn window_ops(&self) -> Vec<usize> {
        self.inner.window_ops().to_vec()
    }

    /// The largest λ not above `baseline_sim`.
    fn select_threshold(&self, baseline_sim: f64) -> Option<f64> {
        self.inner.select_threshold(baseline_sim).map(|t| t.lambda())
    }

    /// Sorted candidate ids, or None when `baseline_sim` is below every λ.
    fn query(&self, x: &PySparseVector, baseline_sim: f64) -> Option<Vec<u32>> {
        let mut scratch = QueryScratch::default();
        self.inner
            .query(&x.inner, baseline_sim, &mut scratch, |_| true)
            .map(<[u32]>::to_vec)
    }

    /// Number of dims each centroid shares with `x`; absent ids share none.
    fn overlap_counts(&self, x: &PySparseVector) -> HashMap<u32, u32> {
        pruneindex::overlap_counts(self.inner.general(), &x.inner)
    }
}

/// `([(dim, min_overlap), ...], window_ops)` for one centroid at one λ.
#[pyfunction]
fn threshold_entries(centroid: &PySparseVector, lambda: f64) -> (Vec<(u32, u32)>, usize) {
    let out = pruneindex::threshold_entries(&centroid.inner, lambda);
    (out.entries, out.window_ops)
}

#[pyfunction]
fn init_kmeanspp(py: Python<'_>, corpus: &PyCorpus, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    py.detach(|| engine::init_kmeanspp(&corpus.matrix.vectors, k, seed))
        .map_err(to_py)
}

#[pyclass(name = "ClusterResult", module = "pysskm", frozen)]
pub struct PyClusterResult {
    result: engine::RunResult,
}

fn stop_reason_str(r: StopReason) -> &'static str {
    match r {
        StopReason::NoReassignments => "no_reassignments",
        StopReason::CentroidDrift => "centroid_drift",
        StopReason::MaxIterations => "max_iterations",
    }
}

#[pymethods]
impl PyClusterResult {
    #[getter]
    fn assignments(&self) -> Vec<u32> {
        self.result.assignments.clone()
    }

    #[getter]
    fn sims(&self) -> Vec<f64> {
        self.result.sims.clone()
    }

    #[getter]
    fn centroids(&self) -> Vec<PySparseVector> {
        self.result.centroids.iter().cloned().map(Into::into).collect()
    }

    #[getter]
    fn seeds(&self) -> Vec<usize> {
        self.result.seeds.clone()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.result.objective
    }

    #[getter]
    fn stop_reason(&self) -> &'static str {
        stop_reason_str(self.result.stop_reason)
    }

    #[getter]
    fn total_dot_products(&self) -> u64 {
        self.result.total_dot_products()
    }

    fn cluster_sizes(&self) -> Vec<usize> {
        self.result.cluster_sizes()
    }

    /// Per-iteration counters as a list of dicts.
    fn iterations<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.result
            .iterations
            .iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("iteration", s.iteration)?;
                d.set_item("n_reassigned", s.n_reassigned)?;
                d.set_item("n_unchanged_centroids", s.n_unchanged_centroids)?;
                d.set_item("n_repaired_clusters", s.n_repaired_clusters)?;
                d.set_item("index_active", s.index_active)?;
                d.set_item("dot_products", s.dot_products)?;
                d.set_item("index_queries", s.index_queries)?;
                d.set_item("candidates_total", s.candidates_total)?;
                d.set_item("max_drift", s.max_drift)?;
                d.set_item("objective", s.objective)?;
                d.set_item("wall_seconds", s.wall_time.as_secs_f64())?;
                d.set_item("index_build_seconds", s.index_build_time.as_secs_f64())?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "ClusterResult(k={}, iterations={}, objective={}, stop_reason={})",
            self.result.centroids.len(),
            self.result.iterations.len(),
            self.result.objective,
            stop_reason_str(self.result.stop_reason)
        )
    }
}

/// Clusters `corpus` into `k` groups. `mode` is "baseline", "ncc" or
/// "ncc+index"; the assignments do not depend on it.
#[pyfunction]
#[pyo3(signature = (
    corpus, k, mode="ncc+index", seed=0, lambdas=None, conv=engine::DEFAULT_CONV_SQ_DIST,
    ncc_eps=0.0, index_activation=engine::DEFAULT_INDEX_ACTIVATION,
    max_iters=engine::DEFAULT_MAX_ITERS, threads=None,
))]
#[allow(clippy::too_many_arguments)]
fn cluster(
    py: Python<'_>,
    corpus: &PyCorpus,
    k: usize,
    mode: &str,
    seed: u64,
    lambdas: Option<Vec<f64>>,
    conv: f64,
    ncc_eps: f64,
    index_activation: usize,
    max_iters: usize,
    threads: Option<usize>,
) -> PyResult<PyClusterResult> {
    let mode: Mode = mode.parse().map_err(to_py)?;
    let config = RunConfig {
        k,
        mode,
        lambdas: lambdas.unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec()),
        conv_sq_dist: conv,
        ncc_epsilon: ncc_eps,
        index_activation_threshold: index_activation,
        max_iters,
        seed,
        threads,
    };
    let result = py
        .detach(|| engine::run(&corpus.matrix.vectors, &config))
        .map_err(to_py)?;
    Ok(PyClusterResult { result })
}

#[pymodule]
fn pysskm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySparseVector>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyPruneIndex>()?;
    m.add_class::<PyClusterResult>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_entries, m)?)?;
    m.add_function(wrap_pyfunction!(init_kmeanspp, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add("DEFAULT_LAMBDAS", DEFAULT_LAMBDAS.to_vec())?;
    Ok(())
}
