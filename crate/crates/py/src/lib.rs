//! Python bindings: oracles, the circuit search, LS scoring, datasets,
//! sampling-bound theory and overlap analysis.
//!
//! Structured results cross the boundary as plain dicts and lists built from
//! the same JSON the CLI writes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use mshc_core::analysis::{self, SelectionFrequency};
use mshc_core::datasets::{self, TaskFamily};
use mshc_core::lsmetric;
use mshc_core::oracle::{
    LsOracle, Memoized, OracleError, PlantedCircuitSpec, PlantedMode, PlantedOracle, RemoteConfig, RemoteSource,
    ReplaySource,
};
use mshc_core::search::{self, DropAggregation, SearchError};
use mshc_core::theory;
use mshc_core::{HeadId, HeadMask, LabeledEmbeddings, ModelTopology, OracleRequest, SeparabilityOracle};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(
    mshc,
    CircuitTooSmallError,
    PyRuntimeError,
    "Candidate set shrank below K."
);
create_exception!(
    mshc,
    NonTerminationError,
    PyRuntimeError,
    "Pruning hit the iteration cap."
);
create_exception!(mshc, OracleFailure, PyRuntimeError, "The separability oracle failed.");

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn oracle_err(e: OracleError) -> PyErr {
    match e {
        OracleError::EmptyDatasetId
        | OracleError::UnknownDataset(_)
        | OracleError::InvalidSpec(_)
        | OracleError::TopologyMismatch { .. }
        | OracleError::Head(_) => value_err(e),
        other => OracleFailure::new_err(other.to_string()),
    }
}

fn search_err(e: SearchError) -> PyErr {
    match e {
        SearchError::Config(_) => value_err(e),
        SearchError::CircuitTooSmall { .. } => CircuitTooSmallError::new_err(e.to_string()),
        SearchError::NonTermination { .. } => NonTerminationError::new_err(e.to_string()),
        SearchError::Oracle(o) => oracle_err(o),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_topology(spec: &str) -> PyResult<ModelTopology> {
    spec.parse().map_err(value_err)
}

/// Search parameters; defaults are window 5, percentile 0.75, 10 samples, K = 10, epsilon 0.25.
#[pyclass(name = "SearchConfig", module = "mshc", from_py_object)]
#[derive(Clone)]
pub struct PySearchConfig {
    inner: search::SearchConfig,
}

#[pymethods]
impl PySearchConfig {
    #[new]
    #[pyo3(signature = (window=5, percentile=0.75, samples=10, k=10, epsilon=0.25, seed=0, max_iterations=None, drop_aggregation="min"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        window: usize,
        percentile: f64,
        samples: usize,
        k: usize,
        epsilon: f64,
        seed: u64,
        max_iterations: Option<usize>,
        drop_aggregation: &str,
    ) -> PyResult<Self> {
        let drop_aggregation: DropAggregation = drop_aggregation.parse().map_err(value_err)?;
        Ok(Self {
            inner: search::SearchConfig {
                window,
                percentile,
                samples,
                k,
                epsilon,
                seed,
                max_iterations,
                drop_aggregation,
            },
        })
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }
    #[getter]
    fn percentile(&self) -> f64 {
        self.inner.percentile
    }
    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SearchConfig(window={}, percentile={}, samples={}, k={}, epsilon={}, seed={})",
            c.window, c.percentile, c.samples, c.k, c.epsilon, c.seed
        )
    }
}

/// A separability oracle: planted ground truth, replayed embeddings, or a remote embedding service.
#[pyclass(name = "Oracle", module = "mshc", frozen)]
pub struct PyOracle {
    inner: Arc<dyn SeparabilityOracle>,
    planted: Option<PlantedOracle>,
    dataset_id: String,
}

#[pymethods]
impl PyOracle {
    /// Planted circuit of `count` heads drawn from `layers` (inclusive pair), saturating at `saturation` heads.
    #[staticmethod]
    #[pyo3(signature = (topology="20x8", layers=(7, 9), count=12, saturation=3, seed=0, mode="law", noise_sd=0.0))]
    fn planted(
        topology: &str,
        layers: (usize, usize),
        count: usize,
        saturation: usize,
        seed: u64,
        mode: &str,
        noise_sd: f64,
    ) -> PyResult<Self> {
        let topology = parse_topology(topology)?;
        if layers.0 > layers.1 || layers.1 >= topology.num_layers() {
            return Err(value_err(format!("layer range {layers:?} outside topology {topology}")));
        }
        let mut spec =
            PlantedCircuitSpec::confined(topology, layers.0..=layers.1, count, saturation, seed).map_err(oracle_err)?;
        spec.noise_sd = noise_sd;
        let mode = match mode {
            "law" => PlantedMode::Law,
            "embeddings" => PlantedMode::embeddings(),
            other => {
                return Err(value_err(format!(
                    "unknown planted mode {other:?} (expected law or embeddings)"
                )))
            }
        };
        let oracle = PlantedOracle::new(spec, mode).map_err(oracle_err)?;
        Ok(Self {
            inner: Arc::new(oracle.reseeded(seed)),
            dataset_id: oracle.dataset_id().to_string(),
            planted: Some(oracle),
        })
    }

    /// Embeddings stored under `directory/<dataset_id>/<mask key>.emb`, scored locally.
    #[staticmethod]
    fn replay(directory: PathBuf, topology: &str, dataset_id: &str) -> PyResult<Self> {
        let source = ReplaySource::new(directory, parse_topology(topology)?);
        Ok(Self {
            inner: Arc::new(Memoized::new(LsOracle::new(source))),
            planted: None,
            dataset_id: dataset_id.to_string(),
        })
    }

    /// Connects to an embedding service and fetches its topology and datasets.
    #[staticmethod]
    fn remote(py: Python<'_>, endpoint: String, dataset_id: &str) -> PyResult<Self> {
        let source = py
            .detach(|| RemoteSource::connect(RemoteConfig::new(endpoint)))
            .map_err(oracle_err)?;
        if !source.datasets().contains_key(dataset_id) {
            return Err(value_err(format!("server does not register dataset {dataset_id:?}")));
        }
        Ok(Self {
            inner: Arc::new(Memoized::new(LsOracle::new(source))),
            planted: None,
            dataset_id: dataset_id.to_string(),
        })
    }

    #[getter]
    fn topology(&self) -> String {
        self.inner.topology().to_string()
    }

    #[getter]
    fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    /// Ground-truth heads of a planted oracle, `None` otherwise.
    #[getter]
    fn planted_heads(&self) -> Option<Vec<String>> {
        self.planted
            .as_ref()
            .map(|o| o.spec().planted.iter().map(ToString::to_string).collect())
    }

    /// Score with the listed heads (e.g. `"L7.H2"`) disabled.
    #[pyo3(signature = (disabled=Vec::new()))]
    fn score(&self, py: Python<'_>, disabled: Vec<String>) -> PyResult<f64> {
        let heads: Vec<HeadId> = disabled
            .iter()
            .map(|h| h.parse().map_err(value_err))
            .collect::<PyResult<_>>()?;
        let mask = HeadMask::with_disabled(self.inner.topology(), heads).map_err(value_err)?;
        let request = OracleRequest::new(self.dataset_id.clone(), mask).map_err(oracle_err)?;
        let oracle = self.inner.clone();
        py.detach(move || oracle.score(&request)).map_err(oracle_err)
    }

    fn __repr__(&self) -> String {
        let kind = if self.planted.is_some() { "planted" } else { "embedding" };
        format!(
            "Oracle({kind}, topology={}, dataset_id={:?})",
            self.topology(),
            self.dataset_id
        )
    }
}

impl PyOracle {
    fn for_trial(&self, seed: u64) -> Arc<dyn SeparabilityOracle> {
        match &self.planted {
            Some(p) => Arc::new(p.reseeded(seed)),
            None => self.inner.clone(),
        }
    }
}

/// Outcome of one search.
#[pyclass(name = "SearchResult", module = "mshc", frozen)]
pub struct PySearchResult {
    inner: search::SearchResult,
}

#[pymethods]
impl PySearchResult {
    #[getter]
    fn circuit(&self) -> Vec<String> {
        self.inner.circuit.heads().iter().map(ToString::to_string).collect()
    }
    #[getter]
    fn initial_candidates(&self) -> Vec<String> {
        self.inner
            .initial_candidates()
            .iter()
            .map(ToString::to_string)
            .collect()
    }
    #[getter]
    fn full_score(&self) -> f64 {
        self.inner.full_score
    }
    #[getter]
    fn baseline_score(&self) -> f64 {
        self.inner.baseline_score
    }
    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }
    #[getter]
    fn oracle_calls(&self) -> u64 {
        self.inner.oracle_calls
    }
    #[getter]
    fn drop_profile(&self) -> Vec<f64> {
        self.inner.drop_profile.clone()
    }
    #[getter]
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.trace)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.circuit.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SearchResult(circuit={} heads, threshold={:.4}, oracle_calls={})",
            self.inner.circuit.len(),
            self.inner.threshold,
            self.inner.oracle_calls
        )
    }
}

/// Macro layer search followed by stochastic pruning. Raises on too-small circuits and iteration caps.
#[pyfunction]
#[pyo3(signature = (oracle, config=None))]
fn search_circuit(py: Python<'_>, oracle: &PyOracle, config: Option<PySearchConfig>) -> PyResult<PySearchResult> {
    let config = config.map(|c| c.inner).unwrap_or_default();
    let target = oracle.for_trial(config.seed);
    let dataset_id = oracle.dataset_id.clone();
    let result = py.detach(move || search::search_k_mshc(target.as_ref(), &dataset_id, &config));
    result.map(|inner| PySearchResult { inner }).map_err(search_err)
}

/// Repeated searches with seeds `seed + trial`; failed trials come back as error strings.
#[pyfunction]
#[pyo3(signature = (oracle, trials, config=None))]
fn run_trials(
    py: Python<'_>,
    oracle: &PyOracle,
    trials: usize,
    config: Option<PySearchConfig>,
) -> PyResult<Vec<Py<PyAny>>> {
    let config = config.map(|c| c.inner).unwrap_or_default();
    let dataset_id = oracle.dataset_id.clone();
    let outcomes = py
        .detach(|| search::run_trials_with(|_, seed| oracle.for_trial(seed), &dataset_id, &config, trials))
        .map_err(search_err)?;
    outcomes
        .into_iter()
        .map(|o| match o.result {
            Ok(inner) => Ok(Py::new(py, PySearchResult { inner })?.into_any()),
            Err(e) => Ok(e.to_string().into_pyobject(py)?.into_any().unbind()),
        })
        .collect()
}

/// Layers-by-heads selection frequencies of the successful results.
#[pyfunction]
fn selection_frequency(results: Vec<PyRef<'_, PySearchResult>>) -> PyResult<Vec<Vec<f64>>> {
    let owned: Vec<search::SearchResult> = results.iter().map(|r| r.inner.clone()).collect();
    let freq = analysis::aggregate(&owned).map_err(value_err)?;
    Ok(frequency_grid(&freq))
}

fn frequency_grid(freq: &SelectionFrequency) -> Vec<Vec<f64>> {
    let t = freq.topology();
    (0..t.num_layers())
        .map(|l| {
            (0..t.heads_per_layer())
                .map(|h| freq.frequency(HeadId::new(l, h)))
                .collect()
        })
        .collect()
}

/// Writes the heatmap CSV for the successful results.
#[pyfunction]
fn export_heatmap(results: Vec<PyRef<'_, PySearchResult>>, path: PathBuf) -> PyResult<()> {
    let owned: Vec<search::SearchResult> = results.iter().map(|r| r.inner.clone()).collect();
    let freq = analysis::aggregate(&owned).map_err(value_err)?;
    analysis::export_heatmap(&freq, &path).map_err(value_err)
}

/// Jaccard overlap report over heatmap CSVs given as `{task: path}`.
#[pyfunction]
#[pyo3(signature = (heatmaps, thresholds=vec![0.5, 0.75, 0.95]))]
fn overlap<'py>(
    py: Python<'py>,
    heatmaps: BTreeMap<String, PathBuf>,
    thresholds: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let tasks: Vec<(String, SelectionFrequency)> = heatmaps
        .into_iter()
        .map(|(name, path)| analysis::read_heatmap(&path).map(|f| (name, f)))
        .collect::<Result<_, _>>()
        .map_err(value_err)?;
    let report = analysis::overlap_matrix(&tasks, &thresholds).map_err(value_err)?;
    json_to_py(py, &report)
}

/// `S(B) + epsilon · (S(M) − S(B))`
#[pyfunction]
fn understanding_threshold(full: f64, base: f64, epsilon: f64) -> f64 {
    search::understanding_threshold(full, base, epsilon)
}

/// Training accuracy of a linear SVM on the top `dim` principal components.
#[pyfunction]
#[pyo3(signature = (rows, labels, dim=lsmetric::DEFAULT_DIM, c=lsmetric::DEFAULT_C))]
fn ls_score(py: Python<'_>, rows: Vec<Vec<f64>>, labels: Vec<i8>, dim: usize, c: f64) -> PyResult<f64> {
    let data = LabeledEmbeddings::from_rows(&rows, labels).map_err(value_err)?;
    py.detach(|| lsmetric::ls_score(&data, dim, c)).map_err(value_err)
}

/// Minimal-pair corpus rows as dicts with `pair_id`, `family`, `label`, `text`.
#[pyfunction]
#[pyo3(signature = (family, count, seed=0))]
fn generate<'py>(py: Python<'py>, family: &str, count: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let family: TaskFamily = family.parse().map_err(value_err)?;
    let examples = datasets::generate(family, count, seed).map_err(value_err)?;
    json_to_py(py, &examples)
}

/// `P(X ≤ at_most)` for `X ~ Hypergeometric(pop, marked, draws)`.
#[pyfunction]
fn hypergeom_tail(pop: usize, marked: usize, draws: usize, at_most: usize) -> PyResult<f64> {
    theory::hypergeom_tail(pop, marked, draws, at_most).map_err(value_err)
}

/// `exp(−2·N·K·(delta_i − delta_t)²)`
#[pyfunction]
fn hoeffding_bound(k: usize, samples: usize, delta_i: f64, delta_t: f64) -> f64 {
    theory::hoeffding_bound(k, samples, delta_i, delta_t)
}

/// 95% Wilson score interval.
#[pyfunction]
fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    theory::wilson_interval(successes, trials)
}

/// Default grid of exact, Hoeffding and Monte-Carlo miss probabilities.
#[pyfunction]
#[pyo3(signature = (reps=10_000, seed=0))]
fn theory_grid<'py>(py: Python<'py>, reps: u64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let rows = py
        .detach(|| theory::run_grid(&theory::default_grid(), reps, seed))
        .map_err(value_err)?;
    json_to_py(py, &rows)
}

#[pymodule]
pub fn mshc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySearchConfig>()?;
    m.add_class::<PyOracle>()?;
    m.add_class::<PySearchResult>()?;
    m.add("CircuitTooSmallError", m.py().get_type::<CircuitTooSmallError>())?;
    m.add("NonTerminationError", m.py().get_type::<NonTerminationError>())?;
    m.add("OracleFailure", m.py().get_type::<OracleFailure>())?;
    m.add_function(wrap_pyfunction!(search_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(selection_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(export_heatmap, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(understanding_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(ls_score, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(hypergeom_tail, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_interval, m)?)?;
    m.add_function(wrap_pyfunction!(theory_grid, m)?)?;
    Ok(())
}
