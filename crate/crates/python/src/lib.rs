//! Python bindings for the selective retrieval-augmentation pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use sra_core::augment::{self, AugmentationConfig};
use sra_core::config::{Arm, RunConfig};
use sra_core::corpus::{self, Sample, Split, TaskKind};
use sra_core::error::ErrorKind;
use sra_core::evaluate;
use sra_core::experiment;
use sra_core::longtail::{self, SelectionPolicy};
use sra_core::retrieval::{self, HashedTrigramProvider, TfidfParams};
use sra_core::synthetic::{self, SyntheticSpec};

fn to_py_err(err: sra_core::Error) -> PyErr {
    let msg = err.to_string();
    match err.kind() {
        ErrorKind::Config | ErrorKind::Load => PyValueError::new_err(msg),
        ErrorKind::Io => PyIOError::new_err(msg),
        ErrorKind::Stage => PyRuntimeError::new_err(msg),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_task(task: &str) -> PyResult<TaskKind> {
    task.parse().map_err(to_py_err)
}

fn parse_split(split: &str) -> PyResult<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.as_str() == split)
        .ok_or_else(|| PyValueError::new_err(format!("unknown split `{split}`")))
}

/// A labeled corpus with train, validation and test splits.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: corpus::Dataset,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.inner.samples().len()
    }

    #[getter]
    fn task(&self) -> String {
        match self.inner.task() {
            TaskKind::SingleLabel => "single-label".into(),
            TaskKind::MultiLabel => "multi-label".into(),
        }
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.label_vocab().to_vec()
    }

    #[pyo3(signature = (split=None))]
    fn ids(&self, split: Option<&str>) -> PyResult<Vec<String>> {
        Ok(match split {
            Some(s) => self.inner.split(parse_split(s)?).map(|s| s.id.clone()).collect(),
            None => self.inner.ids().map(str::to_owned).collect(),
        })
    }

    fn get(&self, py: Python<'_>, id: &str) -> PyResult<Option<Py<PyAny>>> {
        self.inner.get(id).map(|s| to_py(py, s)).transpose()
    }

    /// Train-split label counts as a dict.
    fn frequency_table(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.frequency_table())
    }

    fn split_fingerprint(&self, split: &str) -> PyResult<String> {
        Ok(self.inner.split_fingerprint(parse_split(split)?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::save_dataset(&self.inner, path).map_err(to_py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (path, task="single-label"))]
fn load_dataset(path: PathBuf, task: &str) -> PyResult<PyDataset> {
    let inner = corpus::load_dataset(path, parse_task(task)?).map_err(to_py_err)?;
    Ok(PyDataset { inner })
}

#[pyfunction]
#[pyo3(signature = (seed=None))]
fn synthetic_dataset(seed: Option<u64>) -> PyResult<PyDataset> {
    let mut spec = SyntheticSpec::default();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let inner = synthetic::generate(&spec).map_err(to_py_err)?;
    Ok(PyDataset { inner })
}

/// Labels in the lowest-frequency fraction `alpha` of the label space.
#[pyfunction]
fn select_low_frequency(counts: BTreeMap<String, u64>, alpha: f64) -> PyResult<Vec<String>> {
    let freq = corpus::FrequencyTable {
        task: TaskKind::SingleLabel,
        train_size: counts.values().sum(),
        counts,
        empty_count: 0,
    };
    let low = longtail::select_low_frequency(&freq, SelectionPolicy::cutoff(alpha)).map_err(to_py_err)?;
    Ok(low.labels.into_iter().collect())
}

/// TF-IDF index over `(id, text)` documents.
#[pyclass(name = "SparseIndex", frozen)]
struct PySparseIndex {
    inner: retrieval::SparseIndex,
}

#[pymethods]
impl PySparseIndex {
    #[new]
    #[pyo3(signature = (docs, min_df=2, max_df=0.8))]
    fn new(docs: Vec<(String, String)>, min_df: usize, max_df: f64) -> PyResult<Self> {
        let params = TfidfParams {
            min_df,
            max_df,
            ..TfidfParams::default()
        };
        let inner = retrieval::build_sparse_index(&docs, params).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn terms(&self) -> Vec<String> {
        self.inner.vectorizer().terms().to_vec()
    }

    /// Top `top_n` documents by cosine similarity, highest first.
    #[pyo3(signature = (query, top_n=20))]
    fn candidates(&self, query: &str, top_n: usize) -> Vec<(String, f64)> {
        self.inner.candidates(query, top_n)
    }
}

/// Dense embeddings from the built-in hashed character-trigram provider.
#[pyfunction]
fn embed(texts: Vec<String>) -> Vec<Vec<f64>> {
    let provider = HashedTrigramProvider::default();
    texts.iter().map(|t| provider.embed_text(t)).collect()
}

#[pyfunction]
fn truncate_tokens(text: &str, cap: usize) -> String {
    augment::truncate_tokens(text, cap)
}

/// Builds the augmented input for `text` from retrieved clauses.
#[pyfunction]
#[pyo3(signature = (text, retrieved, clause_token_cap=64, max_model_length=512))]
fn compose(
    py: Python<'_>,
    text: &str,
    retrieved: Vec<String>,
    clause_token_cap: usize,
    max_model_length: usize,
) -> PyResult<Py<PyAny>> {
    let config = AugmentationConfig {
        clause_token_cap,
        max_model_length,
        ..AugmentationConfig::default()
    };
    config.validate().map_err(to_py_err)?;
    let base = Sample::new("query", text, &[], Split::Test);
    let refs: Vec<&str> = retrieved.iter().map(String::as_str).collect();
    to_py(py, &augment::compose(&base, &refs, &config))
}

#[pyfunction]
fn f1_scores(py: Python<'_>, gold: Vec<Vec<String>>, pred: Vec<Vec<String>>, labels: Vec<String>) -> PyResult<Py<PyAny>> {
    let report = evaluate::f1_scores(&gold, &pred, &labels).map_err(to_py_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn mcnemar(py: Python<'_>, b: u64, c: u64) -> PyResult<Py<PyAny>> {
    to_py(py, &evaluate::mcnemar_from_counts(b, c))
}

/// Paired bootstrap interval for macro-F1(b) - macro-F1(a).
#[pyfunction]
#[pyo3(signature = (gold, pred_a, pred_b, labels, resamples=10000, level=0.95, seed=13))]
#[allow(clippy::too_many_arguments)]
fn bootstrap_delta_ci(
    py: Python<'_>,
    gold: Vec<Vec<String>>,
    pred_a: Vec<Vec<String>>,
    pred_b: Vec<Vec<String>>,
    labels: Vec<String>,
    resamples: usize,
    level: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let ci = py
        .detach(|| evaluate::bootstrap_delta_ci(&gold, &pred_a, &pred_b, &labels, resamples, level, seed))
        .map_err(to_py_err)?;
    to_py(py, &ci)
}

/// A prepared experiment: loaded corpus plus run configuration.
#[pyclass(name = "Pipeline", frozen)]
struct PyPipeline {
    inner: experiment::Pipeline,
}

#[pymethods]
impl PyPipeline {
    /// `config` is a TOML file path; `overrides` are `key=value` strings.
    #[new]
    #[pyo3(signature = (config=None, overrides=Vec::new()))]
    fn new(py: Python<'_>, config: Option<PathBuf>, overrides: Vec<String>) -> PyResult<Self> {
        let mut run_config = match config {
            Some(path) => RunConfig::load(path).map_err(to_py_err)?,
            None => RunConfig::default(),
        };
        for o in &overrides {
            run_config.set(o).map_err(to_py_err)?;
        }
        run_config.validate().map_err(to_py_err)?;
        let inner = py.detach(|| experiment::Pipeline::prepare(run_config)).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (dataset, overrides=Vec::new()))]
    fn from_dataset(dataset: &PyDataset, overrides: Vec<String>) -> PyResult<Self> {
        let mut config = RunConfig::default();
        for o in &overrides {
            config.set(o).map_err(to_py_err)?;
        }
        config.validate().map_err(to_py_err)?;
        let inner = experiment::Pipeline::with_dataset(config, dataset.inner.clone()).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn config(&self) -> String {
        self.inner.config().to_toml()
    }

    fn analyze(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let report = self.inner.analyze().map_err(to_py_err)?;
        to_py(py, &report)
    }

    /// Trains and evaluates one arm; writes the run directory when `out` is given.
    #[pyo3(signature = (arm, out=None))]
    fn run(&self, py: Python<'_>, arm: &str, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
        let arm: Arm = arm.parse().map_err(to_py_err)?;
        let outcome = py.detach(|| self.inner.run_arm(arm)).map_err(to_py_err)?;
        if let Some(dir) = out {
            outcome.write(&dir).map_err(to_py_err)?;
        }
        to_py(py, &outcome.report)
    }

    #[pyo3(signature = (cutoffs=vec![0.0, 0.2, 0.5, 0.8, 1.0]))]
    fn sweep(&self, py: Python<'_>, cutoffs: Vec<f64>) -> PyResult<Py<PyAny>> {
        let sweep = py.detach(|| self.inner.sweep(&cutoffs)).map_err(to_py_err)?;
        to_py(py, &sweep.report)
    }

    /// Compares arm `b` against arm `a` on the test split.
    fn compare(&self, py: Python<'_>, a: &str, b: &str) -> PyResult<Py<PyAny>> {
        let (a, b): (Arm, Arm) = (a.parse().map_err(to_py_err)?, b.parse().map_err(to_py_err)?);
        let params = self.inner.config().compare_params();
        let report = py
            .detach(|| {
                let run_a = self.inner.run_arm(a)?;
                let run_b = self.inner.run_arm(b)?;
                experiment::compare_outcomes(&run_a, &run_b, &params)
            })
            .map_err(to_py_err)?;
        to_py(py, &report)
    }
}

#[pymodule]
fn sra_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PySparseIndex>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(select_low_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(f1_scores, m)?)?;
    m.add_function(wrap_pyfunction!(mcnemar, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_delta_ci, m)?)?;
    Ok(())
}
