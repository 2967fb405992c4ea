//! Python bindings for the `xdeps` core crate.
//!
//! Structured results (samples, reports) cross the boundary as JSON and are
//! decoded with Python's `json` module, so their keys match the file formats.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use xdeps::builtin;
use xdeps::derivation::{depth_histogram, enumerate_trees, recognize_bruteforce};
use xdeps::grammar::Grammar;
use xdeps::harness::{self, Dataset, MetricsReport};
use xdeps::lexicon::{GenerationConfig, Lexicon};
use xdeps::probe::{self, SyntheticProvider};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// One of the built-in grammars.
#[pyclass(name = "Grammar", module = "pyxdeps")]
struct PyGrammar {
    inner: Grammar,
}

#[pymethods]
impl PyGrammar {
    /// `control` or `raising`.
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        builtin::by_id(id)
            .map(|inner| PyGrammar { inner })
            .ok_or_else(|| value_err(format!("unknown grammar `{id}`")))
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    /// Invariant violations, empty for a well-formed grammar.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().violations.iter().map(|d| d.to_string()).collect()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Every derivation tree up to `max_depth`, in bracketed form.
    fn enumerate(&self, max_depth: usize) -> Vec<String> {
        enumerate_trees(&self.inner, max_depth).iter().map(|t| t.to_string()).collect()
    }

    /// Tree counts keyed by depth.
    fn depth_counts(&self, max_depth: usize) -> std::collections::BTreeMap<usize, usize> {
        depth_histogram(&enumerate_trees(&self.inner, max_depth))
    }

    /// A derivation of `sentence` (space-separated, no final period) using
    /// the default lexicon, or None.
    #[pyo3(signature = (sentence, max_depth = 3))]
    fn recognize(&self, sentence: &str, max_depth: usize) -> PyResult<Option<String>> {
        let g = Lexicon::default_lexicon().populate(&self.inner).map_err(value_err)?;
        let words: Vec<String> = sentence.split_whitespace().map(String::from).collect();
        Ok(recognize_bruteforce(&g, &words, max_depth).map(|(t, _)| t.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Grammar('{}')", self.inner.id)
    }
}

#[pyclass(name = "Lexicon", module = "pyxdeps")]
struct PyLexicon {
    inner: Lexicon,
}

#[pymethods]
impl PyLexicon {
    /// The bundled lexicon, or the one at `path`.
    #[new]
    #[pyo3(signature = (path = None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => Lexicon::load(&p).map_err(value_err)?,
            None => Lexicon::default_lexicon(),
        };
        Ok(PyLexicon { inner })
    }

    /// Entries of one slot, e.g. `"TV.su"`.
    fn slot(&self, symbol: &str) -> Vec<String> {
        self.inner.slot(&xdeps::grammar::Symbol::parse(symbol)).iter().map(|t| t.plain()).collect()
    }

    #[getter]
    fn hash(&self) -> String {
        self.inner.hash()
    }

    /// Raises if the lexicon cannot populate `grammar`.
    fn check(&self, grammar: &PyGrammar) -> PyResult<()> {
        self.inner.check(&grammar.inner).map_err(value_err)
    }
}

/// Generates a dataset and returns its samples as dicts. When `out` is
/// given the dataset file is written too.
#[pyfunction]
#[pyo3(signature = (grammar, max_depth, per_tree = 10, seed = 0, lexicon = None, capitalize = true, punctuate = true, out = None))]
#[allow(clippy::too_many_arguments)]
fn generate<'py>(
    py: Python<'py>,
    grammar: &PyGrammar,
    max_depth: usize,
    per_tree: usize,
    seed: u64,
    lexicon: Option<&PyLexicon>,
    capitalize: bool,
    punctuate: bool,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let lex = lexicon.map_or_else(Lexicon::default_lexicon, |l| l.inner.clone());
    let cfg = GenerationConfig {
        realizations_per_tree: per_tree,
        seed,
        max_depth,
        capitalize,
        punctuate,
    };
    let d = harness::generate_dataset(&grammar.inner, &lex, &cfg).map_err(value_err)?;
    if let Some(p) = out {
        harness::write_dataset(&p, &d).map_err(|e| PyIOError::new_err(e.to_string()))?;
    }
    from_json(py, &serde_json::to_string(&d.samples).map_err(value_err)?)
}

fn load(path: &Path) -> PyResult<Dataset> {
    harness::read_dataset(path).map_err(value_err)
}

/// Reads a dataset file into `{"header": {...}, "samples": [...]}`.
#[pyfunction]
fn read_dataset<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let d = load(&path)?;
    let dict = PyDict::new(py);
    dict.set_item("header", from_json(py, &serde_json::to_string(&d.header).map_err(value_err)?)?)?;
    dict.set_item("samples", from_json(py, &serde_json::to_string(&d.samples).map_err(value_err)?)?)?;
    Ok(dict.into_any())
}

/// Writes synthetic embeddings (`positional`, `oracle`, `random-fixed`)
/// for a dataset file.
#[pyfunction]
#[pyo3(signature = (provider, data, out, dim = 64, seed = 0))]
fn synthesize(provider: &str, data: PathBuf, out: PathBuf, dim: usize, seed: u64) -> PyResult<usize> {
    let p = SyntheticProvider::parse(provider).ok_or_else(|| value_err(format!("unknown provider `{provider}`")))?;
    if dim < p.min_dim() {
        return Err(value_err(format!("dim must be at least {}", p.min_dim())));
    }
    let d = load(&data)?;
    let set = probe::synthesize_all(p, &d.samples, dim, seed);
    probe::write_embeddings(&out, &set).map_err(value_err)?;
    Ok(set.records.len())
}

/// Predictions of a reference predictor, summarized as a report dict.
#[pyfunction]
#[pyo3(signature = (predictor, data, seed = 0))]
fn baseline_report<'py>(py: Python<'py>, predictor: &str, data: PathBuf, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let b = harness::Baseline::parse(predictor).ok_or_else(|| value_err(format!("unknown predictor `{predictor}`")))?;
    let d = load(&data)?;
    let preds = harness::run_baseline(b, &d.samples, seed);
    let r = MetricsReport::build(&preds, true, Some(predictor)).map_err(value_err)?;
    from_json(py, &r.to_json())
}

/// Runs the command line in-process; returns (exit code, stdout, stderr).
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["xdeps".to_owned()];
    full.extend(args);
    let code = harness::cli::run(full, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

#[pymodule]
fn pyxdeps(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGrammar>()?;
    m.add_class::<PyLexicon>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
