//! Python bindings: schedules and the diffusion identities, graphs and the
//! reasoning oracles, metrics, run configurations and the experiment
//! commands.
//!
//! Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use graphdiff::commands::{self, EmMetrics, EmOptions, EvalReport, InferRequest, NodeMetrics, ReasonRow};
use graphdiff::config::{Overrides, RunConfig};
use graphdiff::diffusion::{self, InferenceMode};
use graphdiff::graph::{self, HomophilySpec, ReasoningGraphSpec};
use graphdiff::reasoning::Task;
use graphdiff::{metrics, Tensor};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(graphdiff_py, GraphDiffError, PyException);
create_exception!(graphdiff_py, ConfigError, GraphDiffError);
create_exception!(graphdiff_py, DataError, GraphDiffError);
create_exception!(graphdiff_py, NumericError, GraphDiffError);

fn err(e: graphdiff::Error) -> PyErr {
    let msg = e.to_string();
    match (&e, e.exit_code()) {
        (graphdiff::Error::Io { .. }, _) => PyOSError::new_err(msg),
        (_, 2) => ConfigError::new_err(msg),
        (_, 4) => NumericError::new_err(msg),
        _ => DataError::new_err(msg),
    }
}

fn tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    Tensor::from_rows(&rows, cols).map_err(err)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

#[pyclass(name = "NoiseSchedule", frozen)]
struct PySchedule(diffusion::NoiseSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (steps = 100, offset = 0.008))]
    fn new(steps: usize, offset: f64) -> PyResult<Self> {
        diffusion::NoiseSchedule::cosine(steps, offset).map(Self).map_err(err)
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    fn beta(&self, t: usize) -> PyResult<f64> {
        Ok(self.0.coeffs(t).map_err(err)?.beta)
    }

    /// ᾱ_t for `t` in `0..=T`.
    fn alpha_bar(&self, t: usize) -> PyResult<f64> {
        if t > self.0.steps() {
            return Err(ConfigError::new_err(format!("step {t} outside 0..={}", self.0.steps())));
        }
        Ok(self.0.alpha_bar(t))
    }

    fn forward_sample(&self, y0: Vec<Vec<f64>>, t: usize, eps: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let y = diffusion::forward_sample(&tensor(y0)?, t, &tensor(eps)?, &self.0).map_err(err)?;
        Ok(rows(&y))
    }

    fn posterior_mean(&self, y0: Vec<Vec<f64>>, y_t: Vec<Vec<f64>>, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let m = diffusion::posterior_mean(&tensor(y0)?, &tensor(y_t)?, t, &self.0).map_err(err)?;
        Ok(rows(&m))
    }

    fn eps_to_mu(&self, y_t: Vec<Vec<f64>>, eps_hat: Vec<Vec<f64>>, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let m = diffusion::eps_to_mu(&tensor(y_t)?, &tensor(eps_hat)?, t, &self.0).map_err(err)?;
        Ok(rows(&m))
    }

    fn __repr__(&self) -> String {
        format!("NoiseSchedule(steps={}, offset={})", self.0.steps(), self.0.spec().offset)
    }
}

#[pyclass(name = "Graph", frozen)]
struct PyGraph(graph::Graph);

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        graph::graph_from_json(text, "<python>".as_ref()).map(Self).map_err(err)
    }

    #[staticmethod]
    fn homophily(
        num_nodes: usize,
        num_classes: usize,
        p_intra: f64,
        p_inter: f64,
        feature_noise: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = HomophilySpec { num_nodes, num_classes, p_intra, p_inter, feature_noise };
        graph::generate_homophily_graph(&spec, seed).map(Self).map_err(err)
    }

    /// Pair-complete weighted graph with the targets of `task` attached.
    #[staticmethod]
    #[pyo3(signature = (task, num_nodes, edge_prob, seed, weight_range = (0.1, 1.0)))]
    fn reasoning(task: &str, num_nodes: usize, edge_prob: f64, seed: u64, weight_range: (f64, f64)) -> PyResult<Self> {
        let task: Task = task.parse().map_err(err)?;
        let spec = ReasoningGraphSpec { num_nodes, edge_prob, weight_range };
        let g = graph::generate_reasoning_graph(&spec, seed).map_err(err)?;
        let y = task.oracle(&g).map_err(err)?;
        g.with_edge_targets(y).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        graph::graph_to_json(&self.0)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.0.num_nodes()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges().to_vec()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<Option<usize>>> {
        self.0.labels().map(<[_]>::to_vec)
    }

    #[getter]
    fn node_attrs(&self) -> Vec<Vec<f64>> {
        rows(self.0.node_attrs())
    }

    #[getter]
    fn edge_attrs(&self) -> Option<Vec<Vec<f64>>> {
        self.0.edge_attrs().map(rows)
    }

    #[getter]
    fn edge_targets(&self) -> Option<Vec<Vec<f64>>> {
        self.0.edge_targets().map(rows)
    }

    /// Exact pair targets of a reasoning task, one row per edge.
    fn oracle(&self, task: &str) -> PyResult<Vec<Vec<f64>>> {
        let task: Task = task.parse().map_err(err)?;
        Ok(rows(&task.oracle(&self.0).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!("Graph(num_nodes={}, num_edges={})", self.0.num_nodes(), self.0.num_edges())
    }
}

#[pyfunction]
#[pyo3(signature = (pred, truth, mask = None))]
fn node_accuracy(pred: Vec<usize>, truth: Vec<usize>, mask: Option<Vec<bool>>) -> PyResult<f64> {
    metrics::node_accuracy(&pred, &truth, mask.as_deref()).map_err(err)
}

#[pyfunction]
fn graph_accuracy(graphs: Vec<(Vec<usize>, Vec<usize>)>) -> PyResult<f64> {
    metrics::graph_accuracy(&graphs).map_err(err)
}

#[pyfunction]
fn micro_f1(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    metrics::micro_f1(&pred, &truth).map_err(err)
}

/// Majority vote over relaxed samples; ties go to the lowest class.
#[pyfunction]
fn aggregate_samples(samples: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<usize>> {
    let ts = samples.into_iter().map(tensor).collect::<PyResult<Vec<_>>>()?;
    diffusion::aggregate_samples(&ts).map_err(err)
}

#[pyclass(name = "RunConfig", frozen)]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let cfg = RunConfig::from_toml(text, "<python>".as_ref()).map_err(err)?;
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let cfg = RunConfig::load(path).map_err(err)?;
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    /// Copy with command-line style overrides applied.
    #[pyo3(signature = (*, seed = None, out = None, lambda_ = None, samples = None, steps = None, unweighted_mse = None, mode = None))]
    #[allow(clippy::too_many_arguments)]
    fn with_overrides(
        &self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        lambda_: Option<f64>,
        samples: Option<usize>,
        steps: Option<usize>,
        unweighted_mse: Option<bool>,
        mode: Option<&str>,
    ) -> PyResult<Self> {
        let mut cfg = self.0.clone();
        cfg.apply(&Overrides {
            seed,
            out,
            lambda: lambda_,
            samples,
            steps,
            unweighted_mse,
            mode: mode.map(parse_mode).transpose()?,
        });
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn out(&self) -> Option<PathBuf> {
        self.0.out.clone()
    }

    fn hash(&self) -> String {
        self.0.hash()
    }

    fn canonical_text(&self) -> String {
        self.0.canonical_text()
    }
}

fn parse_mode(s: &str) -> PyResult<InferenceMode> {
    match s {
        "deterministic" => Ok(InferenceMode::Deterministic),
        "stochastic" => Ok(InferenceMode::Stochastic),
        other => Err(ConfigError::new_err(format!("unknown inference mode `{other}`"))),
    }
}

fn node_dict<'py>(py: Python<'py>, m: &NodeMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("node_accuracy", m.node_accuracy)?;
    d.set_item("graph_accuracy", m.graph_accuracy)?;
    d.set_item("micro_f1", m.micro_f1)?;
    Ok(d)
}

fn em_dict<'py>(py: Python<'py>, m: &EmMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rounds", m.rounds)?;
    d.set_item("em_accuracy", m.em_accuracy)?;
    d.set_item("meanfield_accuracy", m.meanfield_accuracy)?;
    d.set_item("em_micro_f1", m.em_micro_f1)?;
    d.set_item("meanfield_micro_f1", m.meanfield_micro_f1)?;
    Ok(d)
}

fn reason_dicts<'py>(py: Python<'py>, rows: &[ReasonRow]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("split", &r.split)?;
            d.set_item("num_nodes", r.num_nodes)?;
            d.set_item("mse", r.mse)?;
            d.set_item("mean_baseline_mse", r.mean_baseline_mse)?;
            d.set_item("zero_baseline_mse", r.zero_baseline_mse)?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn train<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let m = py.detach(|| commands::cmd_train(&config.0)).map_err(err)?;
    node_dict(py, &m)
}

#[pyfunction]
#[pyo3(signature = (config, resume = None, stop_after = None))]
fn em<'py>(
    py: Python<'py>,
    config: &PyConfig,
    resume: Option<PathBuf>,
    stop_after: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = EmOptions { resume, stop_after };
    let m = py.detach(|| commands::cmd_em(&config.0, &opts)).map_err(err)?;
    em_dict(py, &m)
}

#[pyfunction]
fn reason<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = py.detach(|| commands::cmd_reason(&config.0)).map_err(err)?;
    reason_dicts(py, &rows)
}

/// Writes the configured dataset; returns the manifest path.
#[pyfunction]
fn gen_data(config: &PyConfig) -> PyResult<PathBuf> {
    commands::cmd_gen_data(&config.0).map_err(err)
}

#[pyfunction]
fn evaluate<'py>(py: Python<'py>, checkpoint: PathBuf, out: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    match py.detach(|| commands::cmd_eval(&checkpoint, &out)).map_err(err)? {
        EvalReport::Supervised(m) => Ok(node_dict(py, &m)?.into_any()),
        EvalReport::Em(m) => Ok(em_dict(py, &m)?.into_any()),
        EvalReport::Reasoning(rows) => Ok(reason_dicts(py, &rows)?.into_pyobject(py)?.into_any()),
    }
}

/// Runs a node-denoiser checkpoint; returns predictions, metrics (when the
/// graphs are labeled) and the per-step accuracy trace.
#[pyfunction]
#[pyo3(signature = (checkpoint, out, graph = None, *, lambda_ = None, samples = None, mode = None, seed = None))]
#[allow(clippy::too_many_arguments)]
fn infer<'py>(
    py: Python<'py>,
    checkpoint: PathBuf,
    out: PathBuf,
    graph: Option<PathBuf>,
    lambda_: Option<f64>,
    samples: Option<usize>,
    mode: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let req = InferRequest {
        checkpoint,
        graph,
        out,
        overrides: Overrides {
            seed,
            lambda: lambda_,
            samples,
            mode: mode.map(parse_mode).transpose()?,
            ..Default::default()
        },
    };
    let report = py.detach(|| commands::cmd_infer(&req)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("predictions", report.predictions)?;
    d.set_item("metrics", report.metrics.map(|m| node_dict(py, &m)).transpose()?)?;
    d.set_item("trace", report.trace)?;
    Ok(d)
}

#[pymodule]
fn graphdiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("GraphDiffError", py.get_type::<GraphDiffError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericError", py.get_type::<NumericError>())?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(node_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(graph_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(micro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_samples, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(em, m)?)?;
    m.add_function(wrap_pyfunction!(reason, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    Ok(())
}
