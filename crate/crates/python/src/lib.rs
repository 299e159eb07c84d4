//! Python bindings: datasets, policies, episodes, metrics, training and
//! evaluation. Results come back as plain dicts and lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use flowdev::env::dataset::{gen_dataset, Dataset, DatasetConfig};
use flowdev::env::metrics;
use flowdev::env::types::{DocId, Token};
use flowdev::flow::{run_episode as run_flow, FlowSpec, NodeRole, SelectionMode, Variant};
use flowdev::policy::{FeatureMap, FlowPolicies};
use flowdev::train::config::{parse_hop_mix, KvConfig};
use flowdev::train::{evaluate as eval_flow, train as train_flow, Checkpoint, EvalFlags, TrainConfig, TrainState};
use flowdev::FlowError;

fn err(e: FlowError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Dataset", module = "pyflowdev", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Synthetic dataset. `hop_mix` like "2:0.5,3:0.3,4:0.2".
    #[staticmethod]
    #[pyo3(signature = (n_instances=2000, variant="answerable", seed=0, hop_mix=None, max_retrievals=4))]
    fn generate(n_instances: usize, variant: &str, seed: u64, hop_mix: Option<&str>, max_retrievals: usize) -> PyResult<Self> {
        let mut cfg = DatasetConfig { n_instances, variant: variant.parse().map_err(err)?, max_retrievals, ..DatasetConfig::default() };
        if let Some(m) = hop_mix {
            cfg.hop_mix = parse_hop_mix(m).map_err(err)?;
        }
        let inner = Dataset::new(gen_dataset(&cfg, seed).map_err(err)?).map_err(err)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, max_retrievals=4))]
    fn load(path: PathBuf, max_retrievals: usize) -> PyResult<Self> {
        Ok(PyDataset { inner: Dataset::read_jsonl(&path, max_retrievals).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_jsonl(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn variant(&self) -> &'static str {
        match self.inner.variant {
            Variant::Answerable => "answerable",
            Variant::Full => "full",
        }
    }

    fn instance(&self, py: Python<'_>, index: usize) -> PyResult<Py<PyAny>> {
        let inst = self.inner.instances.get(index).ok_or_else(|| PyIndexError::new_err(index))?;
        json_to_py(py, inst)
    }
}

#[pyclass(name = "Policies", module = "pyflowdev", skip_from_py_object)]
#[derive(Clone)]
struct PyPolicies {
    flow: FlowSpec,
    inner: FlowPolicies,
}

fn flow_of(variant: &str, max_retrievals: usize) -> PyResult<FlowSpec> {
    FlowSpec::new(variant.parse().map_err(err)?, max_retrievals).map_err(err)
}

#[pymethods]
impl PyPolicies {
    /// Hand-set starting weights.
    #[staticmethod]
    #[pyo3(signature = (variant="answerable", max_retrievals=4))]
    fn prior(variant: &str, max_retrievals: usize) -> PyResult<Self> {
        let flow = flow_of(variant, max_retrievals)?;
        Ok(PyPolicies { flow, inner: FlowPolicies::default_prior(&flow) })
    }

    #[staticmethod]
    #[pyo3(signature = (variant="answerable", max_retrievals=4))]
    fn zeros(variant: &str, max_retrievals: usize) -> PyResult<Self> {
        let flow = flow_of(variant, max_retrievals)?;
        Ok(PyPolicies { flow, inner: FlowPolicies::zeros(&flow, FeatureMap::new(), flowdev::optim::DEFAULT_ALPHA) })
    }

    #[staticmethod]
    fn from_checkpoint(path: PathBuf) -> PyResult<Self> {
        let c = Checkpoint::read(&path).map_err(err)?;
        Ok(PyPolicies { flow: c.flow, inner: c.policies })
    }

    fn roles(&self) -> Vec<&'static str> {
        self.inner.nodes.keys().map(|r| r.name()).collect()
    }

    fn weights(&self, role: &str) -> PyResult<Vec<f64>> {
        let role = NodeRole::ALL
            .into_iter()
            .find(|r| r.name() == role)
            .ok_or_else(|| PyValueError::new_err(format!("unknown role {role}")))?;
        Ok(self.inner.get(role).map_err(err)?.weights.clone())
    }
}

/// One greedy episode; returns scores and the visited roles.
#[pyfunction]
fn run_episode(py: Python<'_>, policies: &PyPolicies, dataset: &PyDataset, index: usize) -> PyResult<Py<PyAny>> {
    let inst = dataset.inner.instances.get(index).ok_or_else(|| PyIndexError::new_err(index))?;
    let t = run_flow(&policies.flow, &policies.inner, inst, SelectionMode::Greedy, 0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("answer_f1", t.outcome.answer_f1)?;
    d.set_item("support_f1", t.outcome.support_f1)?;
    d.set_item("sufficiency_correct", t.outcome.sufficiency_correct)?;
    d.set_item("roles", t.invocations.iter().map(|i| i.role.name()).collect::<Vec<_>>())?;
    d.set_item("scratchpad", t.final_state.scratchpad.iter().map(|id| id.0).collect::<Vec<_>>())?;
    d.set_item("answer", t.final_state.concise_answer.unwrap_or_default().iter().map(|x| x.to_string()).collect::<Vec<_>>())?;
    Ok(d.into_any().unbind())
}

fn tokens(xs: Vec<String>) -> PyResult<Vec<Token>> {
    xs.iter().map(|s| s.parse::<Token>().map_err(err)).collect()
}

/// Set F1 against the best of several gold answers; tokens like "e3", "r1".
#[pyfunction]
fn answer_f1(predicted: Vec<String>, gold: Vec<Vec<String>>) -> PyResult<f64> {
    let gold = gold.into_iter().map(tokens).collect::<PyResult<Vec<_>>>()?;
    Ok(metrics::answer_f1(&tokens(predicted)?, &gold))
}

#[pyfunction]
fn support_f1(retrieved: Vec<u32>, gold: Vec<u32>) -> f64 {
    let ids = |v: Vec<u32>| v.into_iter().map(DocId).collect::<Vec<_>>();
    metrics::support_f1(&ids(retrieved), &ids(gold))
}

/// Single online pass. `config` holds the same keys as a config file.
/// Returns (policies, summary dict).
#[pyfunction]
#[pyo3(signature = (dataset, config=None, out_dir=None))]
fn train(py: Python<'_>, dataset: &PyDataset, config: Option<BTreeMap<String, String>>, out_dir: Option<PathBuf>) -> PyResult<(PyPolicies, Py<PyAny>)> {
    let c = match config {
        Some(map) => TrainConfig::from_kv(&KvConfig(map)).map_err(err)?,
        None => TrainConfig::default(),
    };
    let ds = &dataset.inner;
    let out = py.detach(|| train_flow(ds, &c, None)).map_err(err)?;
    if let Some(dir) = out_dir {
        out.write(&dir, &c).map_err(err)?;
    }
    let pv = &out.state.pv;
    let d = PyDict::new(py);
    d.set_item("episodes", out.state.cursor.episodes_seen)?;
    d.set_item("pv_answer_f1", pv.answer_f1.mean())?;
    d.set_item("pv_support_f1", pv.support_f1.mean())?;
    d.set_item("tail_answer_f1", pv.answer_f1.tail_mean(0.2))?;
    d.set_item("tail_support_f1", pv.support_f1.tail_mean(0.2))?;
    d.set_item("metrics", json_to_py(py, &out.metrics)?)?;
    let TrainState { flow, policies, .. } = out.state;
    Ok((PyPolicies { flow, inner: policies }, d.into_any().unbind()))
}

#[pyfunction]
#[pyo3(signature = (dataset, policies, enforce_grounded=false, pairwise=false))]
fn evaluate(py: Python<'_>, dataset: &PyDataset, policies: &PyPolicies, enforce_grounded: bool, pairwise: bool) -> PyResult<Py<PyAny>> {
    let flags = EvalFlags { enforce_grounded, pairwise };
    let report = py.detach(|| eval_flow(&dataset.inner, &policies.flow, &policies.inner, flags)).map_err(err)?;
    json_to_py(py, &report)
}

#[pymodule]
fn pyflowdev(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPolicies>()?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(answer_f1, m)?)?;
    m.add_function(wrap_pyfunction!(support_f1, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
