//! Python bindings. Structured results (observations, KPIs, schedules,
//! violations) come back as plain dicts and lists.

use std::sync::Arc;

use batchshop::env::{rollout, Action, Env, Features, RewardConfig};
use batchshop::eval::{compute_kpis, render_gantt, validate_schedule, GanttFormat, ScheduleDoc};
use batchshop::io::{generate_instance, load_instance, parse_instance, serialize_instance, Format, GenSpec};
use batchshop::policies::{
    brute_force_optimal, evaluate_policy, train_pg, train_q, Agent, ExactConfig, Mode, Objective, PgHyperparams, PolicyFile,
    PolicyKind, QHyperparams,
};
use batchshop::{Error, Instance};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::GuardExceeded(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn reward_preset(name: &str) -> PyResult<RewardConfig> {
    match name {
        "makespan" => Ok(RewardConfig::makespan()),
        "tardiness" => Ok(RewardConfig::tardiness()),
        "dense" => Ok(RewardConfig::default()),
        _ => Err(PyValueError::new_err(format!("unknown reward preset {name:?}; expected makespan, tardiness or dense"))),
    }
}

fn heuristic(name: &str) -> PyResult<PolicyKind> {
    Ok(match name.to_ascii_uppercase().as_str() {
        "FCFS" => PolicyKind::Fcfs,
        "EDD" => PolicyKind::Edd,
        "SPT" => PolicyKind::Spt,
        "LPT" => PolicyKind::Lpt,
        "RANDOM" => PolicyKind::Random,
        _ => return Err(PyValueError::new_err(format!("unknown rule {name:?}"))),
    })
}

fn parse_schedule(text: &str) -> PyResult<ScheduleDoc> {
    ScheduleDoc::from_json(text).map_err(err)
}

#[pyclass(name = "Instance", module = "batchshop", frozen)]
#[derive(Clone)]
struct PyInstance {
    inner: Arc<Instance>,
}

#[pymethods]
impl PyInstance {
    /// The bundled 3 jobs x 3 machines example.
    #[staticmethod]
    fn paper() -> Self {
        PyInstance { inner: Arc::new(batchshop::io::paper_instance()) }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: Arc::new(load_instance(path).map_err(err)?) })
    }

    #[staticmethod]
    #[pyo3(signature = (text, format = "toml"))]
    fn parse(text: &str, format: &str) -> PyResult<Self> {
        let format = match format {
            "toml" => Format::Toml,
            "json" => Format::Json,
            _ => return Err(PyValueError::new_err("format must be toml or json")),
        };
        Ok(PyInstance { inner: Arc::new(parse_instance(text, format).map_err(err)?) })
    }

    #[staticmethod]
    fn generate(seed: u64, jobs: usize, machines: usize) -> PyResult<Self> {
        Ok(PyInstance { inner: Arc::new(generate_instance(&GenSpec::sized(seed, jobs, machines)).map_err(err)?) })
    }

    #[getter]
    fn n_jobs(&self) -> usize {
        self.inner.n_jobs()
    }

    #[getter]
    fn n_machines(&self) -> usize {
        self.inner.n_machines()
    }

    #[getter]
    fn total_ops(&self) -> usize {
        self.inner.total_ops()
    }

    #[getter]
    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn to_json(&self) -> String {
        serialize_instance(&self.inner, Format::Json)
    }

    fn __repr__(&self) -> String {
        format!("Instance({} jobs, {} machines)", self.inner.n_jobs(), self.inner.n_machines())
    }
}

#[pyclass(name = "Env", module = "batchshop")]
struct PyEnv {
    inner: Env,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (instance, reward = "makespan", presetup = false))]
    fn new(instance: &PyInstance, reward: &str, presetup: bool) -> PyResult<Self> {
        let env = Env::new(instance.inner.clone(), reward_preset(reward)?, Features { presetup }).map_err(err)?;
        Ok(PyEnv { inner: env })
    }

    fn reset(&mut self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.reset())
    }

    fn observe(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.observe())
    }

    /// Eligibility per flat action index.
    fn mask(&self) -> Vec<bool> {
        self.inner.eligible_actions()
    }

    /// Applies the action at `index`; returns `(observation, reward, done, info)`.
    fn step(&mut self, py: Python<'_>, index: usize) -> PyResult<(PyObject, f64, bool, PyObject)> {
        let r = self.inner.step_index(index).map_err(err)?;
        Ok((to_py(py, &r.observation)?, r.reward, r.done, to_py(py, &r.info)?))
    }

    fn assign_index(&self, job: usize) -> PyResult<usize> {
        self.inner.action_space().index(Action::Assign { job }).ok_or_else(|| PyValueError::new_err(format!("no job {job}")))
    }

    #[getter]
    fn noop_index(&self) -> usize {
        self.inner.action_space().noop_index()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.action_space().len()
    }

    #[getter]
    fn clock(&self) -> f64 {
        self.inner.clock()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    fn kpis(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.kpis())
    }

    /// The schedule so far as a schedule document (JSON text).
    fn schedule_json(&self) -> String {
        ScheduleDoc::new(&self.inner.schedule(), self.inner.kpis()).to_json()
    }
}

#[pyclass(name = "Policy", module = "batchshop", frozen)]
struct PyPolicy {
    inner: PolicyKind,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn rule(name: &str) -> PyResult<Self> {
        Ok(PyPolicy { inner: heuristic(name)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyPolicy { inner: PolicyFile::from_json(text).map_err(err)?.policy })
    }

    fn to_json(&self) -> String {
        PolicyFile::new(self.inner.clone()).to_json()
    }

    #[getter]
    fn label(&self) -> &'static str {
        self.inner.label()
    }

    /// Makespans of `rollouts` episodes; `mode` is greedy or sample.
    #[pyo3(signature = (instance, rollouts = 1, mode = "greedy", seed = 0, reward = "makespan"))]
    fn evaluate(&self, instance: &PyInstance, rollouts: usize, mode: &str, seed: u64, reward: &str) -> PyResult<Vec<f64>> {
        let mode = match mode {
            "greedy" => Mode::Greedy,
            "sample" => Mode::Sample,
            _ => return Err(PyValueError::new_err("mode must be greedy or sample")),
        };
        let e = evaluate_policy(instance.inner.clone(), &self.inner, reward_preset(reward)?, Features::default(), mode, rollouts, seed)
            .map_err(err)?;
        Ok(e.makespans)
    }

    /// One greedy rollout; returns the schedule document as JSON text.
    #[pyo3(signature = (instance, seed = 0))]
    fn plan(&self, instance: &PyInstance, seed: u64) -> PyResult<String> {
        self.inner.check_compatible(&instance.inner, Features::default()).map_err(err)?;
        let env = Env::new(instance.inner.clone(), RewardConfig::makespan(), Features::default()).map_err(err)?;
        let r = rollout(env, &mut Agent::greedy(self.inner.clone()), seed).map_err(err)?;
        Ok(ScheduleDoc::new(&r.schedule, r.kpis).to_json())
    }
}

/// Exact optimum; returns `{"value", "actions", "schedule", "kpis", "nodes"}`.
#[pyfunction]
#[pyo3(signature = (instance, objective = "makespan", node_limit = 10_000_000))]
fn solve_exact(py: Python<'_>, instance: &PyInstance, objective: &str, node_limit: usize) -> PyResult<PyObject> {
    let objective = match objective {
        "makespan" => Objective::Makespan,
        "tardiness" => Objective::TotalTardiness,
        _ => return Err(PyValueError::new_err("objective must be makespan or tardiness")),
    };
    let config = ExactConfig { node_limit, ..Default::default() };
    let r = py.allow_threads(|| brute_force_optimal(instance.inner.clone(), objective, config)).map_err(err)?;
    #[derive(Serialize)]
    struct Out {
        value: f64,
        actions: Vec<Action>,
        schedule: ScheduleDoc,
        nodes: usize,
    }
    let schedule = ScheduleDoc::new(&r.schedule, r.kpis);
    to_py(py, &Out { value: r.value, actions: r.actions, schedule, nodes: r.nodes })
}

/// Tabular Q-learning. `hyperparams` is a JSON object overriding defaults.
#[pyfunction]
#[pyo3(signature = (instance, reward = "makespan", hyperparams = None))]
fn train_tabular_q(py: Python<'_>, instance: &PyInstance, reward: &str, hyperparams: Option<&str>) -> PyResult<PyPolicy> {
    let hp: QHyperparams = match hyperparams {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => QHyperparams::default(),
    };
    let reward = reward_preset(reward)?;
    let q = py.allow_threads(|| train_q(instance.inner.clone(), reward, Features::default(), &hp)).map_err(err)?;
    Ok(PyPolicy { inner: PolicyKind::TabularQ { table: q.table } })
}

/// Clipped policy-gradient training of the neural policy.
#[pyfunction]
#[pyo3(signature = (instance, reward = "makespan", hyperparams = None))]
fn train_neural(py: Python<'_>, instance: &PyInstance, reward: &str, hyperparams: Option<&str>) -> PyResult<PyPolicy> {
    let hp: PgHyperparams = match hyperparams {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => PgHyperparams::default(),
    };
    let reward = reward_preset(reward)?;
    let pg = py.allow_threads(|| train_pg(instance.inner.clone(), reward, Features::default(), &hp)).map_err(err)?;
    Ok(PyPolicy { inner: PolicyKind::Neural { params: pg.policy } })
}

/// Violations of a schedule document against the instance; empty means valid.
#[pyfunction]
fn validate(py: Python<'_>, instance: &PyInstance, schedule_json: &str) -> PyResult<PyObject> {
    let doc = parse_schedule(schedule_json)?;
    to_py(py, &validate_schedule(&instance.inner, &doc.schedule()).map_err(err)?)
}

#[pyfunction]
fn kpis(py: Python<'_>, instance: &PyInstance, schedule_json: &str) -> PyResult<PyObject> {
    let doc = parse_schedule(schedule_json)?;
    to_py(py, &compute_kpis(&instance.inner, &doc.schedule()).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (instance, schedule_json, format = "svg"))]
fn gantt(instance: &PyInstance, schedule_json: &str, format: &str) -> PyResult<String> {
    let format = match format {
        "svg" => GanttFormat::Svg,
        "text" => GanttFormat::Text,
        _ => return Err(PyValueError::new_err("format must be svg or text")),
    };
    Ok(render_gantt(&instance.inner, &parse_schedule(schedule_json)?.schedule(), format))
}

#[pymodule]
#[pyo3(name = "batchshop")]
fn batchshop_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(solve_exact, m)?)?;
    m.add_function(wrap_pyfunction!(train_tabular_q, m)?)?;
    m.add_function(wrap_pyfunction!(train_neural, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(kpis, m)?)?;
    m.add_function(wrap_pyfunction!(gantt, m)?)?;
    Ok(())
}
