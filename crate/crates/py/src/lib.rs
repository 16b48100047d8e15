//! Python bindings: configuration, the decision-level environment, policies,
//! training, evaluation and replay verification.

use std::path::PathBuf;
use std::sync::Arc;

use bvr_core::episode::verify_log as core_verify_log;
use bvr_core::harness::{evaluate as core_evaluate, train as core_train, PolicySpec, BASELINES};
use bvr_core::mdp::{build_observation, dca_index, BvrEnv, EnvSettings, Observation, Policy, PolicyAction, BLUE, RED};
use bvr_core::rainbow::{action_values, load_checkpoint, save_checkpoint, NetworkParams, NoiseMode};
use bvr_core::simcore::EntityId;
use bvr_core::tactics::TacticAction;
use bvr_core::{BvrError, RunConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: BvrError) -> PyErr {
    match e {
        BvrError::InvalidConfig(_) | BvrError::ConfigParse { .. } | BvrError::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn side_id(side: &str) -> PyResult<EntityId> {
    match side.to_ascii_lowercase().as_str() {
        "blue" => Ok(BLUE),
        "red" => Ok(RED),
        _ => Err(PyValueError::new_err(format!("side must be 'blue' or 'red', got {side:?}"))),
    }
}

fn policy_action(action: Option<usize>) -> PyResult<PolicyAction> {
    action.map_or(Ok(PolicyAction::Hold), |a| tactic(a).map(PolicyAction::Tactic))
}

fn tactic(action: usize) -> PyResult<TacticAction> {
    TacticAction::from_index(action)
        .ok_or_else(|| PyValueError::new_err(format!("action must be in 0..{}, got {action}", TacticAction::COUNT)))
}

fn settings_of(config: Option<&Config>) -> EnvSettings {
    match config {
        Some(c) => EnvSettings::from(&c.inner),
        None => EnvSettings::from(&RunConfig::default()),
    }
}

/// Full run configuration; round-trips through TOML.
#[pyclass(module = "bvr", skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    fn new() -> Self {
        Self {
            inner: RunConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml_str(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(&path).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn total_steps(&self) -> u64 {
        self.inner.train.total_steps
    }

    #[setter]
    fn set_total_steps(&mut self, v: u64) {
        self.inner.train.total_steps = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.train.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.train.seed = v;
    }

    #[getter]
    fn workers(&self) -> usize {
        self.inner.train.workers
    }

    #[setter]
    fn set_workers(&mut self, v: usize) {
        self.inner.train.workers = v;
    }

    #[getter]
    fn hidden(&self) -> Vec<usize> {
        self.inner.rainbow.hidden.clone()
    }

    #[setter]
    fn set_hidden(&mut self, v: Vec<usize>) {
        self.inner.rainbow.hidden = v;
    }

    fn __eq__(&self, other: &Config) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(total_steps={}, seed={}, hidden={:?})",
            self.inner.train.total_steps, self.inner.train.seed, self.inner.rainbow.hidden
        )
    }
}

/// A scripted baseline or a trained network, acting without noise.
#[pyclass(module = "bvr", unsendable)]
struct Agent {
    spec: PolicySpec,
    policy: Box<dyn Policy>,
}

impl Agent {
    fn from_spec(spec: PolicySpec) -> Self {
        let policy = spec.build(NoiseMode::Zero, 0);
        Self { spec, policy }
    }

    fn params(&self) -> PyResult<&Arc<NetworkParams<f32>>> {
        match &self.spec {
            PolicySpec::Checkpoint { params, .. } => Ok(params),
            PolicySpec::Baseline(n) => Err(PyValueError::new_err(format!("{n} is a scripted baseline"))),
        }
    }
}

#[pymethods]
impl Agent {
    #[staticmethod]
    fn baseline(name: &str) -> PyResult<Self> {
        PolicySpec::baseline(name).map(Self::from_spec).ok_or_else(|| {
            PyValueError::new_err(format!("unknown baseline {name:?}; choose from {}", BASELINES.join(", ")))
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, name=None))]
    fn load(path: PathBuf, name: Option<String>) -> PyResult<Self> {
        let params = load_checkpoint(&path).map_err(py_err)?;
        let name = name.unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        Ok(Self::from_spec(PolicySpec::checkpoint(name, params)))
    }

    /// Freshly initialised network for `config`.
    #[staticmethod]
    #[pyo3(signature = (seed=0, config=None))]
    fn untrained(seed: u64, config: Option<&Config>) -> Self {
        let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_spec(PolicySpec::checkpoint("untrained", NetworkParams::for_env(&cfg.rainbow, &mut rng)))
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name().to_string()
    }

    #[getter]
    fn is_network(&self) -> bool {
        matches!(self.spec, PolicySpec::Checkpoint { .. })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(self.params()?.as_ref(), &path).map_err(py_err)
    }

    /// Expected return of each action for a 16-value observation.
    fn q_values(&self, observation: Vec<f64>) -> PyResult<Vec<f64>> {
        let obs: [f64; 16] = observation
            .try_into()
            .map_err(|v: Vec<f64>| PyValueError::new_err(format!("observation needs 16 values, got {}", v.len())))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        action_values(self.params()?.as_ref(), &Observation(obs), NoiseMode::Zero, &mut rng).map_err(py_err)
    }

    /// Action this policy picks for `side` in the current state of `env`;
    /// None means hold heading, altitude and speed.
    #[pyo3(signature = (env, side=None))]
    fn act(&mut self, env: &Env, side: Option<&str>) -> PyResult<Option<usize>> {
        let side = side.map(side_id).transpose()?.unwrap_or(env.inner.agent());
        Ok(match self.policy.act(env.inner.world(), side, env.inner.settings()) {
            PolicyAction::Tactic(t) => Some(t.index()),
            PolicyAction::Hold => None,
        })
    }

    fn __repr__(&self) -> String {
        format!("Agent({:?})", self.spec.name())
    }
}

/// One engagement stepped one decision at a time.
#[pyclass(module = "bvr", unsendable)]
struct Env {
    inner: BvrEnv,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (seed=0, side="blue", config=None))]
    fn new(seed: u64, side: &str, config: Option<&Config>) -> PyResult<Self> {
        Ok(Self {
            inner: BvrEnv::new(settings_of(config), seed, side_id(side)?),
        })
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed).0.to_vec()
    }

    /// Observation of the agent side, or of `side` when given.
    #[pyo3(signature = (side=None))]
    fn observation(&self, side: Option<&str>) -> PyResult<Vec<f64>> {
        let side = side.map(side_id).transpose()?.unwrap_or(self.inner.agent());
        Ok(build_observation(self.inner.world(), side, &self.inner.settings().sim).0.to_vec())
    }

    /// Advances one decision. Actions are indices into ACTIONS or None to
    /// hold; `opponent` may also be an Agent. Returns (observation, reward,
    /// done, outcome).
    #[pyo3(signature = (action, opponent=None))]
    fn step(
        &mut self,
        action: Option<usize>,
        opponent: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<(Vec<f64>, f64, bool, String)> {
        let a = policy_action(action)?;
        let b = match opponent {
            None => PolicyAction::Hold,
            Some(o) => match o.extract::<PyRefMut<'_, Agent>>() {
                Ok(mut agent) => agent.policy.act(self.inner.world(), self.inner.opponent(), self.inner.settings()),
                Err(_) => policy_action(Some(o.extract::<usize>()?))?,
            },
        };
        let r = self.inner.step_joint(a, b).map_err(py_err)?;
        Ok((r.observation.0.to_vec(), r.reward, r.done, r.outcome.as_str().to_string()))
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn outcome(&self) -> &'static str {
        self.inner.outcome().as_str()
    }

    #[getter]
    fn sim_time(&self) -> f64 {
        self.inner.world().sim_time
    }

    /// Geometric advantage index of the agent side.
    #[getter]
    fn dca(&self) -> f64 {
        let s = self.inner.settings();
        dca_index(self.inner.world(), self.inner.agent(), &s.reward, &s.sim)
    }
}

/// Zero-noise mirrored tournament; one dict per opponent.
#[pyfunction]
#[pyo3(signature = (subject, opponents, matches, seed=0, config=None, workers=1))]
fn evaluate<'py>(
    py: Python<'py>,
    subject: &Agent,
    opponents: Vec<PyRef<'py, Agent>>,
    matches: usize,
    seed: u64,
    config: Option<&Config>,
    workers: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let subject = subject.spec.clone();
    let opponents: Vec<PolicySpec> = opponents.iter().map(|o| o.spec.clone()).collect();
    let settings = settings_of(config);
    let table = py
        .detach(|| core_evaluate(&subject, &opponents, matches, seed, &settings, workers))
        .map_err(py_err)?;
    table
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("opponent", &r.opponent)?;
            d.set_item("matches", r.matches)?;
            d.set_item("wins", r.wins)?;
            d.set_item("losses", r.losses)?;
            d.set_item("draws", r.draws)?;
            d.set_item("win_rate", r.win_rate())?;
            d.set_item("mean_return", r.mean_return)?;
            d.set_item("mean_dca", r.mean_dca)?;
            d.set_item("action_freq", r.action_freq.clone())?;
            Ok(d)
        })
        .collect()
}

/// Runs training into `out` and returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config, out, resume=false))]
fn train<'py>(py: Python<'py>, config: &Config, out: PathBuf, resume: bool) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let s = py.detach(|| core_train(&cfg, &out, resume)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("env_steps", s.env_steps)?;
    d.set_item("episodes", s.episodes)?;
    d.set_item("learner_steps", s.learner_steps)?;
    d.set_item("final_checkpoint", s.final_checkpoint)?;
    d.set_item("metrics", s.metrics)?;
    d.set_item("snapshots", s.snapshots)?;
    Ok(d)
}

/// Re-simulates an episode log; returns the number of ticks checked.
#[pyfunction]
fn verify_log(py: Python<'_>, path: PathBuf) -> PyResult<usize> {
    py.detach(|| core_verify_log(&path)).map(|r| r.ticks).map_err(py_err)
}

#[pymodule]
pub fn bvr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("BASELINES", BASELINES.to_vec())?;
    m.add(
        "ACTIONS",
        TacticAction::ALL.iter().map(|a| a.name()).collect::<Vec<_>>(),
    )?;
    m.add_class::<Config>()?;
    m.add_class::<Agent>()?;
    m.add_class::<Env>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(verify_log, m)?)?;
    Ok(())
}
