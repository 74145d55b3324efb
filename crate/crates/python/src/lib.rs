//! Python bindings: scenarios, the step-level environment, rule-based and PPO
//! dispatch, and KPI comparison.
//!
//! ```python
//! import microgrid_ems as mg
//! scen = mg.Scenario.synthetic(days=7, seed=1)
//! rbc = mg.simulate_rbc(scen, seed=3)
//! print(rbc.kpis()["operational_cost"])
//! ```

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use microgrid_core::kpi::comparison_report;
use microgrid_core::ppo::{self, Checkpoint, PolicyNet};
use microgrid_core::{
    compute_kpis, rbc_episode, synth_scenario, DeviceFleet, EnvConfig, MgAction, MgError,
    MicrogridEnv, RunConfig, SynthConfig,
};

fn py_err(e: MgError) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any().unbind(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn run_config(config: Option<&str>, seed: u64) -> PyResult<RunConfig> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path).map_err(py_err)?,
        None => RunConfig::default(),
    };
    cfg.seed = seed;
    Ok(cfg)
}

fn env_config(
    scenario: &Scenario,
    config: Option<&str>,
    seed: u64,
    horizon: Option<usize>,
) -> PyResult<(RunConfig, EnvConfig)> {
    let mut cfg = run_config(config, seed)?;
    cfg.env.horizon = horizon;
    let env = cfg.env_config(scenario.inner.clone()).map_err(py_err)?;
    Ok((cfg, env))
}

/// Aligned load, irradiance, wind and tariff series.
#[pyclass(module = "microgrid_ems")]
#[derive(Clone)]
struct Scenario {
    inner: Arc<microgrid_core::Scenario>,
}

#[pymethods]
impl Scenario {
    /// Deterministic synthetic scenario of `days` hourly steps.
    #[staticmethod]
    #[pyo3(signature = (days=365, seed=2024, peak_load_kw=100.0))]
    fn synthetic(days: usize, seed: u64, peak_load_kw: f64) -> PyResult<Self> {
        let cfg = SynthConfig {
            days,
            seed,
            peak_load_kw,
            ..Default::default()
        };
        let s = synth_scenario(&cfg).map_err(py_err)?;
        Ok(Self { inner: Arc::new(s) })
    }

    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let s = microgrid_core::load_scenario(path).map_err(py_err)?;
        Ok(Self { inner: Arc::new(s) })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path).map_err(py_err)
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.stats())
    }

    #[getter]
    fn load_kw(&self) -> Vec<f64> {
        self.inner.load_kw.clone()
    }

    #[getter]
    fn dt_h(&self) -> f64 {
        self.inner.dt_h
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, steps={})", self.inner.meta.name, self.inner.len())
    }
}

/// Step-level microgrid environment.
#[pyclass(module = "microgrid_ems")]
struct Microgrid {
    env: MicrogridEnv,
}

#[pymethods]
impl Microgrid {
    #[new]
    #[pyo3(signature = (scenario, seed=0, horizon=None, config=None))]
    fn new(scenario: &Scenario, seed: u64, horizon: Option<usize>, config: Option<&str>) -> PyResult<Self> {
        let (_, cfg) = env_config(scenario, config, seed, horizon)?;
        let env = MicrogridEnv::new(cfg).map_err(py_err)?;
        Ok(Self { env })
    }

    /// Restart the episode and return the initial state.
    fn reset(&mut self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = self.env.reset();
        to_py(py, &s)
    }

    /// Apply a battery (positive = discharge) and diesel setpoint in kW.
    /// Returns `(next_state, record)`.
    fn step(&mut self, py: Python<'_>, p_bat_kw: f64, p_dg_kw: f64) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
        let (state, rec) = self.env.step(&MgAction::new(p_bat_kw, p_dg_kw)).map_err(py_err)?;
        Ok((to_py(py, &state)?, to_py(py, &rec)?))
    }

    #[getter]
    fn state(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, self.env.state())
    }

    #[getter]
    fn done(&self) -> bool {
        self.env.is_done()
    }
}

/// Recorded episode with the fleet it ran on.
#[pyclass(module = "microgrid_ems")]
struct Trajectory {
    inner: microgrid_core::Trajectory,
    fleet: DeviceFleet,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn scenario_hash(&self) -> String {
        self.inner.scenario_hash.clone()
    }

    fn kpis(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let k = compute_kpis(&self.inner, &self.fleet).map_err(py_err)?;
        to_py(py, &k)
    }

    fn records(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.records)
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Trained PPO actor-critic.
#[pyclass(module = "microgrid_ems")]
struct Policy {
    checkpoint: Checkpoint,
}

impl Policy {
    fn net(&self) -> &PolicyNet {
        &self.checkpoint.net
    }
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            checkpoint: Checkpoint::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.checkpoint.save(path).map_err(py_err)
    }

    /// Greedy rollout over the scenario.
    #[pyo3(signature = (scenario, seed=0, horizon=None, config=None))]
    fn evaluate(
        &self,
        py: Python<'_>,
        scenario: &Scenario,
        seed: u64,
        horizon: Option<usize>,
        config: Option<&str>,
    ) -> PyResult<Trajectory> {
        let (_, env) = env_config(scenario, config, seed, horizon)?;
        let net = self.net();
        let traj = py.detach(|| ppo::evaluate(net, &env)).map_err(py_err)?;
        Ok(Trajectory {
            inner: traj,
            fleet: env.fleet,
        })
    }

    /// Scaled greedy action `(p_bat_kw, p_dg_kw)` for a state dict as returned by `Microgrid`.
    fn act(&self, state: &Bound<'_, PyDict>) -> PyResult<(f64, f64)> {
        let get = |k: &str| -> PyResult<Bound<'_, PyAny>> {
            state
                .get_item(k)?
                .ok_or_else(|| PyValueError::new_err(format!("state is missing `{k}`")))
        };
        let s = microgrid_core::MgState {
            soc: get("soc")?.extract()?,
            hour: get("hour")?.extract()?,
            p_pv_avail: get("p_pv_avail")?.extract()?,
            p_w_avail: get("p_w_avail")?.extract()?,
            p_load: get("p_load")?.extract()?,
            grid_up: get("grid_up")?.extract()?,
            t: get("t")?.extract()?,
        };
        let a = self.net().greedy(&s).map_err(py_err)?;
        Ok((a.p_bat_kw, a.p_dg_kw))
    }

    /// Per-update training log.
    fn log(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.checkpoint.log)
    }
}

/// Run the rule-based controller over the scenario.
#[pyfunction]
#[pyo3(signature = (scenario, seed=0, horizon=None, config=None))]
fn simulate_rbc(
    scenario: &Scenario,
    seed: u64,
    horizon: Option<usize>,
    config: Option<&str>,
) -> PyResult<Trajectory> {
    let (_, env) = env_config(scenario, config, seed, horizon)?;
    let traj = rbc_episode(&env).map_err(py_err)?;
    Ok(Trajectory {
        inner: traj,
        fleet: env.fleet,
    })
}

/// Train a PPO policy on the scenario. The GIL is released while training.
#[pyfunction]
#[pyo3(signature = (scenario, seed=0, total_steps=None, rollout_length=None, workers=None, config=None))]
fn train_ppo(
    py: Python<'_>,
    scenario: &Scenario,
    seed: u64,
    total_steps: Option<usize>,
    rollout_length: Option<usize>,
    workers: Option<usize>,
    config: Option<&str>,
) -> PyResult<Policy> {
    let (mut cfg, env) = env_config(scenario, config, seed, None)?;
    if let Some(n) = total_steps {
        cfg.train.total_steps = n;
    }
    if let Some(n) = rollout_length {
        cfg.train.rollout_length = n;
        cfg.train.minibatch_size = cfg.train.minibatch_size.min(n);
    }
    if let Some(n) = workers {
        cfg.train.workers = n;
    }
    let train_cfg = cfg.train_config();
    let outcome = py
        .detach(|| ppo::train(&env, &train_cfg, None, |_| Ok(())))
        .map_err(py_err)?;
    Ok(Policy {
        checkpoint: outcome.checkpoint,
    })
}

/// Compare a candidate against the rule-based baseline. Returns `(report, table)`.
#[pyfunction]
fn compare(py: Python<'_>, rbc: &Trajectory, ppo: &Trajectory) -> PyResult<(Py<PyAny>, String)> {
    let a = compute_kpis(&rbc.inner, &rbc.fleet).map_err(py_err)?;
    let b = compute_kpis(&ppo.inner, &ppo.fleet).map_err(py_err)?;
    let report = comparison_report(&a, &b).map_err(py_err)?;
    Ok((to_py(py, &report)?, report.to_text_table()))
}

#[pymodule]
fn microgrid_ems(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Microgrid>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(simulate_rbc, m)?)?;
    m.add_function(wrap_pyfunction!(train_ppo, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
