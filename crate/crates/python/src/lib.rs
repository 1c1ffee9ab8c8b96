//! Python bindings for `swpomdp`.
//!
//! Models, window MDPs and the distance functions are exposed directly;
//! reports come back as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use swpomdp::builders::{build_example1, build_example3, Example2, MachineRepair};
use swpomdp::experiment::{run_experiment as run_experiment_rs, ExperimentConfig, Prepared};
use swpomdp::filter::window_posterior as window_posterior_rs;
use swpomdp::metrics;
use swpomdp::qlearning::{run_q_learning, CostSignal, QLearningSettings};
use swpomdp::stability::{PriorSet, StabilityReport};
use swpomdp::window::{evaluate_window_policy, value_iteration as value_iteration_rs, PolicyProvenance};
use swpomdp::{Belief, Error, FinitePomdp, WindowMdp as WindowMdpRs, WindowPolicy, WindowState};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonConvergence { .. } | Error::CapExceeded { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_bound_py_any(py)?,
            (_, Some(u)) => u.into_bound_py_any(py)?,
            _ => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let dict = PyDict::new(py);
            for (k, x) in o {
                dict.set_item(k, json_to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn belief(v: Vec<f64>) -> PyResult<Belief> {
    Belief::new(v).map_err(py_err)
}

/// A finite POMDP with transition `T[u][x][x']`, channel `Q[x][y]` and cost
/// `c[x][u]`.
#[pyclass(name = "Pomdp", module = "swpomdp", frozen)]
struct PyPomdp {
    inner: FinitePomdp,
}

#[pymethods]
impl PyPomdp {
    #[new]
    #[pyo3(signature = (transition, observation, cost, discount, metric=None, name="model"))]
    fn new(
        transition: Vec<Vec<Vec<f64>>>,
        observation: Vec<Vec<f64>>,
        cost: Vec<Vec<f64>>,
        discount: f64,
        metric: Option<Vec<Vec<f64>>>,
        name: &str,
    ) -> PyResult<Self> {
        let inner = FinitePomdp::new(name, transition, observation, cost, discount, metric).map_err(py_err)?;
        Ok(PyPomdp { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (eps=0.3, kappa=0.3, theta=0.3, repair_cost=2.0, broken_cost=1.0, beta=0.8))]
    fn machine_repair(eps: f64, kappa: f64, theta: f64, repair_cost: f64, broken_cost: f64, beta: f64) -> PyResult<Self> {
        let mr = MachineRepair {
            eps,
            kappa,
            theta,
            repair_cost,
            broken_cost,
            beta,
        };
        Ok(PyPomdp {
            inner: mr.build().map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (eps, beta=0.8))]
    fn example1(eps: f64, beta: f64) -> PyResult<Self> {
        Ok(PyPomdp {
            inner: build_example1(eps, beta, None).map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (sigma, grid_size=20, p=1, beta=0.8, eps=0.1))]
    fn example2(sigma: f64, grid_size: usize, p: usize, beta: f64, eps: f64) -> PyResult<Self> {
        let e = Example2 {
            sigma,
            grid_size,
            p,
            beta,
            channel: None,
            eps,
        };
        Ok(PyPomdp {
            inner: e.build().map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (eps, beta=0.8))]
    fn example3(eps: f64, beta: f64) -> PyResult<Self> {
        Ok(PyPomdp {
            inner: build_example3(eps, beta, None).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyPomdp {
            inner: FinitePomdp::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    fn transition(&self, u: usize, x: usize, x2: usize) -> f64 {
        self.inner.transition(u, x, x2)
    }

    fn observation(&self, x: usize, y: usize) -> f64 {
        self.inner.observation(x, y)
    }

    fn cost(&self, x: usize, u: usize) -> f64 {
        self.inner.cost(x, u)
    }

    /// Violations as strings; empty when the model is valid.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(ToString::to_string).collect()
    }

    /// `alpha`, `k1`, `diameter` and `c_inf`.
    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let v = serde_json::to_value(self.inner.constants()).map_err(|e| py_err(e.into()))?;
        json_to_py(py, &v)
    }

    /// Stationary state law under i.i.d. actions (uniform by default).
    #[pyo3(signature = (exploration=None))]
    fn stationary_distribution(&self, exploration: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let nu = self.inner.n_actions();
        let e = exploration.unwrap_or_else(|| vec![1.0 / nu as f64; nu]);
        Ok(self.inner.stationary_distribution(&e).map_err(py_err)?.into_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Pomdp(name={:?}, states={}, observations={}, actions={}, discount={})",
            self.inner.name(),
            self.inner.n_states(),
            self.inner.n_obs(),
            self.inner.n_actions(),
            self.inner.discount()
        )
    }
}

/// The finite-window belief MDP built around `z_star`.
#[pyclass(name = "WindowMdp", module = "swpomdp", frozen)]
struct PyWindowMdp {
    inner: WindowMdpRs,
}

#[pymethods]
impl PyWindowMdp {
    #[new]
    fn new(py: Python<'_>, model: PyRef<'_, PyPomdp>, n: usize, z_star: Vec<f64>) -> PyResult<Self> {
        let z = belief(z_star)?;
        let m = &model.inner;
        let inner = py.detach(|| WindowMdpRs::build(m, n, &z)).map_err(py_err)?;
        Ok(PyWindowMdp { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Window code of `(obs, acts)`, oldest first.
    fn encode(&self, obs: Vec<usize>, acts: Vec<usize>) -> PyResult<u64> {
        let w = WindowState::new(obs, acts).map_err(py_err)?;
        if w.acts.len() != self.inner.n() {
            return Err(PyValueError::new_err(format!("window length must be {}", self.inner.n())));
        }
        if w.obs.iter().any(|&y| y >= self.inner.n_obs()) || w.acts.iter().any(|&u| u >= self.inner.n_actions()) {
            return Err(PyValueError::new_err("observation or action out of range"));
        }
        Ok(self.inner.space.encode(&w))
    }

    /// `(obs, acts)` of a window code.
    fn decode(&self, code: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
        self.check_code(code)?;
        let w = self.inner.space.decode(code);
        Ok((w.obs, w.acts))
    }

    fn posterior(&self, code: u64) -> PyResult<Vec<f64>> {
        self.check_code(code)?;
        Ok(self.inner.posterior(code).to_vec())
    }

    fn is_reachable(&self, code: u64) -> PyResult<bool> {
        self.check_code(code)?;
        Ok(self.inner.is_reachable(code))
    }

    fn cost(&self, code: u64, u: usize) -> PyResult<f64> {
        self.check_pair(code, u)?;
        Ok(self.inner.cost(code, u))
    }

    fn obs_probs(&self, code: u64, u: usize) -> PyResult<Vec<f64>> {
        self.check_pair(code, u)?;
        Ok(self.inner.obs_probs(code, u).to_vec())
    }

    fn successor(&self, code: u64, u: usize, y: usize) -> PyResult<u64> {
        self.check_pair(code, u)?;
        if y >= self.inner.n_obs() {
            return Err(PyValueError::new_err("observation out of range"));
        }
        Ok(self.inner.successor(code, u, y))
    }
}

impl PyWindowMdp {
    fn check_code(&self, code: u64) -> PyResult<()> {
        if code as usize >= self.inner.len() {
            return Err(PyValueError::new_err(format!("code {code} out of range ({} windows)", self.inner.len())));
        }
        Ok(())
    }

    fn check_pair(&self, code: u64, u: usize) -> PyResult<()> {
        self.check_code(code)?;
        if u >= self.inner.n_actions() {
            return Err(PyValueError::new_err("action out of range"));
        }
        Ok(())
    }
}

#[pyfunction]
fn tv_distance(mu: Vec<f64>, nu: Vec<f64>) -> PyResult<f64> {
    metrics::tv_distance(&mu, &nu).map_err(py_err)
}

/// Exact W1 with a row-major `n x n` ground metric; discrete when omitted.
#[pyfunction]
#[pyo3(signature = (mu, nu, metric=None))]
fn w1_distance(mu: Vec<f64>, nu: Vec<f64>, metric: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
    let n = mu.len();
    let flat: Vec<f64> = match metric {
        Some(m) => m.concat(),
        None => (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect(),
    };
    if flat.len() != n * n {
        return Err(PyValueError::new_err(format!("metric must be {n} x {n}")));
    }
    metrics::GroundMetric::new(&flat, n).w1(&mu, &nu).map_err(py_err)
}

#[pyfunction]
fn hilbert_metric(mu: Vec<f64>, nu: Vec<f64>) -> PyResult<f64> {
    metrics::hilbert_metric(&mu, &nu).map_err(py_err)
}

fn flatten_kernel(kernel: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, usize)> {
    let cols = kernel.first().map_or(0, Vec::len);
    if cols == 0 || kernel.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("kernel must be a non-empty rectangular matrix"));
    }
    Ok((kernel.concat(), cols))
}

#[pyfunction]
fn dobrushin(kernel: Vec<Vec<f64>>) -> PyResult<f64> {
    let (k, cols) = flatten_kernel(kernel)?;
    metrics::dobrushin(&k, cols).map_err(py_err)
}

/// `(eps, lambda)` of the best mixing bound.
#[pyfunction]
fn mixing_coefficient(kernel: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>)> {
    let (k, cols) = flatten_kernel(kernel)?;
    let m = metrics::mixing_coefficient(&k, cols).map_err(py_err)?;
    Ok((m.eps, m.lambda))
}

/// `(posterior or None, likelihood)` of a window from `prior`.
#[pyfunction]
fn window_posterior(
    model: PyRef<'_, PyPomdp>,
    prior: Vec<f64>,
    obs: Vec<usize>,
    acts: Vec<usize>,
) -> PyResult<(Option<Vec<f64>>, f64)> {
    let w = WindowState::new(obs, acts).map_err(py_err)?;
    let p = window_posterior_rs(&model.inner, &belief(prior)?, &w).map_err(py_err)?;
    Ok((p.posterior.map(Belief::into_vec), p.likelihood))
}

/// Value iteration from zero; returns `values`, `policy`, `iterations` and
/// `residual`.
#[pyfunction]
#[pyo3(signature = (wm, beta, tol=1e-10, max_iter=100_000))]
fn value_iteration<'py>(
    py: Python<'py>,
    wm: PyRef<'_, PyWindowMdp>,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let inner = &wm.inner;
    let sol = py.detach(|| value_iteration_rs(inner, beta, tol, max_iter)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("values", sol.values)?;
    d.set_item("policy", sol.policy.actions)?;
    d.set_item("iterations", sol.iterations)?;
    d.set_item("residual", sol.residual)?;
    Ok(d)
}

/// Discounted cost `V[code][x]` of a window policy on the true model.
#[pyfunction]
#[pyo3(signature = (model, wm, policy, tol=1e-10, max_iter=100_000))]
fn evaluate_policy(
    py: Python<'_>,
    model: PyRef<'_, PyPomdp>,
    wm: PyRef<'_, PyWindowMdp>,
    policy: Vec<usize>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let (m, w) = (&model.inner, &wm.inner);
    let pol = WindowPolicy::new(w.n(), policy, PolicyProvenance::Custom, &w.space).map_err(py_err)?;
    let eval = py
        .detach(|| evaluate_window_policy(m, w, &pol, tol, max_iter))
        .map_err(py_err)?;
    Ok((0..w.len() as u64)
        .map(|c| (0..m.n_states()).map(|x| eval.value(x, c)).collect())
        .collect())
}

/// Tabular Q-learning on the window MDP. `reference` is a flat `[code][u]`
/// table to measure the gap against.
#[pyfunction]
#[pyo3(signature = (model, wm, steps, seed=0, exploration=None, cost_signal="model", reference=None))]
#[allow(clippy::too_many_arguments)]
fn q_learning<'py>(
    py: Python<'py>,
    model: PyRef<'_, PyPomdp>,
    wm: PyRef<'_, PyWindowMdp>,
    steps: u64,
    seed: u64,
    exploration: Option<Vec<f64>>,
    cost_signal: &str,
    reference: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let nu = model.inner.n_actions();
    let cost_signal = match cost_signal {
        "model" => CostSignal::Model,
        "empirical" => CostSignal::Empirical,
        other => return Err(PyValueError::new_err(format!("cost_signal must be \"model\" or \"empirical\", got {other:?}"))),
    };
    let settings = QLearningSettings {
        steps,
        seed,
        exploration: exploration.unwrap_or_else(|| vec![1.0 / nu as f64; nu]),
        cost_signal,
    };
    let (m, w) = (&model.inner, &wm.inner);
    let run = py
        .detach(|| run_q_learning(m, w, &settings, reference.as_deref()))
        .map_err(py_err)?;
    let v = serde_json::json!({
        "q": run.table.q,
        "visits": run.table.visits,
        "policy": run.policy.actions,
        "diagnostics": run.diagnostics,
    });
    json_to_py(py, &v)
}

/// Empirical stability terms, bounds and assumption checks at window
/// length `n`. `priors` defaults to the vertices, uniform and `z_star`.
#[pyfunction]
#[pyo3(signature = (model, n, z_star, priors=None))]
fn stability_report<'py>(
    py: Python<'py>,
    model: PyRef<'_, PyPomdp>,
    n: usize,
    z_star: Vec<f64>,
    priors: Option<Vec<Vec<f64>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let z = belief(z_star)?;
    let nx = model.inner.n_states();
    let set = match priors {
        None => PriorSet::standard(nx, &z),
        Some(list) => {
            let mut s = PriorSet::new();
            for (i, p) in list.into_iter().enumerate() {
                s = s.with(format!("prior{i}"), belief(p)?);
            }
            s
        }
    };
    let m = &model.inner;
    let report = py.detach(|| StabilityReport::compute(m, n, &z, &set)).map_err(py_err)?;
    let v = serde_json::to_value(report).map_err(|e| py_err(e.into()))?;
    json_to_py(py, &v)
}

/// Runs an experiment from a JSON config; returns `(csv, sidecar)`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<(String, Bound<'py, PyAny>)> {
    let cfg = ExperimentConfig::from_json(config).map_err(py_err)?;
    let prep = Prepared::new(cfg).map_err(py_err)?;
    let out = py.detach(|| run_experiment_rs(&prep));
    Ok((out.csv(), json_to_py(py, &out.sidecar)?))
}

#[pymodule]
#[pyo3(name = "swpomdp")]
fn swpomdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPomdp>()?;
    m.add_class::<PyWindowMdp>()?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(w1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(hilbert_metric, m)?)?;
    m.add_function(wrap_pyfunction!(dobrushin, m)?)?;
    m.add_function(wrap_pyfunction!(mixing_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(window_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(value_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_policy, m)?)?;
    m.add_function(wrap_pyfunction!(q_learning, m)?)?;
    m.add_function(wrap_pyfunction!(stability_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("CSV_HEADER", swpomdp::experiment::CSV_HEADER)?;
    Ok(())
}
