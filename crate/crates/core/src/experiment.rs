//! Experiment configuration and the per-`N` driver behind the CLI.
//!
//! For every `N` the driver builds the window MDP at `z*`, solves it, and
//! evaluates the resulting policy on the true model started from `z*` with
//! the first window filled by exploration. `J*` is estimated by the smallest
//! evaluated value over the `N` list.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::builders::{build_example1, build_example3, Example2, MachineRepair};
use crate::error::{Error, Result};
use crate::model::{Belief, FinitePomdp};
use crate::qlearning::{run_q_learning, CostSignal, QLearningRun, QLearningSettings};
use crate::stability::{PriorSet, StabilityReport};
use crate::window::{
    evaluate_window_policy, initial_window_distribution, value_iteration, ValueSolution, WindowMdp,
};

pub const CSV_HEADER: &str =
    "case,N,j_tilde,j_star_est,error,LN_w1,LTV_N,bound_w1,bound_hilbert,rate,qlearn_gap,status";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZStarSpec {
    /// `"stationary"` (under the exploration law) or `"uniform"`.
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSetSpec {
    /// `"standard"` (vertices, uniform, `z*`), `"vertices"` or
    /// `"vertices+uniform"`.
    Named(String),
    Explicit(Vec<Vec<f64>>),
}

fn default_case() -> String {
    "experiment".into()
}
fn default_z_star() -> ZStarSpec {
    ZStarSpec::Named("stationary".into())
}
fn default_prior_set() -> PriorSetSpec {
    PriorSetSpec::Named("standard".into())
}
fn default_qlearn_seeds() -> u64 {
    1
}
fn default_vi_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    100_000
}

/// Flat JSON experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_case")]
    pub case: String,
    /// `machine-repair`, `example1`, `example2`, `example3` or `file`.
    pub model: String,
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub repair_cost: Option<f64>,
    #[serde(default)]
    pub broken_cost: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub grid_size: Option<usize>,
    #[serde(default)]
    pub p: Option<usize>,
    /// Overrides the model's own discount when given.
    #[serde(default)]
    pub beta: Option<f64>,
    pub n_list: Vec<usize>,
    #[serde(default = "default_z_star")]
    pub z_star: ZStarSpec,
    #[serde(default = "default_prior_set")]
    pub prior_set: PriorSetSpec,
    /// Uniform when absent.
    #[serde(default)]
    pub exploration: Option<Vec<f64>>,
    /// Zero disables Q-learning.
    #[serde(default)]
    pub qlearn_steps: u64,
    #[serde(default = "default_qlearn_seeds")]
    pub qlearn_seeds: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub cost_signal: CostSignal,
    #[serde(default = "default_vi_tol")]
    pub vi_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates. Relative `model_file` paths resolve against the
    /// config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(f), Some(dir)) = (&cfg.model_file, path.parent()) {
            if f.is_relative() {
                cfg.model_file = Some(dir.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
                .unwrap_or("config")
                .to_string();
            Error::config(key, msg)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::config("n_list", "must list at least one window length"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_list", "must be strictly ascending"));
        }
        if !(self.vi_tol > 0.0) {
            return Err(Error::config("vi_tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        if self.qlearn_steps > 0 && self.qlearn_seeds == 0 {
            return Err(Error::config("qlearn_seeds", "must be positive when qlearn_steps > 0"));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config("beta", format!("{b} is outside (0, 1)")));
            }
        }
        if self.model == "file" {
            match &self.model_file {
                None => return Err(Error::config("model_file", "required when model is \"file\"")),
                Some(f) if !f.exists() => {
                    return Err(Error::config("model_file", format!("{} does not exist", f.display())))
                }
                _ => {}
            }
        }
        self.build_model().map(|_| ())
    }

    pub fn build_model(&self) -> Result<FinitePomdp> {
        let named = |key: &str, e: Error| match e {
            Error::Parameter { .. } | Error::InvalidModel(_) | Error::Probability(_) | Error::Dimension { .. } => {
                Error::config(key, e.to_string())
            }
            other => other,
        };
        let model = match self.model.as_str() {
            "machine-repair" => {
                let base = MachineRepair::CASE_1;
                MachineRepair {
                    eps: self.eps.unwrap_or(base.eps),
                    kappa: self.kappa.unwrap_or(base.kappa),
                    theta: self.theta.unwrap_or(base.theta),
                    repair_cost: self.repair_cost.unwrap_or(base.repair_cost),
                    broken_cost: self.broken_cost.unwrap_or(base.broken_cost),
                    beta: self.beta.unwrap_or(base.beta),
                }
                .build()
                .map_err(|e| named("model", e))?
            }
            "example1" | "example3" => {
                let eps = self.eps.ok_or_else(|| Error::config("eps", "required for this model"))?;
                let beta = self.beta.unwrap_or(0.8);
                let built = if self.model == "example1" {
                    build_example1(eps, beta, None)
                } else {
                    build_example3(eps, beta, None)
                };
                built.map_err(|e| named("eps", e))?
            }
            "example2" => Example2 {
                sigma: self.sigma.ok_or_else(|| Error::config("sigma", "required for example2"))?,
                grid_size: self.grid_size.unwrap_or(20),
                p: self.p.unwrap_or(1),
                beta: self.beta.unwrap_or(0.8),
                channel: None,
                eps: self.eps.unwrap_or(0.1),
            }
            .build()
            .map_err(|e| named("model", e))?,
            "file" => {
                let path = self
                    .model_file
                    .as_ref()
                    .ok_or_else(|| Error::config("model_file", "required when model is \"file\""))?;
                let m = FinitePomdp::load(path).map_err(|e| Error::config("model_file", e.to_string()))?;
                match self.beta {
                    Some(b) => m.with_discount(b),
                    None => m,
                }
            }
            other => {
                return Err(Error::config(
                    "model",
                    format!("unknown model {other:?}; expected machine-repair, example1, example2, example3 or file"),
                ))
            }
        };
        let violations = model.validate();
        if let Some(v) = violations.first() {
            let key = if self.model == "file" { "model_file" } else { "model" };
            return Err(Error::config(key, format!("{} violation(s), first: {v}", violations.len())));
        }
        Ok(model)
    }
}

/// A validated config with its model and reference distributions resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub model: FinitePomdp,
    pub exploration: Vec<f64>,
    pub z_star: Belief,
    pub priors: PriorSet,
}

impl Prepared {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.build_model()?;
        let nu = model.n_actions();
        let nx = model.n_states();
        let exploration = match &config.exploration {
            Some(e) => {
                crate::window::check_exploration(&model, e).map_err(|err| Error::config("exploration", err.to_string()))?;
                e.clone()
            }
            None => vec![1.0 / nu as f64; nu],
        };
        let z_star = match &config.z_star {
            ZStarSpec::Named(s) if s == "stationary" => model
                .stationary_distribution(&exploration)
                .map_err(|e| Error::config("z_star", e.to_string()))?,
            ZStarSpec::Named(s) if s == "uniform" => Belief::uniform(nx),
            ZStarSpec::Named(s) => {
                return Err(Error::config(
                    "z_star",
                    format!("unknown mode {s:?}; expected \"stationary\", \"uniform\" or a vector"),
                ))
            }
            ZStarSpec::Explicit(v) => {
                let b = Belief::new(v.clone()).map_err(|e| Error::config("z_star", e.to_string()))?;
                model.check_belief(&b).map_err(|e| Error::config("z_star", e.to_string()))?;
                b
            }
        };
        let priors = match &config.prior_set {
            PriorSetSpec::Named(s) => match s.as_str() {
                "standard" => PriorSet::standard(nx, &z_star),
                "vertices" => PriorSet::vertices(nx),
                "vertices+uniform" => PriorSet::vertices(nx).with("uniform", Belief::uniform(nx)),
                other => {
                    return Err(Error::config(
                        "prior_set",
                        format!("unknown mode {other:?}; expected standard, vertices, vertices+uniform or a list"),
                    ))
                }
            },
            PriorSetSpec::Explicit(list) => {
                if list.is_empty() {
                    return Err(Error::config("prior_set", "list is empty"));
                }
                let mut set = PriorSet::new();
                for (i, v) in list.iter().enumerate() {
                    let b = Belief::new(v.clone()).map_err(|e| Error::config("prior_set", format!("entry {i}: {e}")))?;
                    model
                        .check_belief(&b)
                        .map_err(|e| Error::config("prior_set", format!("entry {i}: {e}")))?;
                    set = set.with(format!("prior{i}"), b);
                }
                set
            }
        };
        Ok(Prepared {
            config,
            model,
            exploration,
            z_star,
            priors,
        })
    }

    pub fn window_mdp(&self, n: usize) -> Result<WindowMdp> {
        WindowMdp::build(&self.model, n, &self.z_star)
    }

    pub fn solve(&self, wm: &WindowMdp) -> Result<ValueSolution> {
        value_iteration(wm, self.model.discount(), self.config.vi_tol, self.config.max_iter)
    }

    /// Exact value of `solution.policy` from `z*` with an exploratory first
    /// window.
    pub fn evaluate(&self, wm: &WindowMdp, solution: &ValueSolution) -> Result<f64> {
        let eval = evaluate_window_policy(&self.model, wm, &solution.policy, self.config.vi_tol, self.config.max_iter)?;
        let init = initial_window_distribution(&self.model, &self.z_star, &self.exploration, wm.n())?;
        Ok(init.expected_value(&eval))
    }

    /// Seed of run `k`: `base_seed + k`.
    pub fn qlearn(&self, wm: &WindowMdp, reference_q: Option<&[f64]>) -> Result<Vec<QLearningRun>> {
        let cfg = &self.config;
        (0..cfg.qlearn_seeds)
            .into_par_iter()
            .map(|k| {
                let settings = QLearningSettings {
                    steps: cfg.qlearn_steps,
                    seed: cfg.base_seed.wrapping_add(k),
                    exploration: self.exploration.clone(),
                    cost_signal: cfg.cost_signal,
                };
                run_q_learning(&self.model, wm, &settings, reference_q)
            })
            .collect()
    }

    pub fn stability(&self, n: usize) -> Result<StabilityReport> {
        StabilityReport::compute(&self.model, n, &self.z_star, &self.priors)
    }
}

/// One CSV row. `None` prints as an empty field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub case: String,
    pub n: usize,
    pub j_tilde: Option<f64>,
    pub j_star_est: Option<f64>,
    pub error: Option<f64>,
    pub ln_w1: Option<f64>,
    pub ltv_n: Option<f64>,
    pub bound_w1: Option<f64>,
    pub bound_hilbert: Option<f64>,
    pub rate: Option<f64>,
    pub qlearn_gap: Option<f64>,
    pub status: String,
}

impl Row {
    fn failed(case: &str, n: usize, err: &Error) -> Self {
        Row {
            case: case.to_string(),
            n,
            j_tilde: None,
            j_star_est: None,
            error: None,
            ln_w1: None,
            ltv_n: None,
            bound_w1: None,
            bound_hilbert: None,
            rate: None,
            qlearn_gap: None,
            status: status_of(err),
        }
    }

    pub fn to_csv(&self) -> String {
        let nums = [
            self.j_tilde,
            self.j_star_est,
            self.error,
            self.ln_w1,
            self.ltv_n,
            self.bound_w1,
            self.bound_hilbert,
            self.rate,
            self.qlearn_gap,
        ];
        let mut line = format!("{},{}", csv_field(&self.case), self.n);
        for v in nums {
            line.push(',');
            line.push_str(&v.map(format_g12).unwrap_or_default());
        }
        line.push(',');
        line.push_str(&csv_field(&self.status));
        line
    }
}

fn status_of(err: &Error) -> String {
    match err {
        Error::NonConvergence { .. } => format!("non-convergence: {err}"),
        Error::CapExceeded { .. } => format!("cap-exceeded: {err}"),
        _ => format!("error: {err}"),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `%.12g`: 12 significant digits, trailing zeros dropped, exponent form
/// below `1e-4` or from `1e12`.
pub fn format_g12(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Everything one `N` produced, for the JSON sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct NOutcome {
    pub n: usize,
    pub window_states: u64,
    pub reachable_states: u64,
    pub vi_iterations: usize,
    pub vi_residual: f64,
    pub j_tilde: f64,
    pub stability: StabilityReport,
    pub qlearn_gaps: Vec<f64>,
    pub qlearn_policy_matches: Vec<bool>,
    pub qlearn_starved_reachable: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub outcomes: Vec<std::result::Result<NOutcome, String>>,
    /// Set when any row failed to converge.
    pub nonconvergence: bool,
    pub sidecar: serde_json::Value,
}

impl ExperimentOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(out, "{}", r.to_csv()).expect("writing to a String");
        }
        out
    }
}

fn run_one(prep: &Prepared, n: usize) -> Result<NOutcome> {
    let wm = prep.window_mdp(n)?;
    let solution = prep.solve(&wm)?;
    let j_tilde = prep.evaluate(&wm, &solution)?;
    let stability = prep.stability(n)?;
    let mut qlearn_gaps = Vec::new();
    let mut qlearn_policy_matches = Vec::new();
    let mut qlearn_starved_reachable = Vec::new();
    if prep.config.qlearn_steps > 0 {
        let q_star = wm.q_values(prep.model.discount(), &solution.values);
        for run in prep.qlearn(&wm, Some(&q_star))? {
            qlearn_gaps.push(run.diagnostics.gap.expect("reference supplied"));
            qlearn_policy_matches.push(run.policy.actions == solution.policy.actions);
            qlearn_starved_reachable.push(run.diagnostics.starved_reachable);
        }
    }
    Ok(NOutcome {
        n,
        window_states: wm.space.len,
        reachable_states: (0..wm.space.len).filter(|&c| wm.is_reachable(c)).count() as u64,
        vi_iterations: solution.iterations,
        vi_residual: solution.residual,
        j_tilde,
        stability,
        qlearn_gaps,
        qlearn_policy_matches,
        qlearn_starved_reachable,
    })
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}

/// Runs every `N` (in parallel) and assembles rows in `n_list` order. A
/// failing `N` yields a row with empty numeric fields and the failure in
/// `status`.
pub fn run_experiment(prep: &Prepared) -> ExperimentOutput {
    let cfg = &prep.config;
    let outcomes: Vec<Result<NOutcome>> = cfg.n_list.par_iter().map(|&n| run_one(prep, n)).collect();
    let j_star_est = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok().map(|o| o.j_tilde))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    let mut nonconvergence = false;
    let rows = outcomes
        .iter()
        .zip(&cfg.n_list)
        .map(|(o, &n)| match o {
            Ok(o) => Row {
                case: cfg.case.clone(),
                n,
                j_tilde: Some(o.j_tilde),
                j_star_est,
                error: j_star_est.map(|j| o.j_tilde - j),
                ln_w1: Some(o.stability.terms.ln_w1.value),
                ltv_n: Some(o.stability.terms.ltv_uniform.value),
                bound_w1: Some(o.stability.w1_bound.bound),
                bound_hilbert: o.stability.hilbert_bound,
                rate: Some(o.stability.w1_bound.rate),
                qlearn_gap: median(&o.qlearn_gaps),
                status: "ok".into(),
            },
            Err(e) => {
                nonconvergence |= matches!(e, Error::NonConvergence { .. });
                Row::failed(&cfg.case, n, e)
            }
        })
        .collect();
    let outcomes: Vec<_> = outcomes.into_iter().map(|o| o.map_err(|e| e.to_string())).collect();
    let per_n: Vec<_> = outcomes
        .iter()
        .map(|o| match o {
            Ok(o) => serde_json::to_value(o).expect("serializable"),
            Err(e) => json!({ "error": e }),
        })
        .collect();
    let sidecar = json!({
        "config": cfg,
        "model": prep.model.name(),
        "constants": prep.model.constants(),
        "z_star": prep.z_star,
        "exploration": prep.exploration,
        "prior_set": prep.priors.labels,
        "j_star_est": j_star_est,
        "results": per_n,
    });
    ExperimentOutput {
        rows,
        outcomes,
        nonconvergence,
        sidecar,
    }
}
