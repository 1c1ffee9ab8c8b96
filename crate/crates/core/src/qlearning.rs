//! Tabular Q-learning on window states.
//!
//! The true POMDP is simulated from a draw of `z*` under i.i.d. exploration
//! actions. After `N` warm-up steps the window is maintained by shifting,
//! and each step applies
//!
//! ```text
//! Q(I,u) <- (1 - a) Q(I,u) + a (c_hat(I,u) + beta min_v Q(I',v)),   a = 1 / (1 + n(I,u))
//! ```
//!
//! where `n(I,u)` counts visits including the current one, so the first
//! visit uses `a = 1/2`. `Q` starts at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{CodeSpace, WindowState};
use crate::model::FinitePomdp;
use crate::rng::CounterRng;
use crate::simulate::{sample_obs, sample_trajectory, Trajectory};
use crate::window::{argmin, check_exploration, PolicyProvenance, WindowMdp, WindowPolicy};

/// Where the stage cost in the target comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostSignal {
    /// `c_hat(I,u)` from the window MDP.
    #[default]
    Model,
    /// Running average of the realized costs `c(x_t, u_t)` seen at `(I,u)`.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearningSettings {
    pub steps: u64,
    pub seed: u64,
    pub exploration: Vec<f64>,
    #[serde(default)]
    pub cost_signal: CostSignal,
}

impl QLearningSettings {
    pub fn uniform(n_actions: usize, steps: u64, seed: u64) -> Self {
        QLearningSettings {
            steps,
            seed,
            exploration: vec![1.0 / n_actions as f64; n_actions],
            cost_signal: CostSignal::Model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n: usize,
    pub n_actions: usize,
    /// `[code][u]`
    pub q: Vec<f64>,
    pub visits: Vec<u64>,
    pub seed: u64,
    pub steps: u64,
}

impl QTable {
    #[inline]
    pub fn get(&self, code: u64, u: usize) -> f64 {
        self.q[code as usize * self.n_actions + u]
    }

    #[inline]
    pub fn visits(&self, code: u64, u: usize) -> u64 {
        self.visits[code as usize * self.n_actions + u]
    }

    pub fn greedy_policy(&self) -> WindowPolicy {
        WindowPolicy::greedy(self.n, &self.q, self.n_actions, PolicyProvenance::QLearning)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QDiagnostics {
    pub min_visits: u64,
    pub max_visits: u64,
    /// Pairs never visited.
    pub starved: Vec<(u64, usize)>,
    /// Starved pairs whose window is reachable under `z*`.
    pub starved_reachable: usize,
    /// `||Q - Q_ref||_inf` over reachable windows, when a reference is given.
    pub gap: Option<f64>,
    /// `||Q - T Q||_inf` over reachable windows, `T` the window MDP's
    /// Bellman operator on Q-functions.
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone)]
pub struct QLearningRun {
    pub table: QTable,
    pub policy: WindowPolicy,
    pub diagnostics: QDiagnostics,
}

pub fn run_q_learning(
    model: &FinitePomdp,
    wm: &WindowMdp,
    settings: &QLearningSettings,
    reference: Option<&[f64]>,
) -> Result<QLearningRun> {
    check_exploration(model, &settings.exploration)?;
    if settings.steps == 0 {
        return Err(Error::Parameter {
            name: "steps",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    let nu = model.n_actions();
    let pairs = wm.len() * nu;
    if let Some(r) = reference {
        crate::model::check_len("reference Q", pairs, r.len())?;
    }
    let beta = model.discount();
    let space = wm.space;
    let mut rng = CounterRng::new(settings.seed);
    let warm = sample_trajectory(model, &wm.z_star, &settings.exploration, wm.n(), &mut rng)?;
    let mut code = space.encode(&WindowState {
        obs: warm.obs,
        acts: warm.actions,
    });
    let mut x = *warm.states.last().expect("nonempty");

    let mut q = vec![0.0; pairs];
    let mut visits = vec![0u64; pairs];
    let mut cost_avg = match settings.cost_signal {
        CostSignal::Model => Vec::new(),
        CostSignal::Empirical => vec![0.0; pairs],
    };
    for _ in 0..settings.steps {
        let u = rng.categorical(&settings.exploration);
        let x_next = rng.categorical(model.transition_row(u, x));
        let y_next = sample_obs(model, x_next, &mut rng);
        let next = space.successor(code, u, y_next);

        let k = code as usize * nu + u;
        visits[k] += 1;
        let n = visits[k] as f64;
        let cost = match settings.cost_signal {
            CostSignal::Model => wm.cost(code, u),
            CostSignal::Empirical => {
                cost_avg[k] += (model.cost(x, u) - cost_avg[k]) / n;
                cost_avg[k]
            }
        };
        let future = argmin(q[next as usize * nu..(next as usize + 1) * nu].iter().copied()).1;
        let rate = 1.0 / (1.0 + n);
        q[k] = (1.0 - rate) * q[k] + rate * (cost + beta * future);

        code = next;
        x = x_next;
    }

    let table = QTable {
        n: wm.n(),
        n_actions: nu,
        q,
        visits,
        seed: settings.seed,
        steps: settings.steps,
    };
    let diagnostics = diagnose(wm, beta, &table, reference);
    Ok(QLearningRun {
        policy: table.greedy_policy(),
        table,
        diagnostics,
    })
}

fn diagnose(wm: &WindowMdp, beta: f64, table: &QTable, reference: Option<&[f64]>) -> QDiagnostics {
    let nu = table.n_actions;
    let mins: Vec<f64> = table.q.chunks(nu).map(|r| argmin(r.iter().copied()).1).collect();
    let t_q = wm.q_values(beta, &mins);
    let mut starved = Vec::new();
    let mut starved_reachable = 0;
    let mut residual: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for code in 0..wm.space.len {
        let reachable = wm.is_reachable(code);
        for u in 0..nu {
            let k = code as usize * nu + u;
            if table.visits[k] == 0 {
                starved.push((code, u));
                starved_reachable += reachable as usize;
            }
            if reachable {
                residual = residual.max((table.q[k] - t_q[k]).abs());
                if let Some(r) = reference {
                    gap = gap.max((table.q[k] - r[k]).abs());
                }
            }
        }
    }
    QDiagnostics {
        min_visits: table.visits.iter().copied().min().unwrap_or(0),
        max_visits: table.visits.iter().copied().max().unwrap_or(0),
        starved,
        starved_reachable,
        gap: reference.map(|_| gap),
        fixed_point_residual: residual,
    }
}

/// Running averages of realized stage costs per `(I, u)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub n: usize,
    pub n_actions: usize,
    /// `[code][u]`; zero where unvisited.
    pub mean: Vec<f64>,
    pub visits: Vec<u64>,
}

impl CostEstimate {
    #[inline]
    pub fn get(&self, code: u64, u: usize) -> Option<f64> {
        let k = code as usize * self.n_actions + u;
        (self.visits[k] > 0).then(|| self.mean[k])
    }

    pub fn unvisited(&self) -> usize {
        self.visits.iter().filter(|&&v| v == 0).count()
    }
}

/// Averages `c(x_t, u_t)` over the times `t >= N` at which the window
/// `I_t` and action `u_t` occur in `trajectory`.
pub fn estimate_costs_online(model: &FinitePomdp, n: usize, trajectory: &Trajectory) -> Result<CostEstimate> {
    let nu = model.n_actions();
    let space = CodeSpace::new(n, model.n_obs(), nu, u64::MAX)?;
    let len = usize::try_from(space.len).map_err(|_| Error::CapExceeded {
        states: space.len as u128,
        cap: usize::MAX as u64,
    })?;
    let mut est = CostEstimate {
        n,
        n_actions: nu,
        mean: vec![0.0; len * nu],
        visits: vec![0; len * nu],
    };
    let steps = trajectory.actions.len();
    if steps < n {
        return Ok(est);
    }
    let mut code = space.encode(&WindowState {
        obs: trajectory.obs[..=n].to_vec(),
        acts: trajectory.actions[..n].to_vec(),
    });
    for t in n..steps {
        let u = trajectory.actions[t];
        let k = code as usize * nu + u;
        est.visits[k] += 1;
        est.mean[k] += (model.cost(trajectory.states[t], u) - est.mean[k]) / est.visits[k] as f64;
        code = space.successor(code, u, trajectory.obs[t + 1]);
    }
    Ok(est)
}
