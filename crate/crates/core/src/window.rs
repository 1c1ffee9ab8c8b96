//! The finite window MDP, its value iteration solver, and exact evaluation of
//! window policies on the true model.
//!
//! The window MDP freezes the predictor `N` steps back at a fixed `z*`. Its
//! state is the window code ([`WindowState`]), its cost is the expected
//! stage cost under `psi(z*, I)`, and its transitions shift in the next
//! observation drawn from `P^{z*}(y' | I, u)`.
//!
//! Policies found here are evaluated on the true POMDP through the product
//! chain `(x, I)`, which is exact up to the value-iteration tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::filter::{for_each_obs_path, obs_distribution_of, predict_into, CodeSpace, WindowState};
use crate::model::{Belief, FinitePomdp};

/// Default cap on the number of window states.
pub const DEFAULT_STATE_CAP: u64 = 10_000_000;

pub const ENCODING_NOTE: &str = "window code = mixed-radix integer; observation digits (base num_obs) \
most significant, oldest first (y_{t-N}..y_t), then action digits (base num_actions), oldest first \
(u_{t-N}..u_{t-1})";

#[derive(Debug, Clone)]
pub struct WindowMdp {
    pub space: CodeSpace,
    pub z_star: Belief,
    n_states: usize,
    /// `[code][x]`, `psi(z*, I)`; equal to `z*` where the window is
    /// unreachable.
    posteriors: Vec<f64>,
    /// `P^{z*}(y-sequence | u-sequence)`.
    path_likelihood: Vec<f64>,
    /// `[code][u]`
    costs: Vec<f64>,
    /// `[code][u][y']`
    obs_kernel: Vec<f64>,
}

impl WindowMdp {
    pub fn build(model: &FinitePomdp, n: usize, z_star: &Belief) -> Result<Self> {
        Self::build_with_cap(model, n, z_star, DEFAULT_STATE_CAP)
    }

    pub fn build_with_cap(model: &FinitePomdp, n: usize, z_star: &Belief, cap: u64) -> Result<Self> {
        model.check_belief(z_star)?;
        let space = CodeSpace::new(n, model.n_obs(), model.n_actions(), cap)?;
        let nx = model.n_states();
        let (ny, nu) = (model.n_obs(), model.n_actions());
        let len = space.len as usize;
        let act_count = (nu as u64).pow(n as u32);

        let mut posteriors = vec![0.0; len * nx];
        for chunk in posteriors.chunks_mut(nx) {
            chunk.copy_from_slice(z_star.as_slice());
        }
        let mut path_likelihood = vec![0.0; len];

        let per_act: Vec<Vec<(u64, Vec<f64>, f64)>> = (0..act_count)
            .into_par_iter()
            .map(|act_code| {
                let acts = decode_actions(act_code, n, nu);
                let mut found = Vec::new();
                let obs_code_of = |obs: &[usize]| obs.iter().fold(0u64, |c, &y| c * ny as u64 + y as u64);
                for_each_obs_path(model, &[z_star.as_slice()], &acts, |obs, post, lik| {
                    if lik[0] > 0.0 {
                        let code = obs_code_of(obs) * act_count + act_code;
                        found.push((code, post[0].clone(), lik[0]));
                    }
                });
                found
            })
            .collect();
        for (code, post, lik) in per_act.into_iter().flatten() {
            let c = code as usize;
            posteriors[c * nx..(c + 1) * nx].copy_from_slice(&post);
            path_likelihood[c] = lik;
        }

        let rows: Vec<(Vec<f64>, Vec<f64>)> = posteriors
            .par_chunks(nx)
            .map(|post| {
                let costs: Vec<f64> = (0..nu)
                    .map(|u| (0..nx).map(|x| model.cost(x, u) * post[x]).sum())
                    .collect();
                let mut kernel = Vec::with_capacity(nu * ny);
                let mut pred = vec![0.0; nx];
                for u in 0..nu {
                    predict_into(model, post, u, &mut pred);
                    kernel.extend(obs_distribution_of(model, &pred));
                }
                (costs, kernel)
            })
            .collect();
        let mut costs = Vec::with_capacity(len * nu);
        let mut obs_kernel = Vec::with_capacity(len * nu * ny);
        for (c, k) in rows {
            costs.extend(c);
            obs_kernel.extend(k);
        }
        Ok(WindowMdp {
            space,
            z_star: z_star.clone(),
            n_states: nx,
            posteriors,
            path_likelihood,
            costs,
            obs_kernel,
        })
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn len(&self) -> usize {
        self.space.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.space.len == 0
    }

    pub fn n_actions(&self) -> usize {
        self.space.n_actions
    }

    pub fn n_obs(&self) -> usize {
        self.space.n_obs
    }

    pub fn posterior(&self, code: u64) -> &[f64] {
        let c = code as usize;
        &self.posteriors[c * self.n_states..(c + 1) * self.n_states]
    }

    /// Whether the window has positive probability under `z*`.
    pub fn is_reachable(&self, code: u64) -> bool {
        self.path_likelihood[code as usize] > 0.0
    }

    pub fn path_likelihood(&self, code: u64) -> f64 {
        self.path_likelihood[code as usize]
    }

    /// Expected stage cost `c_hat(I, u)`.
    #[inline]
    pub fn cost(&self, code: u64, u: usize) -> f64 {
        self.costs[code as usize * self.space.n_actions + u]
    }

    /// `P^{z*}(y' | I, u)`
    #[inline]
    pub fn obs_probs(&self, code: u64, u: usize) -> &[f64] {
        let ny = self.space.n_obs;
        let start = (code as usize * self.space.n_actions + u) * ny;
        &self.obs_kernel[start..start + ny]
    }

    #[inline]
    pub fn successor(&self, code: u64, u: usize, y_next: usize) -> u64 {
        self.space.successor(code, u, y_next)
    }

    /// `c_hat(I,u) + beta sum_y' P(y'|I,u) values(succ(I,u,y'))` for all
    /// `(I, u)`, laid out `[code][u]`.
    pub fn q_values(&self, beta: f64, values: &[f64]) -> Vec<f64> {
        let nu = self.space.n_actions;
        let mut out = vec![0.0; self.len() * nu];
        out.par_chunks_mut(nu).enumerate().for_each(|(c, row)| {
            for (u, q) in row.iter_mut().enumerate() {
                *q = self.backup(c as u64, u, beta, values);
            }
        });
        out
    }

    #[inline]
    fn backup(&self, code: u64, u: usize, beta: f64, values: &[f64]) -> f64 {
        let future: f64 = self
            .obs_probs(code, u)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(y, &p)| p * values[self.successor(code, u, y) as usize])
            .sum();
        self.cost(code, u) + beta * future
    }

    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<_> = (0..self.space.len)
            .map(|code| {
                let w = self.space.decode(code);
                json!({
                    "code": code,
                    "obs": w.obs,
                    "acts": w.acts,
                    "reachable": self.is_reachable(code),
                    "path_likelihood": self.path_likelihood(code),
                    "posterior": self.posterior(code),
                    "cost": (0..self.n_actions()).map(|u| self.cost(code, u)).collect::<Vec<_>>(),
                    "obs_kernel": (0..self.n_actions()).map(|u| self.obs_probs(code, u).to_vec()).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "encoding": ENCODING_NOTE,
            "N": self.n(),
            "num_obs": self.n_obs(),
            "num_actions": self.n_actions(),
            "z_star": self.z_star,
            "states": states,
        })
    }
}

pub(crate) fn decode_actions(act_code: u64, n: usize, nu: usize) -> Vec<usize> {
    let mut acts = vec![0; n];
    let mut rest = act_code;
    for slot in acts.iter_mut().rev() {
        *slot = (rest % nu as u64) as usize;
        rest /= nu as u64;
    }
    acts
}

/// Lowest-index argmin.
pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyProvenance {
    ValueIteration,
    QLearning,
    Custom,
}

/// A deterministic stationary policy on window states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub n: usize,
    pub actions: Vec<usize>,
    pub provenance: PolicyProvenance,
}

impl WindowPolicy {
    pub fn new(n: usize, actions: Vec<usize>, provenance: PolicyProvenance, space: &CodeSpace) -> Result<Self> {
        if actions.len() as u64 != space.len || space.n != n {
            return Err(Error::Dimension {
                what: "policy length",
                expected: space.len as usize,
                got: actions.len(),
            });
        }
        if let Some(&bad) = actions.iter().find(|&&u| u >= space.n_actions) {
            return Err(Error::Index {
                kind: "action",
                index: bad,
                size: space.n_actions,
            });
        }
        Ok(WindowPolicy { n, actions, provenance })
    }

    /// Greedy policy of a `[code][u]` table, lowest index on ties.
    pub fn greedy(n: usize, q: &[f64], n_actions: usize, provenance: PolicyProvenance) -> Self {
        let actions = q.chunks(n_actions).map(|row| argmin(row.iter().copied()).0).collect();
        WindowPolicy { n, actions, provenance }
    }

    #[inline]
    pub fn action(&self, code: u64) -> usize {
        self.actions[code as usize]
    }

    pub fn to_json(&self, values: Option<&[f64]>) -> serde_json::Value {
        json!({
            "encoding": ENCODING_NOTE,
            "N": self.n,
            "provenance": self.provenance,
            "actions": self.actions,
            "values": values,
        })
    }
}

/// Result of value iteration on a window MDP.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    pub policy: WindowPolicy,
    pub iterations: usize,
    /// Sup-norm change of every sweep, in order.
    pub sweep_changes: Vec<f64>,
    /// `||T J - J||_inf` at the returned values.
    pub residual: f64,
}

/// Value iteration from `J = 0`, stopped once a sweep changes the values by
/// at most `tol (1 - beta) / (2 beta)`, which puts the result within `tol`
/// of the fixed point in sup norm.
pub fn value_iteration(wm: &WindowMdp, beta: f64, tol: f64, max_iter: usize) -> Result<ValueSolution> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Parameter {
            name: "beta",
            value: beta,
            range: "(0, 1)",
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter {
            name: "tol",
            value: tol,
            range: "(0, inf)",
        });
    }
    let nu = wm.n_actions();
    let threshold = tol * (1.0 - beta) / (2.0 * beta);
    let mut values = vec![0.0; wm.len()];
    let mut next = vec![0.0; wm.len()];
    let mut sweep_changes = Vec::new();
    for it in 1..=max_iter {
        next.par_iter_mut().enumerate().for_each(|(c, v)| {
            *v = argmin((0..nu).map(|u| wm.backup(c as u64, u, beta, &values))).1;
        });
        let change = sup_diff(&next, &values);
        sweep_changes.push(change);
        std::mem::swap(&mut values, &mut next);
        if change <= threshold {
            let q = wm.q_values(beta, &values);
            let policy = WindowPolicy::greedy(wm.n(), &q, nu, PolicyProvenance::ValueIteration);
            let residual = q
                .chunks(nu)
                .zip(&values)
                .map(|(row, v)| (argmin(row.iter().copied()).1 - v).abs())
                .fold(0.0, f64::max);
            return Ok(ValueSolution {
                values,
                policy,
                iterations: it,
                sweep_changes,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "value iteration",
        iterations: max_iter,
        residual: sweep_changes.last().copied().unwrap_or(f64::NAN),
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Discounted value of a window policy on the true model, per
/// `(true state, window code)`.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub space: CodeSpace,
    n_states: usize,
    /// `[code][x]`
    values: Vec<f64>,
    pub iterations: usize,
}

impl PolicyEvaluation {
    #[inline]
    pub fn value(&self, x: usize, code: u64) -> f64 {
        self.values[code as usize * self.n_states + x]
    }

    /// `J_beta((prior, I), phi) = sum_x P^prior(x | I) V(x, I)`. `None` when
    /// the window is impossible under `prior`.
    pub fn value_from_prior(&self, model: &FinitePomdp, prior: &Belief, w: &WindowState) -> Result<Option<f64>> {
        let pp = crate::filter::window_posterior(model, prior, w)?;
        let code = self.space.encode(w);
        Ok(pp
            .posterior
            .map(|z| z.as_slice().iter().enumerate().map(|(x, p)| p * self.value(x, code)).sum()))
    }
}

/// Evaluates `policy` on the product chain `(x, I)` with
/// `V(x,I) = c(x,a) + beta sum_{x',y'} T(x'|x,a) Q(y'|x') V(x', succ(I,a,y'))`,
/// `a = policy(I)`, stopping when a sweep changes `V` by at most
/// `tol (1 - beta) / beta`.
pub fn evaluate_window_policy(
    model: &FinitePomdp,
    wm: &WindowMdp,
    policy: &WindowPolicy,
    tol: f64,
    max_iter: usize,
) -> Result<PolicyEvaluation> {
    if policy.actions.len() != wm.len() {
        return Err(Error::Dimension {
            what: "policy length",
            expected: wm.len(),
            got: policy.actions.len(),
        });
    }
    let beta = model.discount();
    let nx = model.n_states();
    let ny = model.n_obs();
    let threshold = tol * (1.0 - beta) / beta;
    let space = wm.space;
    let mut values = vec![0.0; wm.len() * nx];
    let mut next = vec![0.0; wm.len() * nx];
    for it in 1..=max_iter {
        next.par_chunks_mut(nx).enumerate().for_each(|(c, out)| {
            let code = c as u64;
            let a = policy.action(code);
            let succ: Vec<usize> = (0..ny).map(|y| space.successor(code, a, y) as usize).collect();
            for (x, o) in out.iter_mut().enumerate() {
                let mut future = 0.0;
                for (x2, &t) in model.transition_row(a, x).iter().enumerate() {
                    if t == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for (y, &s) in succ.iter().enumerate() {
                        let q = model.observation(x2, y);
                        if q > 0.0 {
                            inner += q * values[s * nx + x2];
                        }
                    }
                    future += t * inner;
                }
                *o = model.cost(x, a) + beta * future;
            }
        });
        let change = sup_diff(&next, &values);
        std::mem::swap(&mut values, &mut next);
        if change <= threshold {
            return Ok(PolicyEvaluation {
                space,
                n_states: nx,
                values,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "policy evaluation",
        iterations: max_iter,
        residual: sup_diff(&next, &values),
    })
}

/// Joint law of `(x_N, I_0^N)` when `N` exploration actions are taken from
/// `prior`.
#[derive(Debug, Clone)]
pub struct InitialWindowDistribution {
    pub space: CodeSpace,
    n_states: usize,
    /// `[code][x]`
    joint: Vec<f64>,
}

impl InitialWindowDistribution {
    #[inline]
    pub fn prob(&self, x: usize, code: u64) -> f64 {
        self.joint[code as usize * self.n_states + x]
    }

    /// Marginal over window codes.
    pub fn code_marginal(&self) -> Vec<f64> {
        self.joint.chunks(self.n_states).map(|r| r.iter().sum()).collect()
    }

    /// Marginal over the state at time `N`.
    pub fn state_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for row in self.joint.chunks(self.n_states) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// `E[V(x_N, I_0^N)]`.
    pub fn expected_value(&self, eval: &PolicyEvaluation) -> f64 {
        self.joint
            .chunks(self.n_states)
            .enumerate()
            .map(|(c, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(x, p)| p * eval.value(x, c as u64))
                    .sum::<f64>()
            })
            .sum()
    }
}

pub fn initial_window_distribution(
    model: &FinitePomdp,
    prior: &Belief,
    exploration: &[f64],
    n: usize,
) -> Result<InitialWindowDistribution> {
    initial_window_distribution_with_cap(model, prior, exploration, n, DEFAULT_STATE_CAP)
}

pub fn initial_window_distribution_with_cap(
    model: &FinitePomdp,
    prior: &Belief,
    exploration: &[f64],
    n: usize,
    cap: u64,
) -> Result<InitialWindowDistribution> {
    model.check_belief(prior)?;
    check_exploration(model, exploration)?;
    let space = CodeSpace::new(n, model.n_obs(), model.n_actions(), cap)?;
    let nx = model.n_states();
    let (ny, nu) = (model.n_obs(), model.n_actions());
    let act_count = (nu as u64).pow(n as u32);
    let mut joint = vec![0.0; space.len as usize * nx];
    let per_act: Vec<Vec<(u64, Vec<f64>)>> = (0..act_count)
        .into_par_iter()
        .map(|act_code| {
            let acts = decode_actions(act_code, n, nu);
            let weight: f64 = acts.iter().map(|&u| exploration[u]).product();
            let mut found = Vec::new();
            for_each_obs_path(model, &[prior.as_slice()], &acts, |obs, post, lik| {
                if lik[0] > 0.0 {
                    let obs_code = obs.iter().fold(0u64, |c, &y| c * ny as u64 + y as u64);
                    let row = post[0].iter().map(|p| p * lik[0] * weight).collect();
                    found.push((obs_code * act_count + act_code, row));
                }
            });
            found
        })
        .collect();
    for (code, row) in per_act.into_iter().flatten() {
        let c = code as usize;
        joint[c * nx..(c + 1) * nx].copy_from_slice(&row);
    }
    Ok(InitialWindowDistribution {
        space,
        n_states: nx,
        joint,
    })
}

pub(crate) fn check_exploration(model: &FinitePomdp, exploration: &[f64]) -> Result<()> {
    crate::model::check_len("exploration", model.n_actions(), exploration.len())?;
    if exploration.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::Probability("exploration must be strictly positive on every action".into()));
    }
    if (exploration.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::Probability("exploration must sum to 1".into()));
    }
    Ok(())
}
