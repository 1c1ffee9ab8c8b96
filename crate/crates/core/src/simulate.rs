//! Sampling trajectories of the true POMDP.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::filter::CodeSpace;
use crate::model::{Belief, FinitePomdp};
use crate::rng::CounterRng;
use crate::window::{check_exploration, WindowPolicy};

/// `states` and `obs` have one more entry than `actions`: `y_t` is drawn
/// from `x_t`, then `u_t` moves `x_t` to `x_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub obs: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// `steps` transitions under i.i.d. exploration actions.
pub fn sample_trajectory(
    model: &FinitePomdp,
    prior: &Belief,
    exploration: &[f64],
    steps: usize,
    rng: &mut CounterRng,
) -> Result<Trajectory> {
    model.check_belief(prior)?;
    check_exploration(model, exploration)?;
    let mut x = rng.categorical(prior.as_slice());
    let mut t = Trajectory {
        states: Vec::with_capacity(steps + 1),
        obs: Vec::with_capacity(steps + 1),
        actions: Vec::with_capacity(steps),
    };
    t.states.push(x);
    t.obs.push(sample_obs(model, x, rng));
    for _ in 0..steps {
        let u = rng.categorical(exploration);
        x = rng.categorical(model.transition_row(u, x));
        t.actions.push(u);
        t.states.push(x);
        t.obs.push(sample_obs(model, x, rng));
    }
    Ok(t)
}

#[inline]
pub(crate) fn sample_obs(model: &FinitePomdp, x: usize, rng: &mut CounterRng) -> usize {
    let ny = model.n_obs();
    rng.categorical(&model.observation_matrix()[x * ny..(x + 1) * ny])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub episodes: usize,
}

/// Monte Carlo value of a window policy: `N` exploration steps from `prior`
/// fill the first window, then `horizon` steps of discounted cost are
/// accumulated under the policy. Episode `k` uses stream `k` of `seed`, so
/// the estimate does not depend on the thread count.
pub fn monte_carlo_policy_value(
    model: &FinitePomdp,
    policy: &WindowPolicy,
    prior: &Belief,
    exploration: &[f64],
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    model.check_belief(prior)?;
    check_exploration(model, exploration)?;
    let space = CodeSpace::new(policy.n, model.n_obs(), model.n_actions(), u64::MAX)?;
    let beta = model.discount();
    let root = CounterRng::new(seed);
    let returns: Vec<f64> = (0..episodes as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = root.fork(k);
            let warm = sample_trajectory(model, prior, exploration, policy.n, &mut rng)
                .expect("inputs checked above");
            let mut code = warm_code(&space, &warm);
            let mut x = *warm.states.last().expect("nonempty");
            let mut total = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                let u = policy.action(code);
                total += disc * model.cost(x, u);
                disc *= beta;
                x = rng.categorical(model.transition_row(u, x));
                code = space.successor(code, u, sample_obs(model, x, &mut rng));
            }
            total
        })
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(MonteCarloEstimate {
        mean,
        std_err: (var / n).sqrt(),
        episodes,
    })
}

fn warm_code(space: &CodeSpace, t: &Trajectory) -> u64 {
    space.encode(&crate::filter::WindowState {
        obs: t.obs.clone(),
        acts: t.actions.clone(),
    })
}
