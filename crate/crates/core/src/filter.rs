//! Bayesian filter and predictor recursions, window states and the
//! window-posterior map.
//!
//! All updates run in `f64` with one renormalization per measurement update.
//! Observation branches with zero likelihood are reported as
//! [`Measured::Impossible`] and never renormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, FinitePomdp};

/// The information variable: the last `N + 1` observations and `N` actions,
/// stored oldest first.
///
/// The canonical code is a mixed-radix integer. Observation digits (base
/// `|Y|`) are the most significant, oldest first, followed by action digits
/// (base `|U|`), oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowState {
    pub obs: Vec<usize>,
    pub acts: Vec<usize>,
}

impl WindowState {
    pub fn new(obs: Vec<usize>, acts: Vec<usize>) -> Result<Self> {
        if obs.len() != acts.len() + 1 {
            return Err(Error::Dimension {
                what: "window observations (N + 1)",
                expected: acts.len() + 1,
                got: obs.len(),
            });
        }
        Ok(WindowState { obs, acts })
    }

    /// Window length `N`.
    pub fn len(&self) -> usize {
        self.acts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }

    /// Number of window states, `|Y|^(N+1) |U|^N`.
    pub fn count(n: usize, n_obs: usize, n_actions: usize) -> u128 {
        (n_obs as u128).saturating_pow(n as u32 + 1).saturating_mul((n_actions as u128).saturating_pow(n as u32))
    }

    pub fn check(&self, model: &FinitePomdp) -> Result<()> {
        self.obs.iter().try_for_each(|&y| model.check_obs(y))?;
        self.acts.iter().try_for_each(|&u| model.check_action(u))
    }

    pub fn encode(&self, n_obs: usize, n_actions: usize) -> u64 {
        let mut code = 0u64;
        for &y in &self.obs {
            code = code * n_obs as u64 + y as u64;
        }
        for &u in &self.acts {
            code = code * n_actions as u64 + u as u64;
        }
        code
    }

    pub fn decode(code: u64, n: usize, n_obs: usize, n_actions: usize) -> Self {
        let mut rest = code;
        let mut acts = vec![0; n];
        for slot in acts.iter_mut().rev() {
            *slot = (rest % n_actions as u64) as usize;
            rest /= n_actions as u64;
        }
        let mut obs = vec![0; n + 1];
        for slot in obs.iter_mut().rev() {
            *slot = (rest % n_obs as u64) as usize;
            rest /= n_obs as u64;
        }
        WindowState { obs, acts }
    }

    /// Drops the oldest entries and appends `u` and `y_next`.
    pub fn shift(&self, u: usize, y_next: usize) -> Self {
        let mut obs = self.obs[1..].to_vec();
        obs.push(y_next);
        let acts = if self.acts.is_empty() {
            Vec::new()
        } else {
            let mut a = self.acts[1..].to_vec();
            a.push(u);
            a
        };
        WindowState { obs, acts }
    }
}

/// Radix arithmetic on window codes without decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpace {
    pub n: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    /// `|U|^N`
    act_radix: u64,
    /// `|Y|^N`
    obs_tail: u64,
    /// `|U|^(N-1)` (1 when `N = 0`)
    act_tail: u64,
    pub len: u64,
}

impl CodeSpace {
    pub fn new(n: usize, n_obs: usize, n_actions: usize, cap: u64) -> Result<Self> {
        let states = WindowState::count(n, n_obs, n_actions);
        if states > cap as u128 {
            return Err(Error::CapExceeded { states, cap });
        }
        let p = |b: usize, e: usize| (b as u64).pow(e as u32);
        Ok(CodeSpace {
            n,
            n_obs,
            n_actions,
            act_radix: p(n_actions, n),
            obs_tail: p(n_obs, n),
            act_tail: if n == 0 { 1 } else { p(n_actions, n - 1) },
            len: states as u64,
        })
    }

    #[inline]
    pub fn successor(&self, code: u64, u: usize, y_next: usize) -> u64 {
        let obs = code / self.act_radix;
        let acts = code % self.act_radix;
        let obs = (obs % self.obs_tail) * self.n_obs as u64 + y_next as u64;
        let acts = if self.n == 0 {
            0
        } else {
            (acts % self.act_tail) * self.n_actions as u64 + u as u64
        };
        obs * self.act_radix + acts
    }

    pub fn decode(&self, code: u64) -> WindowState {
        WindowState::decode(code, self.n, self.n_obs, self.n_actions)
    }

    pub fn encode(&self, w: &WindowState) -> u64 {
        w.encode(self.n_obs, self.n_actions)
    }
}

/// Outcome of a measurement update.
#[derive(Debug, Clone, PartialEq)]
pub enum Measured {
    Observed { posterior: Belief, likelihood: f64 },
    /// The observation has probability zero under the predictor.
    Impossible,
}

impl Measured {
    pub fn likelihood(&self) -> f64 {
        match self {
            Measured::Observed { likelihood, .. } => *likelihood,
            Measured::Impossible => 0.0,
        }
    }

    pub fn posterior(&self) -> Option<&Belief> {
        match self {
            Measured::Observed { posterior, .. } => Some(posterior),
            Measured::Impossible => None,
        }
    }
}

/// Posterior at the end of a window together with the probability of the
/// window's observations given its actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPosterior {
    /// `None` when some observation in the window is impossible.
    pub posterior: Option<Belief>,
    pub likelihood: f64,
}

/// `out[x'] = sum_x T(x'|x,u) z[x]`
pub(crate) fn predict_into(model: &FinitePomdp, z: &[f64], u: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (x, &p) in z.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &t) in out.iter_mut().zip(model.transition_row(u, x)) {
            *o += t * p;
        }
    }
}

/// Multiplies by `Q(y|.)`, returns the likelihood and normalizes when it is
/// positive. On zero likelihood the vector is left all zero.
pub(crate) fn update_in_place(model: &FinitePomdp, z: &mut [f64], y: usize) -> f64 {
    let mut total = 0.0;
    for (x, p) in z.iter_mut().enumerate() {
        *p *= model.observation(x, y);
        total += *p;
    }
    if total > 0.0 {
        z.iter_mut().for_each(|p| *p /= total);
    }
    total
}

pub fn predictor_step(model: &FinitePomdp, z: &Belief, u: usize) -> Result<Belief> {
    model.check_belief(z)?;
    model.check_action(u)?;
    let mut out = vec![0.0; model.n_states()];
    predict_into(model, z.as_slice(), u, &mut out);
    Ok(Belief::from_normalized(out))
}

pub fn measurement_update(model: &FinitePomdp, z_pred: &Belief, y: usize) -> Result<Measured> {
    model.check_belief(z_pred)?;
    model.check_obs(y)?;
    let mut z = z_pred.as_slice().to_vec();
    let likelihood = update_in_place(model, &mut z, y);
    Ok(if likelihood > 0.0 {
        Measured::Observed {
            posterior: Belief::from_normalized(z),
            likelihood,
        }
    } else {
        Measured::Impossible
    })
}

/// Runs the filter over a window starting from `prior`, read as the
/// predictor of the state at the window's first observation.
pub fn window_posterior(model: &FinitePomdp, prior: &Belief, w: &WindowState) -> Result<PathPosterior> {
    model.check_belief(prior)?;
    w.check(model)?;
    let mut z = prior.as_slice().to_vec();
    let mut scratch = vec![0.0; z.len()];
    let mut likelihood = update_in_place(model, &mut z, w.obs[0]);
    for (k, &u) in w.acts.iter().enumerate() {
        if likelihood == 0.0 {
            break;
        }
        predict_into(model, &z, u, &mut scratch);
        std::mem::swap(&mut z, &mut scratch);
        likelihood *= update_in_place(model, &mut z, w.obs[k + 1]);
    }
    Ok(if likelihood > 0.0 {
        PathPosterior {
            posterior: Some(Belief::from_normalized(z)),
            likelihood,
        }
    } else {
        PathPosterior {
            posterior: None,
            likelihood: 0.0,
        }
    })
}

/// Distribution of the next observation after applying `u` to the
/// posterior `z_post`.
pub fn next_obs_distribution(model: &FinitePomdp, z_post: &Belief, u: usize) -> Result<Vec<f64>> {
    model.check_belief(z_post)?;
    model.check_action(u)?;
    let mut pred = vec![0.0; model.n_states()];
    predict_into(model, z_post.as_slice(), u, &mut pred);
    Ok(obs_distribution_of(model, &pred))
}

pub(crate) fn obs_distribution_of(model: &FinitePomdp, pred: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.n_obs()];
    for (x, &p) in pred.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (y, o) in out.iter_mut().enumerate() {
            *o += model.observation(x, y) * p;
        }
    }
    out
}

/// Depth-first enumeration of every observation sequence of length
/// `acts.len() + 1` for a fixed action sequence, running one filter per
/// prior in lockstep.
///
/// Sequences are visited in increasing lexicographic order (oldest
/// observation most significant), which is the order of window codes. The
/// callback receives the observations, the per-prior posteriors and the
/// per-prior path likelihoods. A posterior is meaningless when its
/// likelihood is zero. Subtrees where every prior has zero likelihood are
/// skipped.
pub fn for_each_obs_path<F>(model: &FinitePomdp, priors: &[&[f64]], acts: &[usize], mut f: F)
where
    F: FnMut(&[usize], &[Vec<f64>], &[f64]),
{
    let depth = acts.len() + 1;
    let k = priors.len();
    let n = model.n_states();
    // levels[d] holds the predictors entering level d (before observing y_d).
    let mut levels: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; n]; k]; depth];
    let mut lik: Vec<Vec<f64>> = vec![vec![0.0; k]; depth + 1];
    for (i, p) in priors.iter().enumerate() {
        levels[0][i].copy_from_slice(p);
        lik[0][i] = 1.0;
    }
    let mut obs = vec![0usize; depth];
    let mut post: Vec<Vec<f64>> = vec![vec![0.0; n]; k];
    recurse(model, acts, 0, &mut levels, &mut lik, &mut obs, &mut post, &mut f);
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    model: &FinitePomdp,
    acts: &[usize],
    d: usize,
    levels: &mut [Vec<Vec<f64>>],
    lik: &mut [Vec<f64>],
    obs: &mut [usize],
    post: &mut [Vec<f64>],
    f: &mut F,
) where
    F: FnMut(&[usize], &[Vec<f64>], &[f64]),
{
    let depth = acts.len() + 1;
    let k = lik[0].len();
    for y in 0..model.n_obs() {
        obs[d] = y;
        for i in 0..k {
            post[i].copy_from_slice(&levels[d][i]);
            let l = if lik[d][i] > 0.0 {
                update_in_place(model, &mut post[i], y)
            } else {
                0.0
            };
            lik[d + 1][i] = lik[d][i] * l;
        }
        if lik[d + 1].iter().all(|&l| l == 0.0) {
            continue;
        }
        if d + 1 == depth {
            f(obs, post, &lik[d + 1]);
        } else {
            for i in 0..k {
                if lik[d + 1][i] > 0.0 {
                    predict_into(model, &post[i], acts[d], &mut levels[d + 1][i]);
                }
            }
            recurse(model, acts, d + 1, levels, lik, obs, post, f);
        }
    }
}
