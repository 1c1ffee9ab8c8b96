//! Finite POMDP data types, invariant checking and the on-disk JSON format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for stochastic matrices.
pub const ROW_TOL: f64 = 1e-12;
/// Loader renormalizes rows whose sum is off by at most this much.
pub const LOAD_RENORM_TOL: f64 = 1e-9;
/// Negative entries down to this magnitude are treated as rounding noise.
pub const NEG_CLAMP: f64 = 1e-15;
/// Triangle inequality is checked exhaustively up to this many states.
pub const TRIANGLE_CHECK_MAX: usize = 64;

/// A probability vector over the hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Normalizes `probs`. Entries in `[-1e-15, 0)` are clamped to zero.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Probability("empty vector".into()));
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::Probability(format!("entry {i} is not finite")));
            }
            if *p < 0.0 {
                if *p < -NEG_CLAMP {
                    return Err(Error::Probability(format!("entry {i} = {p} is negative")));
                }
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::Probability("total mass is zero".into()));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Belief(probs))
    }

    /// Wraps a vector already known to be a probability vector.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Belief(probs)
    }

    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        Belief(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices with positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, _)| i)
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One failed invariant: which tensor, where, and by how much.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub tensor: &'static str,
    pub index: Vec<usize>,
    pub residual: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{:?}: {} (residual {:e})",
            self.tensor, self.index, self.message, self.residual
        )
    }
}

/// Regularity constants of a model with respect to its state metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Metric diameter `D`.
    pub diameter: f64,
    /// Lipschitz constant of `x -> T(.|x,u)` in total variation.
    pub alpha: f64,
    /// Lipschitz constant of `x -> c(x,u)`.
    pub k1: f64,
    /// `max |c(x,u)|`.
    pub c_inf: f64,
}

impl ModelConstants {
    /// Same constants, but with `k1` replaced by `2 ||c||_inf / d_min`, which
    /// is a valid Lipschitz constant for any cost bounded by `||c||_inf`.
    pub fn cost_agnostic(&self, model: &FinitePomdp) -> Self {
        let n = model.n_states();
        let mut d_min = f64::INFINITY;
        for x in 0..n {
            for x2 in 0..n {
                if x != x2 {
                    d_min = d_min.min(model.distance(x, x2));
                }
            }
        }
        let k1 = if n < 2 { 0.0 } else { 2.0 * self.c_inf / d_min };
        ModelConstants { k1, ..*self }
    }
}

/// A finite POMDP with a metric on its state space.
///
/// Tensors are stored flat; use the accessors. Construction only checks
/// shapes, so that malformed models can still be inspected with
/// [`FinitePomdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePomdp {
    name: String,
    n_states: usize,
    n_obs: usize,
    n_actions: usize,
    /// `[u][x][x']`
    transition: Vec<f64>,
    /// `[x][y]`
    observation: Vec<f64>,
    /// `[x][u]`
    cost: Vec<f64>,
    discount: f64,
    /// `[x][x']`
    metric: Vec<f64>,
}

impl FinitePomdp {
    /// Builds a model from nested arrays. `metric = None` selects the
    /// discrete metric.
    pub fn new(
        name: impl Into<String>,
        transition: Vec<Vec<Vec<f64>>>,
        observation: Vec<Vec<f64>>,
        cost: Vec<Vec<f64>>,
        discount: f64,
        metric: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n_actions = transition.len();
        if n_actions == 0 {
            return Err(Error::InvalidModel("no actions".into()));
        }
        let n_states = transition[0].len();
        if n_states == 0 {
            return Err(Error::InvalidModel("no states".into()));
        }
        let n_obs = observation.first().map_or(0, Vec::len);
        if n_obs == 0 {
            return Err(Error::InvalidModel("no observations".into()));
        }
        let mut t = Vec::with_capacity(n_actions * n_states * n_states);
        for rows in &transition {
            check_len("transition rows", n_states, rows.len())?;
            for row in rows {
                check_len("transition row", n_states, row.len())?;
                t.extend_from_slice(row);
            }
        }
        check_len("observation rows", n_states, observation.len())?;
        let mut q = Vec::with_capacity(n_states * n_obs);
        for row in &observation {
            check_len("observation row", n_obs, row.len())?;
            q.extend_from_slice(row);
        }
        check_len("cost rows", n_states, cost.len())?;
        let mut c = Vec::with_capacity(n_states * n_actions);
        for row in &cost {
            check_len("cost row", n_actions, row.len())?;
            c.extend_from_slice(row);
        }
        let metric = match metric {
            Some(m) => {
                check_len("metric rows", n_states, m.len())?;
                let mut d = Vec::with_capacity(n_states * n_states);
                for row in &m {
                    check_len("metric row", n_states, row.len())?;
                    d.extend_from_slice(row);
                }
                d
            }
            None => discrete_metric(n_states),
        };
        Ok(FinitePomdp {
            name: name.into(),
            n_states,
            n_obs,
            n_actions,
            transition: t,
            observation: q,
            cost: c,
            discount,
            metric,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `T(x'|x,u)`
    #[inline]
    pub fn transition(&self, u: usize, x: usize, x2: usize) -> f64 {
        self.transition[(u * self.n_states + x) * self.n_states + x2]
    }

    /// Row `T(.|x,u)`.
    #[inline]
    pub fn transition_row(&self, u: usize, x: usize) -> &[f64] {
        let start = (u * self.n_states + x) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// `T_u` as a row-major `|X| x |X|` slice.
    pub fn transition_matrix(&self, u: usize) -> &[f64] {
        let len = self.n_states * self.n_states;
        &self.transition[u * len..(u + 1) * len]
    }

    /// `Q(y|x)`
    #[inline]
    pub fn observation(&self, x: usize, y: usize) -> f64 {
        self.observation[x * self.n_obs + y]
    }

    /// `Q` as a row-major `|X| x |Y|` slice.
    pub fn observation_matrix(&self) -> &[f64] {
        &self.observation
    }

    #[inline]
    pub fn cost(&self, x: usize, u: usize) -> f64 {
        self.cost[x * self.n_actions + u]
    }

    #[inline]
    pub fn distance(&self, x: usize, x2: usize) -> f64 {
        self.metric[x * self.n_states + x2]
    }

    /// Row-major `|X| x |X|` metric.
    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn check_action(&self, u: usize) -> Result<()> {
        if u < self.n_actions {
            Ok(())
        } else {
            Err(Error::Index {
                kind: "action",
                index: u,
                size: self.n_actions,
            })
        }
    }

    pub fn check_obs(&self, y: usize) -> Result<()> {
        if y < self.n_obs {
            Ok(())
        } else {
            Err(Error::Index {
                kind: "observation",
                index: y,
                size: self.n_obs,
            })
        }
    }

    pub fn check_belief(&self, z: &Belief) -> Result<()> {
        if z.len() == self.n_states {
            Ok(())
        } else {
            Err(Error::Dimension {
                what: "belief",
                expected: self.n_states,
                got: z.len(),
            })
        }
    }

    /// Lists every violated model invariant. An empty list means the model
    /// is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (nx, ny, nu) = (self.n_states, self.n_obs, self.n_actions);

        for u in 0..nu {
            for x in 0..nx {
                let row = self.transition_row(u, x);
                check_stochastic_row("transition", vec![u, x], row, &mut out);
            }
        }
        for x in 0..nx {
            let row = &self.observation[x * ny..(x + 1) * ny];
            check_stochastic_row("observation", vec![x], row, &mut out);
        }
        for x in 0..nx {
            for u in 0..nu {
                let c = self.cost(x, u);
                if !c.is_finite() {
                    out.push(Violation {
                        tensor: "cost",
                        index: vec![x, u],
                        residual: f64::NAN,
                        message: "not finite".into(),
                    });
                }
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(Violation {
                tensor: "discount",
                index: vec![],
                residual: self.discount,
                message: "must lie strictly in (0, 1)".into(),
            });
        }

        for x in 0..nx {
            let d = self.distance(x, x);
            if d != 0.0 {
                out.push(Violation {
                    tensor: "metric",
                    index: vec![x, x],
                    residual: d,
                    message: "nonzero diagonal".into(),
                });
            }
            for x2 in 0..nx {
                let d = self.distance(x, x2);
                if !d.is_finite() || d < 0.0 {
                    out.push(Violation {
                        tensor: "metric",
                        index: vec![x, x2],
                        residual: d,
                        message: "negative or not finite".into(),
                    });
                }
                if x < x2 {
                    let asym = (d - self.distance(x2, x)).abs();
                    if asym > ROW_TOL {
                        out.push(Violation {
                            tensor: "metric",
                            index: vec![x, x2],
                            residual: asym,
                            message: "not symmetric".into(),
                        });
                    }
                }
            }
        }
        if nx <= TRIANGLE_CHECK_MAX {
            for i in 0..nx {
                for j in 0..nx {
                    for k in 0..nx {
                        let excess = self.distance(i, k) - self.distance(i, j) - self.distance(j, k);
                        if excess > ROW_TOL {
                            out.push(Violation {
                                tensor: "metric",
                                index: vec![i, j, k],
                                residual: excess,
                                message: "triangle inequality d(i,k) <= d(i,j) + d(j,k) fails".into(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Diameter, TV-Lipschitz constant of the kernel, Lipschitz constant of
    /// the cost and the sup-norm of the cost.
    pub fn constants(&self) -> ModelConstants {
        let nx = self.n_states;
        let mut alpha: f64 = 0.0;
        let mut k1: f64 = 0.0;
        let mut diameter: f64 = 0.0;
        for x in 0..nx {
            for x2 in (x + 1)..nx {
                let d = self.distance(x, x2);
                diameter = diameter.max(d);
                for u in 0..self.n_actions {
                    let tv: f64 = self
                        .transition_row(u, x)
                        .iter()
                        .zip(self.transition_row(u, x2))
                        .map(|(a, b)| (a - b).abs())
                        .sum();
                    let dc = (self.cost(x, u) - self.cost(x2, u)).abs();
                    alpha = alpha.max(lipschitz_ratio(tv, d));
                    k1 = k1.max(lipschitz_ratio(dc, d));
                }
            }
        }
        let c_inf = self.cost.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        ModelConstants {
            diameter,
            alpha,
            k1,
            c_inf,
        }
    }

    /// Stationary distribution of the state chain when actions are drawn
    /// i.i.d. from `exploration`.
    pub fn stationary_distribution(&self, exploration: &[f64]) -> Result<Belief> {
        check_len("exploration", self.n_actions, exploration.len())?;
        let n = self.n_states;
        // Solve pi (P - I) = 0 with the last equation replaced by sum(pi) = 1.
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        for x in 0..n {
            for x2 in 0..n {
                let p: f64 = (0..self.n_actions)
                    .map(|u| exploration[u] * self.transition(u, x, x2))
                    .sum();
                a[(x2, x)] = p - if x == x2 { 1.0 } else { 0.0 };
            }
        }
        for x in 0..n {
            a[(n - 1, x)] = 1.0;
        }
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::InvalidModel("stationary distribution is not unique".into()))?;
        Belief::new(pi.iter().copied().collect())
    }

    /// Relabels states: old state `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_states;
        check_len("permutation", n, perm.len())?;
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidModel("not a permutation".into()));
            }
        }
        let mut out = self.clone();
        for u in 0..self.n_actions {
            for x in 0..n {
                for x2 in 0..n {
                    out.transition[(u * n + perm[x]) * n + perm[x2]] = self.transition(u, x, x2);
                }
            }
        }
        for x in 0..n {
            for y in 0..self.n_obs {
                out.observation[perm[x] * self.n_obs + y] = self.observation(x, y);
            }
            for u in 0..self.n_actions {
                out.cost[perm[x] * self.n_actions + u] = self.cost(x, u);
            }
            for x2 in 0..n {
                out.metric[perm[x] * n + perm[x2]] = self.distance(x, x2);
            }
        }
        Ok(out)
    }

    pub fn to_file(&self) -> ModelFile {
        let n = self.n_states;
        ModelFile {
            name: self.name.clone(),
            num_states: n,
            num_obs: self.n_obs,
            num_actions: self.n_actions,
            transition: (0..self.n_actions)
                .map(|u| (0..n).map(|x| self.transition_row(u, x).to_vec()).collect())
                .collect(),
            observation: self.observation.chunks(self.n_obs).map(<[f64]>::to_vec).collect(),
            cost: self.cost.chunks(self.n_actions).map(<[f64]>::to_vec).collect(),
            discount: self.discount,
            metric: if self.metric == discrete_metric(n) {
                None
            } else {
                Some(self.metric.chunks(n).map(<[f64]>::to_vec).collect())
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    /// Parses a model file without repairing anything; use this to inspect
    /// malformed files with [`FinitePomdp::validate`].
    pub fn from_json_raw(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    /// Parses a model file, renormalizing stochastic rows whose sum is off
    /// by at most `1e-9` and rejecting anything that then fails validation.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut model = Self::from_json_raw(text)?;
        model.renormalize_rows()?;
        let violations = model.validate();
        if let Some(v) = violations.first() {
            return Err(Error::InvalidModel(format!(
                "{} violation(s), first: {v}",
                violations.len()
            )));
        }
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    fn renormalize_rows(&mut self) -> Result<()> {
        let n = self.n_states;
        let ny = self.n_obs;
        let rows = self
            .transition
            .chunks_mut(n)
            .map(|r| ("transition", r))
            .chain(self.observation.chunks_mut(ny).map(|r| ("observation", r)));
        for (i, (what, row)) in rows.enumerate() {
            let total: f64 = row.iter().sum();
            let residual = (total - 1.0).abs();
            if residual > LOAD_RENORM_TOL {
                return Err(Error::InvalidModel(format!(
                    "{what} row {i} sums to {total} (residual {residual:e} > {LOAD_RENORM_TOL:e})"
                )));
            }
            row.iter_mut().for_each(|p| *p /= total);
        }
        Ok(())
    }
}

/// On-disk JSON layout of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub num_states: usize,
    pub num_obs: usize,
    pub num_actions: usize,
    /// `[action][from][to]`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `[state][obs]`
    pub observation: Vec<Vec<f64>>,
    /// `[state][action]`
    pub cost: Vec<Vec<f64>>,
    pub discount: f64,
    /// `[state][state]`; omitted means the discrete metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<FinitePomdp> {
        check_len("transition actions", self.num_actions, self.transition.len())?;
        check_len("observation rows", self.num_states, self.observation.len())?;
        if let Some(row) = self.observation.first() {
            check_len("observation row", self.num_obs, row.len())?;
        }
        let finite = self
            .transition
            .iter()
            .flatten()
            .flatten()
            .chain(self.observation.iter().flatten())
            .chain(self.cost.iter().flatten())
            .chain(self.metric.iter().flatten().flatten())
            .chain(std::iter::once(&self.discount))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel("NaN or infinite entry".into()));
        }
        let model = FinitePomdp::new(
            self.name,
            self.transition,
            self.observation,
            self.cost,
            self.discount,
            self.metric,
        )?;
        check_len("num_states", self.num_states, model.n_states())?;
        Ok(model)
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

fn discrete_metric(n: usize) -> Vec<f64> {
    (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
        .collect()
}

fn lipschitz_ratio(diff: f64, d: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if d > 0.0 {
        diff / d
    } else {
        f64::INFINITY
    }
}

fn check_stochastic_row(tensor: &'static str, index: Vec<usize>, row: &[f64], out: &mut Vec<Violation>) {
    for (j, &p) in row.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            let mut idx = index.clone();
            idx.push(j);
            out.push(Violation {
                tensor,
                index: idx,
                residual: p,
                message: "entry outside [0, 1]".into(),
            });
        }
    }
    let residual = row.iter().sum::<f64>() - 1.0;
    if residual.abs() > ROW_TOL {
        out.push(Violation {
            tensor,
            index,
            residual,
            message: "row does not sum to 1".into(),
        });
    }
}
