//! Empirical filter-stability terms and the closed-form bounds on them.
//!
//! The sup over priors is taken over a finite [`PriorSet`], and the sup over
//! policies over all open-loop action sequences. Windows carry `N + 1`
//! observations and `N` actions throughout.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{for_each_obs_path, window_posterior, CodeSpace, WindowState};
use crate::metrics::{dobrushin, hilbert_metric, mixing_coefficient, tv_unchecked, GroundMetric};
use crate::model::{Belief, FinitePomdp, ModelConstants};
use crate::window::{decode_actions, DEFAULT_STATE_CAP};

/// Named priors standing in for the sup over the simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorSet {
    pub labels: Vec<String>,
    pub priors: Vec<Belief>,
}

impl PriorSet {
    pub fn new() -> Self {
        PriorSet {
            labels: Vec::new(),
            priors: Vec::new(),
        }
    }

    pub fn vertices(n: usize) -> Self {
        (0..n).fold(PriorSet::new(), |s, x| s.with(format!("dirac{x}"), Belief::dirac(n, x)))
    }

    /// Vertices, the uniform distribution and `z*`.
    pub fn standard(n: usize, z_star: &Belief) -> Self {
        PriorSet::vertices(n)
            .with("uniform", Belief::uniform(n))
            .with("z_star", z_star.clone())
    }

    pub fn with(mut self, label: impl Into<String>, prior: Belief) -> Self {
        self.labels.push(label.into());
        self.priors.push(prior);
        self
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }
}

impl Default for PriorSet {
    fn default() -> Self {
        PriorSet::new()
    }
}

/// A sup together with the arguments that attain it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witnessed {
    pub value: f64,
    pub prior: String,
    pub actions: Vec<usize>,
    /// Only for sample-path sups.
    pub observations: Option<Vec<usize>>,
}

/// The empirical stability terms at one window length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalTerms {
    pub n: usize,
    /// `sup_z sup_u E_z[W1(psi(z, I), psi(z*, I))]`.
    pub ln_w1: Witnessed,
    /// Part of `ln_w1` at its witness coming from windows impossible under
    /// `z*`, where `psi(z*, I)` is taken to be `z*`.
    pub ln_w1_unreachable: f64,
    /// `sup_z sup_{y,u} ||psi(z, I) - psi(z*, I)||_TV` over windows possible
    /// under both priors.
    pub ltv_uniform: Witnessed,
    /// `sup_z sup_u E_z[||psi(z, I) - psi(z*, I)||_TV]` over the same
    /// windows.
    pub ltv_expected: Witnessed,
    /// Largest probability under a prior of windows impossible under `z*`.
    pub excluded_mass: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    w1: f64,
    w1_unreachable: f64,
    tv_expected: f64,
    tv_sup: f64,
    tv_sup_obs: u64,
    excluded: f64,
}

/// Computes all empirical terms in one enumeration. Action sequences run in
/// parallel; each one sums its observation sequences in code order, so the
/// result does not depend on the thread count.
pub fn empirical_terms(model: &FinitePomdp, n: usize, z_star: &Belief, priors: &PriorSet) -> Result<EmpiricalTerms> {
    empirical_terms_with_cap(model, n, z_star, priors, DEFAULT_STATE_CAP)
}

pub fn empirical_terms_with_cap(
    model: &FinitePomdp,
    n: usize,
    z_star: &Belief,
    priors: &PriorSet,
    cap: u64,
) -> Result<EmpiricalTerms> {
    if priors.is_empty() {
        return Err(Error::config("prior_set", "prior set is empty"));
    }
    model.check_belief(z_star)?;
    for p in &priors.priors {
        model.check_belief(p)?;
    }
    let space = CodeSpace::new(n, model.n_obs(), model.n_actions(), cap)?;
    let ny = model.n_obs() as u64;
    let nu = model.n_actions();
    let ground = GroundMetric::new(model.metric(), model.n_states());
    let k = priors.len();
    let mut all: Vec<&[f64]> = vec![z_star.as_slice()];
    all.extend(priors.priors.iter().map(Belief::as_slice));

    let act_count = (nu as u64).pow(n as u32);
    debug_assert_eq!(act_count * ny.pow(n as u32 + 1), space.len);
    let per_act: Vec<Vec<Accum>> = (0..act_count)
        .into_par_iter()
        .map(|act_code| {
            let acts = decode_actions(act_code, n, nu);
            let mut acc = vec![Accum::default(); k];
            for_each_obs_path(model, &all, &acts, |obs, post, lik| {
                let obs_code = obs.iter().fold(0u64, |c, &y| c * ny + y as u64);
                let star_ok = lik[0] > 0.0;
                for (i, a) in acc.iter_mut().enumerate() {
                    let l = lik[i + 1];
                    if l <= 0.0 {
                        continue;
                    }
                    let reference = if star_ok { &post[0][..] } else { z_star.as_slice() };
                    let w1 = ground.w1(&post[i + 1], reference).expect("equal lengths");
                    a.w1 += l * w1;
                    if star_ok {
                        let tv = tv_unchecked(&post[i + 1], &post[0]);
                        a.tv_expected += l * tv;
                        if tv > a.tv_sup {
                            a.tv_sup = tv;
                            a.tv_sup_obs = obs_code;
                        }
                    } else {
                        a.w1_unreachable += l * w1;
                        a.excluded += l;
                    }
                }
            });
            acc
        })
        .collect();

    let witness = |key: &dyn Fn(&Accum) -> f64, with_obs: bool| {
        let mut best: Option<(f64, usize, u64)> = None;
        for (act_code, accs) in per_act.iter().enumerate() {
            for (i, a) in accs.iter().enumerate() {
                let v = key(a);
                if best.is_none_or(|(b, _, _)| v > b) {
                    best = Some((v, i, act_code as u64));
                }
            }
        }
        let (value, i, act_code) = best.expect("nonempty");
        let a = &per_act[act_code as usize][i];
        let observations = with_obs.then(|| {
            let mut obs = vec![0; n + 1];
            let mut rest = a.tv_sup_obs;
            for slot in obs.iter_mut().rev() {
                *slot = (rest % ny) as usize;
                rest /= ny;
            }
            obs
        });
        (
            Witnessed {
                value,
                prior: priors.labels[i].clone(),
                actions: decode_actions(act_code, n, nu),
                observations,
            },
            *a,
        )
    };
    let (ln_w1, at) = witness(&|a| a.w1, false);
    let (ltv_uniform, _) = witness(&|a| a.tv_sup, true);
    let (ltv_expected, _) = witness(&|a| a.tv_expected, false);
    let excluded_mass = per_act.iter().flatten().map(|a| a.excluded).fold(0.0, f64::max);
    Ok(EmpiricalTerms {
        n,
        ln_w1,
        ln_w1_unreachable: at.w1_unreachable,
        ltv_uniform,
        ltv_expected,
        excluded_mass,
    })
}

pub fn empirical_ln_w1(model: &FinitePomdp, n: usize, z_star: &Belief, priors: &PriorSet) -> Result<f64> {
    Ok(empirical_terms(model, n, z_star, priors)?.ln_w1.value)
}

pub fn empirical_ltv_uniform(model: &FinitePomdp, n: usize, z_star: &Belief, priors: &PriorSet) -> Result<f64> {
    Ok(empirical_terms(model, n, z_star, priors)?.ltv_uniform.value)
}

pub fn l_tv_expected(model: &FinitePomdp, n: usize, z_star: &Belief, priors: &PriorSet) -> Result<f64> {
    Ok(empirical_terms(model, n, z_star, priors)?.ltv_expected.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricBound {
    pub rate: f64,
    pub bound: f64,
    pub contracting: bool,
}

/// `(D/2) (alpha D (2 - delta(Q)) / 2)^N`
pub fn bound_w1_geometric(constants: &ModelConstants, delta_q: f64, n: usize) -> Result<GeometricBound> {
    if !(0.0..=1.0).contains(&delta_q) {
        return Err(Error::Parameter {
            name: "delta_q",
            value: delta_q,
            range: "[0, 1]",
        });
    }
    let d = constants.diameter;
    let rate = constants.alpha * d * (2.0 - delta_q) / 2.0;
    Ok(GeometricBound {
        rate,
        bound: d / 2.0 * rate.powi(n as i32),
        contracting: rate < 1.0,
    })
}

/// `(1 - eps_u^2 eps) / (1 + eps_u^2 eps)`
pub fn hilbert_rate(eps_obs: f64, eps_u: f64) -> f64 {
    let a = eps_u * eps_u * eps_obs;
    (1.0 - a) / (1.0 + a)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HilbertRate {
    /// Smallest entry of the observation matrix.
    pub eps_obs: f64,
    /// Mixing coefficient of each action's kernel.
    pub eps_u: Vec<f64>,
    /// Contraction factor of each action.
    pub rates: Vec<f64>,
    /// Largest of `rates`.
    pub r: f64,
    pub k: f64,
    /// `(prior, u_0, y_0, y_1)` attaining `k`.
    pub k_witness: (String, usize, usize, usize),
}

impl HilbertRate {
    /// `r^(N-1) K`, defined for `N >= 1`.
    pub fn bound(&self, n: usize) -> Option<f64> {
        (n >= 1).then(|| self.r.powi(n as i32 - 1) * self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum HilbertBound {
    Applicable(HilbertRate),
    NotApplicable { reason: String },
}

impl HilbertBound {
    pub fn bound(&self, n: usize) -> Option<f64> {
        match self {
            HilbertBound::Applicable(h) => h.bound(n),
            HilbertBound::NotApplicable { .. } => None,
        }
    }

    pub fn rate(&self) -> Option<&HilbertRate> {
        match self {
            HilbertBound::Applicable(h) => Some(h),
            HilbertBound::NotApplicable { .. } => None,
        }
    }
}

/// `K = (2 / ln 3) max h(Z_1, Z_1*)` over the prior set and all one-step
/// histories possible under both priors, with `r` the sup of the per-action
/// rates. Not applicable unless every observation probability is positive
/// and every action kernel is mixing.
pub fn bound_hilbert(model: &FinitePomdp, z_star: &Belief, priors: &PriorSet) -> Result<HilbertBound> {
    if priors.is_empty() {
        return Err(Error::config("prior_set", "prior set is empty"));
    }
    let eps_obs = model.observation_matrix().iter().copied().fold(f64::INFINITY, f64::min);
    if !(eps_obs > 0.0) {
        return Ok(HilbertBound::NotApplicable {
            reason: format!("observation matrix has a zero entry (min {eps_obs})"),
        });
    }
    let nx = model.n_states();
    let mut eps_u = Vec::with_capacity(model.n_actions());
    for u in 0..model.n_actions() {
        let e = mixing_coefficient(model.transition_matrix(u), nx)?.eps;
        if !(e > 0.0) {
            return Ok(HilbertBound::NotApplicable {
                reason: format!("transition kernel of action {u} is not mixing"),
            });
        }
        eps_u.push(e);
    }
    let rates: Vec<f64> = eps_u.iter().map(|&e| hilbert_rate(eps_obs, e)).collect();
    let r = rates.iter().copied().fold(0.0, f64::max);

    let mut h_max = 0.0;
    let mut k_witness = (priors.labels[0].clone(), 0, 0, 0);
    for (label, prior) in priors.labels.iter().zip(&priors.priors) {
        for u in 0..model.n_actions() {
            for y0 in 0..model.n_obs() {
                for y1 in 0..model.n_obs() {
                    let w = WindowState::new(vec![y0, y1], vec![u])?;
                    let a = window_posterior(model, prior, &w)?;
                    let b = window_posterior(model, z_star, &w)?;
                    if let (Some(a), Some(b)) = (a.posterior, b.posterior) {
                        let h = hilbert_metric(a.as_slice(), b.as_slice())?;
                        if h > h_max {
                            h_max = h;
                            k_witness = (label.clone(), u, y0, y1);
                        }
                    }
                }
            }
        }
    }
    Ok(HilbertBound::Applicable(HilbertRate {
        eps_obs,
        eps_u,
        rates,
        r,
        k: 2.0 / 3f64.ln() * h_max,
        k_witness,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBound {
    /// Bound on the value-function error of the window approximation.
    pub value_loss: f64,
    /// Bound on the performance loss of the window policy.
    pub policy_loss: f64,
}

impl LossBound {
    fn from_value(value_loss: f64) -> Self {
        LossBound {
            value_loss,
            policy_loss: 2.0 * value_loss,
        }
    }
}

/// `(K1 + alpha beta ||c|| / (1 - beta)) sum_t beta^t L_t`, with the tail
/// beyond the last supplied term bounded by repeating it.
pub fn loss_bound_series(constants: &ModelConstants, beta: f64, l_terms: &[f64]) -> Result<LossBound> {
    check_beta(beta)?;
    let mut sum = 0.0;
    let mut disc = 1.0;
    for &l in l_terms {
        sum += disc * l;
        disc *= beta;
    }
    if let Some(&last) = l_terms.last() {
        sum += disc * last / (1.0 - beta);
    }
    let lead = constants.k1 + constants.alpha * beta * constants.c_inf / (1.0 - beta);
    Ok(LossBound::from_value(lead * sum))
}

/// `(K1 (1 - beta) + alpha beta ||c||) (D/2) rate^N`
pub fn loss_bound_closed(constants: &ModelConstants, beta: f64, rate: f64, n: usize) -> Result<LossBound> {
    check_beta(beta)?;
    let lead = constants.k1 * (1.0 - beta) + constants.alpha * beta * constants.c_inf;
    Ok(LossBound::from_value(lead * constants.diameter / 2.0 * rate.powi(n as i32)))
}

/// `2 ||c|| / (1 - beta)^2 r^(N-1) K`
pub fn loss_bound_hilbert(c_inf: f64, beta: f64, hilbert: &HilbertRate, n: usize) -> Result<Option<f64>> {
    check_beta(beta)?;
    Ok(hilbert.bound(n).map(|b| 2.0 * c_inf / (1.0 - beta).powi(2) * b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformTvLoss {
    pub alpha_z: f64,
    /// `None` when `alpha_z beta >= 1`.
    pub loss: Option<LossBound>,
}

/// `alpha_z = (3 - 2 delta(Q)) (1 - delta_t)` and, when `alpha_z beta < 1`,
/// the value and policy losses proportional to `||c|| L_TV`.
pub fn loss_bound_uniform_tv(c_inf: f64, beta: f64, delta_q: f64, delta_t: f64, ltv: f64) -> Result<UniformTvLoss> {
    check_beta(beta)?;
    let alpha_z = (3.0 - 2.0 * delta_q) * (1.0 - delta_t);
    let loss = (alpha_z * beta < 1.0).then(|| {
        let den = 1.0 - alpha_z * beta;
        let num = (alpha_z - 1.0) * beta + 1.0;
        LossBound {
            value_loss: num / ((1.0 - beta).powi(2) * den) * c_inf * ltv,
            policy_loss: 2.0 * num / ((1.0 - beta).powi(3) * den) * c_inf * ltv,
        }
    });
    Ok(UniformTvLoss { alpha_z, loss })
}

/// Stand-in for the transition contraction coefficient: the smallest
/// Dobrushin coefficient over actions.
pub fn transition_dobrushin(model: &FinitePomdp) -> Result<f64> {
    (0..model.n_actions()).try_fold(1.0f64, |m, u| {
        Ok(m.min(dobrushin(model.transition_matrix(u), model.n_states())?))
    })
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "beta",
            value: beta,
            range: "(0, 1)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub holds: bool,
    pub witness: String,
}

/// Everything computed about filter stability at one window length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub n: usize,
    pub prior_set: Vec<String>,
    pub constants: ModelConstants,
    pub delta_q: f64,
    pub terms: EmpiricalTerms,
    pub w1_bound: GeometricBound,
    pub hilbert: HilbertBound,
    pub hilbert_bound: Option<f64>,
    pub assumptions: Vec<AssumptionCheck>,
}

impl StabilityReport {
    pub fn compute(model: &FinitePomdp, n: usize, z_star: &Belief, priors: &PriorSet) -> Result<Self> {
        let constants = model.constants();
        let nx = model.n_states();
        let delta_q = dobrushin(model.observation_matrix(), model.n_obs())?;
        let terms = empirical_terms(model, n, z_star, priors)?;
        let w1_bound = bound_w1_geometric(&constants, delta_q, n)?;
        let hilbert = bound_hilbert(model, z_star, priors)?;
        let mut assumptions = vec![
            AssumptionCheck {
                name: "w1-contraction",
                holds: w1_bound.contracting,
                witness: format!(
                    "alpha = {}, D = {}, delta(Q) = {}, rate = {}",
                    constants.alpha, constants.diameter, delta_q, w1_bound.rate
                ),
            },
            AssumptionCheck {
                name: "z-star-support",
                holds: terms.excluded_mass == 0.0,
                witness: format!("max prior mass of windows impossible under z*: {}", terms.excluded_mass),
            },
        ];
        match &hilbert {
            HilbertBound::Applicable(h) => assumptions.push(AssumptionCheck {
                name: "mixing",
                holds: true,
                witness: format!("eps = {}, eps_u = {:?}, r = {}", h.eps_obs, h.eps_u, h.r),
            }),
            HilbertBound::NotApplicable { reason } => assumptions.push(AssumptionCheck {
                name: "mixing",
                holds: false,
                witness: reason.clone(),
            }),
        }
        debug_assert_eq!(model.metric().len(), nx * nx);
        Ok(StabilityReport {
            n,
            prior_set: priors.labels.clone(),
            constants,
            delta_q,
            hilbert_bound: hilbert.bound(n),
            terms,
            w1_bound,
            hilbert,
            assumptions,
        })
    }
}
