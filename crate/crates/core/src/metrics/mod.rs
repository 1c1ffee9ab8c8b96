//! Distances between finite distributions and contraction coefficients of
//! stochastic kernels.
//!
//! Total variation follows the `sum_i |mu_i - nu_i|` convention (range
//! `[0, 2]`), and every bound in [`crate::stability`] uses the same one.
//! Kernels are passed as row-major slices together with their column count.

pub mod transport;

use serde::Serialize;

use crate::error::{Error, Result};

/// Entries below this are outside the support for the Hilbert metric.
pub const SUPPORT_TOL: f64 = 1e-14;
/// Row-sum tolerance when a kernel argument must be stochastic.
pub const KERNEL_TOL: f64 = 1e-9;

fn same_len(what: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected: a.len(),
            got: b.len(),
        })
    }
}

/// `sum_i |mu_i - nu_i|`
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64> {
    same_len("tv_distance", mu, nu)?;
    Ok(tv_unchecked(mu, nu))
}

#[inline]
pub(crate) fn tv_unchecked(mu: &[f64], nu: &[f64]) -> f64 {
    mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum()
}

/// Exact Wasserstein-1 distance with ground metric `metric` (row-major
/// `n x n`).
pub fn w1_distance(mu: &[f64], nu: &[f64], metric: &[f64]) -> Result<f64> {
    Ok(transport::optimal_transport(mu, nu, metric)?.cost)
}

/// A ground metric with its W1 solver picked once: `TV / 2` for the
/// discrete metric, the CDF formula for points on a line, and min-cost
/// flow otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundMetric {
    Discrete,
    /// States sorted by position.
    Line { order: Vec<usize>, points: Vec<f64> },
    General(Vec<f64>),
}

impl GroundMetric {
    /// `metric` is row-major `n x n` and assumed to be a valid metric.
    pub fn new(metric: &[f64], n: usize) -> Self {
        let d = |i: usize, j: usize| metric[i * n + j];
        let pairs = || (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
        if pairs().all(|(i, j)| d(i, j) == if i == j { 0.0 } else { 1.0 }) {
            return GroundMetric::Discrete;
        }
        // On a line the farthest point from anything is an endpoint.
        let end = (0..n).max_by(|&a, &b| d(0, a).total_cmp(&d(0, b))).unwrap_or(0);
        let points: Vec<f64> = (0..n).map(|i| d(end, i)).collect();
        let scale = metric.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if pairs().all(|(i, j)| (d(i, j) - (points[i] - points[j]).abs()).abs() <= 1e-12 * scale) {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
            return GroundMetric::Line { order, points };
        }
        GroundMetric::General(metric.to_vec())
    }

    pub fn w1(&self, mu: &[f64], nu: &[f64]) -> Result<f64> {
        same_len("w1", mu, nu)?;
        match self {
            GroundMetric::Discrete => Ok(0.5 * tv_unchecked(mu, nu)),
            GroundMetric::Line { order, points } => {
                if order.len() != mu.len() {
                    return Err(Error::Dimension {
                        what: "w1 metric",
                        expected: order.len(),
                        got: mu.len(),
                    });
                }
                let mut gap = 0.0;
                let mut total = 0.0;
                for w in order.windows(2) {
                    gap += mu[w[0]] - nu[w[0]];
                    total += gap.abs() * (points[w[1]] - points[w[0]]);
                }
                Ok(total)
            }
            GroundMetric::General(metric) => w1_distance(mu, nu, metric),
        }
    }
}

/// Distances of a pair of distributions under all three metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignedDiffReport {
    pub tv: f64,
    pub w1: f64,
    /// `+inf` when the supports differ.
    pub hilbert: f64,
}

pub fn compare(mu: &[f64], nu: &[f64], metric: &[f64]) -> Result<SignedDiffReport> {
    Ok(SignedDiffReport {
        tv: tv_distance(mu, nu)?,
        w1: w1_distance(mu, nu, metric)?,
        hilbert: hilbert_metric(mu, nu)?,
    })
}

fn check_kernel(kernel: &[f64], n_cols: usize) -> Result<usize> {
    if n_cols == 0 || !kernel.len().is_multiple_of(n_cols) || kernel.is_empty() {
        return Err(Error::Dimension {
            what: "kernel columns",
            expected: n_cols,
            got: kernel.len(),
        });
    }
    for (x, row) in kernel.chunks(n_cols).enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > KERNEL_TOL || row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Probability(format!(
                "kernel row {x} is not a probability vector (sum {total})"
            )));
        }
    }
    Ok(kernel.len() / n_cols)
}

/// Dobrushin coefficient `min_{x,x'} sum_j min(K[x][j], K[x'][j])`.
///
/// On a finite space the infimum over partitions is attained by the
/// partition into singletons, since merging cells can only increase the
/// sum of minima.
pub fn dobrushin(kernel: &[f64], n_cols: usize) -> Result<f64> {
    let n_rows = check_kernel(kernel, n_cols)?;
    let mut best: f64 = 1.0;
    for x in 0..n_rows {
        let a = &kernel[x * n_cols..(x + 1) * n_cols];
        for x2 in (x + 1)..n_rows {
            let b = &kernel[x2 * n_cols..(x2 + 1) * n_cols];
            let overlap: f64 = a.iter().zip(b).map(|(p, q)| p.min(*q)).sum();
            best = best.min(overlap);
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Hilbert projective metric between nonnegative vectors.
///
/// Zero when both vanish, `+inf` when the supports differ, otherwise the
/// log of the ratio between the largest and smallest of `mu_i / nu_i` over
/// the common support.
pub fn hilbert_metric(mu: &[f64], nu: &[f64]) -> Result<f64> {
    same_len("hilbert_metric", mu, nu)?;
    if mu.iter().chain(nu).any(|&v| v < 0.0 || v.is_nan()) {
        return Err(Error::Probability("hilbert_metric needs nonnegative entries".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut any = false;
    for (&a, &b) in mu.iter().zip(nu) {
        let (ina, inb) = (a >= SUPPORT_TOL, b >= SUPPORT_TOL);
        if ina != inb {
            return Ok(f64::INFINITY);
        }
        if ina {
            any = true;
            let r = a / b;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok(if any { (hi / lo).ln() } else { 0.0 })
}

/// Best constant of a mixing kernel and the reference measure that attains
/// it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingCoefficient {
    pub eps: f64,
    pub lambda: Vec<f64>,
}

/// Largest `eps` with `eps lambda(A) <= K(x, A) <= lambda(A) / eps` for
/// some measure `lambda`.
///
/// On singletons the constraint reads `eps lambda_j <= K[x][j] <= lambda_j /
/// eps` for all `x`, which is feasible iff `eps^2 <= min_x K[x][j] / max_x
/// K[x][j]`. It is attained by `lambda_j = sqrt(min_j max_j)`. Sets then
/// follow by summing, and the columns do not interact, so the columnwise
/// minimum is optimal. Columns that are identically zero impose nothing. A
/// column with a zero and a positive entry forces `eps = 0`.
pub fn mixing_coefficient(kernel: &[f64], n_cols: usize) -> Result<MixingCoefficient> {
    let n_rows = check_kernel(kernel, n_cols)?;
    let mut eps: f64 = 1.0;
    let mut lambda = vec![0.0; n_cols];
    for j in 0..n_cols {
        let col = (0..n_rows).map(|x| kernel[x * n_cols + j]);
        let (lo, hi) = col.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi == 0.0 {
            continue;
        }
        lambda[j] = (lo * hi).sqrt();
        eps = eps.min((lo / hi).sqrt());
    }
    Ok(MixingCoefficient { eps, lambda })
}

/// `(mu K)_j = sum_i mu_i K[i][j]`
pub fn push_forward(mu: &[f64], kernel: &[f64], n_cols: usize) -> Result<Vec<f64>> {
    if kernel.len() != mu.len() * n_cols {
        return Err(Error::Dimension {
            what: "push_forward kernel",
            expected: mu.len() * n_cols,
            got: kernel.len(),
        });
    }
    let mut out = vec![0.0; n_cols];
    for (i, &m) in mu.iter().enumerate() {
        for (o, &k) in out.iter_mut().zip(&kernel[i * n_cols..(i + 1) * n_cols]) {
            *o += m * k;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_example;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        let m = build_example(1, 0.2, 0.9).unwrap();
        let tv = tv_distance(m.transition_row(0, 0), m.transition_row(0, 1)).unwrap();
        assert!((tv - 1.0).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn hilbert_examples() {
        assert!((hilbert_metric(&[1.0, 3.0], &[2.0, 2.0]).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(hilbert_metric(&[0.2, 0.5, 0.3], &[0.6, 1.5, 0.9]).unwrap() < 1e-15);
        assert_eq!(hilbert_metric(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(hilbert_metric(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), f64::INFINITY);
        assert_eq!(hilbert_metric(&[1e-15, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(hilbert_metric(&[-1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn dobrushin_examples() {
        let constant = [0.2, 0.5, 0.3, 0.2, 0.5, 0.3];
        assert!((dobrushin(&constant, 3).unwrap() - 1.0).abs() < 1e-15);
        let eps = 0.15;
        let m = build_example(1, eps, 0.9).unwrap();
        let d = dobrushin(m.observation_matrix(), 2).unwrap();
        assert!((d - 2.0 * eps).abs() < 1e-15);
        assert!(dobrushin(&[0.5, 0.4], 2).is_err());
    }

    #[test]
    fn mixing_examples() {
        let m = build_example(3, 0.2, 0.9).unwrap();
        let e0 = mixing_coefficient(m.transition_matrix(0), 3).unwrap();
        let e1 = mixing_coefficient(m.transition_matrix(1), 3).unwrap();
        assert!((e0.eps - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((e1.eps - 0.5).abs() < 1e-15);

        let constant = [0.2, 0.8, 0.2, 0.8];
        assert!((mixing_coefficient(&constant, 2).unwrap().eps - 1.0).abs() < 1e-15);

        let ex1 = build_example(1, 0.2, 0.9).unwrap();
        assert_eq!(mixing_coefficient(ex1.transition_matrix(0), 4).unwrap().eps, 0.0);
    }

    #[test]
    fn lambda_certifies_the_mixing_bounds() {
        let m = build_example(3, 0.2, 0.9).unwrap();
        for u in 0..2 {
            let k = m.transition_matrix(u);
            let mc = mixing_coefficient(k, 3).unwrap();
            for x in 0..3 {
                for j in 0..3 {
                    let v = k[x * 3 + j];
                    assert!(mc.eps * mc.lambda[j] <= v + 1e-15);
                    assert!(v <= mc.lambda[j] / mc.eps + 1e-15);
                }
            }
        }
    }

    #[test]
    fn ground_metric_detects_structure() {
        let discrete = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(GroundMetric::new(&discrete, 2), GroundMetric::Discrete);
        // points 2, 0, 5
        let line = [0.0, 2.0, 3.0, 2.0, 0.0, 5.0, 3.0, 5.0, 0.0];
        let g = GroundMetric::new(&line, 3);
        assert!(matches!(g, GroundMetric::Line { .. }));
        let (mu, nu) = ([0.2, 0.5, 0.3], [0.6, 0.1, 0.3]);
        let want = w1_distance(&mu, &nu, &line).unwrap();
        assert!((g.w1(&mu, &nu).unwrap() - want).abs() < 1e-14);
        let cycle = [0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 2.0, 1.0, 1.0, 0.0, 1.0, 1.0, 2.0, 1.0, 0.0];
        assert!(matches!(GroundMetric::new(&cycle, 4), GroundMetric::General(_)));
    }

    #[test]
    fn w1_identity_of_indiscernibles() {
        let d = [0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        assert_eq!(w1_distance(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], &d).unwrap(), 0.0);
    }
}
