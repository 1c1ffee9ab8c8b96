//! Exact Wasserstein-1 on a finite metric space via min-cost flow.
//!
//! The transportation problem `min sum pi_ij d(i,j)` subject to the marginals
//! is solved by successive shortest paths on the bipartite residual graph.
//! Shortest paths are found with Bellman-Ford since residual arcs carry
//! negative costs. Every augmentation exhausts a supply, a demand or a
//! residual arc, so the loop terminates after finitely many steps.

use crate::error::{Error, Result};

/// Masses below this are treated as exhausted.
const MASS_TOL: f64 = 1e-15;

/// An optimal coupling and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    /// Row-major `n x n`, rows indexed by the source distribution.
    pub plan: Vec<f64>,
}

/// `metric` is row-major `n x n`.
pub fn optimal_transport(mu: &[f64], nu: &[f64], metric: &[f64]) -> Result<TransportPlan> {
    let n = mu.len();
    if nu.len() != n {
        return Err(Error::Dimension {
            what: "w1 second argument",
            expected: n,
            got: nu.len(),
        });
    }
    if metric.len() != n * n {
        return Err(Error::Dimension {
            what: "w1 metric",
            expected: n * n,
            got: metric.len(),
        });
    }
    let mut supply = mu.to_vec();
    let mut demand = nu.to_vec();
    // Under the triangle inequality some optimal plan keeps min(mu_i, nu_i)
    // in place.
    let mut plan = vec![0.0; n * n];
    for i in 0..n {
        let stay = supply[i].min(demand[i]).max(0.0);
        plan[i * n + i] = stay;
        supply[i] -= stay;
        demand[i] -= stay;
    }

    // Nodes 0..n are sources, n..2n are sinks.
    let mut dist = vec![0.0f64; 2 * n];
    let mut pred = vec![usize::MAX; 2 * n];
    loop {
        if supply.iter().all(|&s| s <= MASS_TOL) || demand.iter().all(|&t| t <= MASS_TOL) {
            break;
        }
        for v in 0..2 * n {
            dist[v] = if v < n && supply[v] > MASS_TOL { 0.0 } else { f64::INFINITY };
            pred[v] = usize::MAX;
        }
        // Bellman-Ford over forward arcs i -> n+j and backward arcs n+j -> i.
        for _ in 0..2 * n {
            let mut changed = false;
            for i in 0..n {
                if dist[i].is_finite() {
                    for j in 0..n {
                        let cand = dist[i] + metric[i * n + j];
                        if cand < dist[n + j] - 1e-15 {
                            dist[n + j] = cand;
                            pred[n + j] = i;
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..n {
                if dist[n + j].is_finite() {
                    for i in 0..n {
                        if plan[i * n + j] > MASS_TOL {
                            let cand = dist[n + j] - metric[i * n + j];
                            if cand < dist[i] - 1e-15 {
                                dist[i] = cand;
                                pred[i] = n + j;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..n)
            .filter(|&j| demand[j] > MASS_TOL && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]));
        let Some(sink) = sink else { break };

        let mut bottleneck = demand[sink];
        let mut v = n + sink;
        let mut hops = 0;
        while pred[v] != usize::MAX {
            hops += 1;
            if hops > 2 * n {
                // Rounding produced a predecessor cycle; the residual is at
                // noise level.
                break;
            }
            let u = pred[v];
            if v < n {
                // backward arc (n + j) -> i cancels flow on i -> j
                bottleneck = bottleneck.min(plan[v * n + (u - n)]);
            }
            v = u;
        }
        if hops > 2 * n {
            break;
        }
        bottleneck = bottleneck.min(supply[v]);

        let source = v;
        let mut v = n + sink;
        while pred[v] != usize::MAX {
            let u = pred[v];
            if v >= n {
                plan[u * n + (v - n)] += bottleneck;
            } else {
                plan[v * n + (u - n)] -= bottleneck;
            }
            v = u;
        }
        supply[source] -= bottleneck;
        demand[sink] -= bottleneck;
    }
    let cost = plan.iter().zip(metric).map(|(p, d)| p * d).sum();
    Ok(TransportPlan { cost, plan })
}
