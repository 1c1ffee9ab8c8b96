//! Canonical example models.

use crate::error::{Error, Result};
use crate::model::FinitePomdp;
use crate::normal;

fn open_unit(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value: v,
            range: "(0, 1)",
        })
    }
}

fn nonneg(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name,
            value: v,
            range: "[0, inf)",
        })
    }
}

/// Parameters of the two-state machine repair problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineRepair {
    /// Channel flip probability.
    pub eps: f64,
    /// Repair success probability from the broken state.
    pub kappa: f64,
    /// Breakdown probability from the working state when not repairing.
    pub theta: f64,
    /// Cost of a repair.
    pub repair_cost: f64,
    /// Cost of a broken machine.
    pub broken_cost: f64,
    pub beta: f64,
}

impl MachineRepair {
    /// `eps = kappa = theta = 0.3`, `R = 2`, `E = 1`, `beta = 0.8`.
    pub const CASE_1: MachineRepair = MachineRepair {
        eps: 0.3,
        kappa: 0.3,
        theta: 0.3,
        repair_cost: 2.0,
        broken_cost: 1.0,
        beta: 0.8,
    };

    /// `eps = 0.2`, `kappa = theta = 0.4`, `R = 2`, `E = 1`, `beta = 0.8`.
    pub const CASE_2: MachineRepair = MachineRepair {
        eps: 0.2,
        kappa: 0.4,
        theta: 0.4,
        ..Self::CASE_1
    };

    /// Stationary law of the state under uniformly random repairs:
    /// `(theta, kappa) / (theta + kappa)`.
    pub fn stationary(&self) -> [f64; 2] {
        let s = self.theta + self.kappa;
        [self.theta / s, self.kappa / s]
    }

    /// State 0 is broken, state 1 is working; action 1 repairs.
    ///
    /// A broken machine left alone stays broken, and a working machine under
    /// repair stays working. Only `kappa` (repair succeeds) and `theta`
    /// (breakdown) are free.
    pub fn build(&self) -> Result<FinitePomdp> {
        open_unit("eps", self.eps)?;
        open_unit("kappa", self.kappa)?;
        open_unit("theta", self.theta)?;
        nonneg("R", self.repair_cost)?;
        nonneg("E", self.broken_cost)?;
        open_unit("beta", self.beta)?;
        let (e, k, t) = (self.eps, self.kappa, self.theta);
        let (r, b) = (self.repair_cost, self.broken_cost);
        FinitePomdp::new(
            "machine_repair",
            vec![
                vec![vec![1.0, 0.0], vec![t, 1.0 - t]],
                vec![vec![1.0 - k, k], vec![0.0, 1.0]],
            ],
            vec![vec![1.0 - e, e], vec![e, 1.0 - e]],
            vec![vec![b, r + b], vec![0.0, r]],
            self.beta,
            None,
        )
    }
}

pub fn build_machine_repair(
    eps: f64,
    kappa: f64,
    theta: f64,
    repair_cost: f64,
    broken_cost: f64,
    beta: f64,
) -> Result<FinitePomdp> {
    MachineRepair {
        eps,
        kappa,
        theta,
        repair_cost,
        broken_cost,
        beta,
    }
    .build()
}

/// Default cost for the examples whose cost is left free:
/// `c(x,u) = (x + u) / (|X| - 1 + |U| - 1)`, which lies in `[0, 1]`.
pub fn default_cost(n_states: usize, n_actions: usize) -> Vec<Vec<f64>> {
    let scale = (n_states + n_actions - 2).max(1) as f64;
    (0..n_states)
        .map(|x| (0..n_actions).map(|u| (x + u) as f64 / scale).collect())
        .collect()
}

/// Four states, two observations, two actions, channel noise `eps`.
pub fn build_example1(eps: f64, beta: f64, cost: Option<Vec<Vec<f64>>>) -> Result<FinitePomdp> {
    open_unit("eps", eps)?;
    open_unit("beta", beta)?;
    let (h, t, s) = (1.0 / 2.0, 1.0 / 3.0, 1.0 / 6.0);
    let t0 = vec![
        vec![h, t, s, 0.0],
        vec![0.0, h, s, t],
        vec![h, s, 0.0, t],
        vec![t, t, t, 0.0],
    ];
    let t1 = vec![
        vec![t, h, s, 0.0],
        vec![0.0, t, h, s],
        vec![h, t, 0.0, s],
        vec![t, t, t, 0.0],
    ];
    let q = vec![
        vec![1.0 - eps, eps],
        vec![1.0 - eps, eps],
        vec![eps, 1.0 - eps],
        vec![eps, 1.0 - eps],
    ];
    FinitePomdp::new(
        "example1",
        vec![t0, t1],
        q,
        cost.unwrap_or_else(|| default_cost(4, 2)),
        beta,
        None,
    )
}

/// Three states, two observations, two mixing kernels, channel noise `eps`.
pub fn build_example3(eps: f64, beta: f64, cost: Option<Vec<Vec<f64>>>) -> Result<FinitePomdp> {
    open_unit("eps", eps)?;
    open_unit("beta", beta)?;
    let (h, t, s) = (1.0 / 2.0, 1.0 / 3.0, 1.0 / 6.0);
    let t0 = vec![vec![h, t, s], vec![t, h, s], vec![h, s, t]];
    let t1 = vec![vec![t, h, s], vec![s, t, h], vec![2.0 / 3.0, s, s]];
    let q = vec![vec![1.0 - eps, eps], vec![1.0 - eps, eps], vec![eps, 1.0 - eps]];
    FinitePomdp::new(
        "example3",
        vec![t0, t1],
        q,
        cost.unwrap_or_else(|| default_cost(3, 2)),
        beta,
        None,
    )
}

/// Selects Example 1 or 3 by number.
pub fn build_example(id: u32, eps: f64, beta: f64) -> Result<FinitePomdp> {
    match id {
        1 => build_example1(eps, beta, None),
        3 => build_example3(eps, beta, None),
        _ => Err(Error::config("id", format!("unknown example {id}; expected 1 or 3"))),
    }
}

/// Grid discretisation of the truncated-Gaussian random walk on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example2 {
    pub sigma: f64,
    pub grid_size: usize,
    /// Actions are `0..=p`.
    pub p: usize,
    pub beta: f64,
    /// `[cell][obs]`. `None` selects the threshold channel with flip
    /// probability `eps`.
    pub channel: Option<Vec<Vec<f64>>>,
    pub eps: f64,
}

impl Example2 {
    /// Continuous-space TV-Lipschitz constant `sqrt(2) / (sigma sqrt(pi))`.
    pub fn continuous_alpha(&self) -> f64 {
        std::f64::consts::SQRT_2 / (self.sigma * std::f64::consts::PI.sqrt())
    }

    pub fn midpoints(&self) -> Vec<f64> {
        let g = self.grid_size as f64;
        (0..self.grid_size).map(|k| (k as f64 + 0.5) / g).collect()
    }

    /// Cells are uniform on `[0, 1]` and represented by their midpoints. The
    /// kernel row of cell `x` under action `u` holds the masses of the
    /// normal law with mean `x + u` truncated to `[0, 1]`. The cost is
    /// `c(x, u) = x - u` and the metric is `|x - x'|` on the midpoints.
    pub fn build(&self) -> Result<FinitePomdp> {
        if !(self.sigma > 0.0) {
            return Err(Error::Parameter {
                name: "sigma",
                value: self.sigma,
                range: "(0, inf)",
            });
        }
        if self.grid_size < 2 {
            return Err(Error::Parameter {
                name: "grid_size",
                value: self.grid_size as f64,
                range: "[2, inf)",
            });
        }
        if self.p < 1 {
            return Err(Error::Parameter {
                name: "p",
                value: self.p as f64,
                range: "[1, inf)",
            });
        }
        open_unit("beta", self.beta)?;
        let n = self.grid_size;
        let mids = self.midpoints();
        let edges: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let transition = (0..=self.p)
            .map(|u| {
                mids.iter()
                    .map(|&x| normal::truncated_cell_masses(x + u as f64, self.sigma, &edges))
                    .collect()
            })
            .collect();
        let channel = match &self.channel {
            Some(c) => c.clone(),
            None => {
                if !(0.0..0.5).contains(&self.eps) {
                    return Err(Error::Parameter {
                        name: "eps",
                        value: self.eps,
                        range: "[0, 0.5)",
                    });
                }
                mids.iter()
                    .map(|&x| {
                        if x > 0.5 {
                            vec![self.eps, 1.0 - self.eps]
                        } else {
                            vec![1.0 - self.eps, self.eps]
                        }
                    })
                    .collect()
            }
        };
        let cost = mids
            .iter()
            .map(|&x| (0..=self.p).map(|u| x - u as f64).collect())
            .collect();
        let metric = mids
            .iter()
            .map(|&a| mids.iter().map(|&b| (a - b).abs()).collect())
            .collect();
        FinitePomdp::new("example2", transition, channel, cost, self.beta, Some(metric))
    }
}

pub fn build_example2(sigma: f64, grid_size: usize, p: usize) -> Result<FinitePomdp> {
    Example2 {
        sigma,
        grid_size,
        p,
        beta: 0.8,
        channel: None,
        eps: 0.1,
    }
    .build()
}
