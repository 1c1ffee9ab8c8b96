#![allow(dead_code)]

use swpomdp::filter::{measurement_update, predictor_step};
use swpomdp::rng::CounterRng;
use swpomdp::{Belief, FinitePomdp};

/// Dirichlet(1, ..., 1) draw; with `sparse`, each coordinate is zeroed with
/// probability 1/3 (keeping at least one).
pub fn random_simplex(rng: &mut CounterRng, n: usize, sparse: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.next_f64()).ln()).collect();
    if sparse {
        let keep = (rng.next_u64() % n as u64) as usize;
        for (i, x) in v.iter_mut().enumerate() {
            if i != keep && rng.next_f64() < 1.0 / 3.0 {
                *x = 0.0;
            }
        }
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn random_kernel(rng: &mut CounterRng, rows: usize, cols: usize, sparse: bool) -> Vec<f64> {
    (0..rows).flat_map(|_| random_simplex(rng, cols, sparse)).collect()
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Log of the max/min ratio over the common support; assumes equal supports.
pub fn hilbert(a: &[f64], b: &[f64]) -> f64 {
    let ratios: Vec<f64> = a.iter().zip(b).filter(|(x, _)| **x > 0.0).map(|(x, y)| x / y).collect();
    let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
    let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
    (hi / lo).ln()
}

pub fn push(mu: &[f64], kernel: &[f64], cols: usize) -> Vec<f64> {
    (0..cols)
        .map(|j| mu.iter().enumerate().map(|(i, m)| m * kernel[i * cols + j]).sum())
        .collect()
}

/// All set partitions of `0..n` as block labels (restricted growth strings).
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            go(i + 1, n, max.max(b), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut cur = vec![0];
    go(1, n, 0, &mut cur, &mut out);
    out
}

/// Dobrushin coefficient by brute force over row pairs and column
/// partitions.
pub fn dobrushin_by_partitions(kernel: &[f64], cols: usize) -> f64 {
    let rows = kernel.len() / cols;
    let parts = set_partitions(cols);
    let mut best: f64 = 1.0;
    for x in 0..rows {
        for y in 0..rows {
            for p in &parts {
                let blocks = p.iter().copied().max().unwrap() + 1;
                let mut kx = vec![0.0; blocks];
                let mut ky = vec![0.0; blocks];
                for j in 0..cols {
                    kx[p[j]] += kernel[x * cols + j];
                    ky[p[j]] += kernel[y * cols + j];
                }
                best = best.min(kx.iter().zip(&ky).map(|(a, b)| a.min(*b)).sum());
            }
        }
    }
    best
}

/// Largest `eps` on a grid of spacing `step` for which some `lambda`
/// satisfies `eps lambda(A) <= K(x, A) <= lambda(A) / eps` for every row
/// `x` and every subset `A` of the columns, checked subset by subset.
pub fn mixing_by_grid(kernel: &[f64], cols: usize, step: f64) -> f64 {
    let rows = kernel.len() / cols;
    let k = |x: usize, j: usize| kernel[x * cols + j];
    let steps = (1.0 / step).round() as usize;
    for s in (1..=steps).rev() {
        let eps = s as f64 * step;
        // candidate: middle of the per-column interval [eps max, min / eps]
        let mut lambda = vec![0.0; cols];
        for (j, l) in lambda.iter_mut().enumerate() {
            let hi = (0..rows).map(|x| k(x, j)).fold(0.0, f64::max);
            let lo = (0..rows).map(|x| k(x, j)).fold(f64::INFINITY, f64::min);
            *l = 0.5 * (eps * hi + lo / eps);
        }
        let ok = (1u32..(1 << cols)).all(|mask| {
            let la: f64 = (0..cols).filter(|j| mask >> j & 1 == 1).map(|j| lambda[j]).sum();
            (0..rows).all(|x| {
                let ka: f64 = (0..cols).filter(|j| mask >> j & 1 == 1).map(|j| k(x, j)).sum();
                eps * la <= ka + 1e-15 && ka <= la / eps + 1e-15
            })
        });
        if ok {
            return eps;
        }
    }
    0.0
}

/// One filter step `F(mu, y, u)`: predict with `u`, then update with `y`.
pub fn filter_step(model: &FinitePomdp, mu: &[f64], y: usize, u: usize) -> Option<Vec<f64>> {
    let pred = predictor_step(model, &Belief::new(mu.to_vec()).unwrap(), u).unwrap();
    measurement_update(model, &pred, y)
        .unwrap()
        .posterior()
        .map(|b| b.as_slice().to_vec())
}

/// Discounted cost of a window policy estimated by simulation, written
/// independently of the library's product-chain evaluation. Returns the
/// mean and its standard error.
pub fn monte_carlo_window_value(
    model: &FinitePomdp,
    actions: &[usize],
    n: usize,
    prior: &[f64],
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> (f64, f64) {
    let (ny, nu, nx) = (model.n_obs(), model.n_actions(), model.n_states());
    let beta = model.discount();
    let draw = |rng: &mut CounterRng, p: &[f64]| {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (i, &w) in p.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        p.iter().rposition(|&w| w > 0.0).unwrap()
    };
    let obs_row = |x: usize| (0..ny).map(|y| model.observation(x, y)).collect::<Vec<_>>();
    let explore = vec![1.0 / nu as f64; nu];
    let mut returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut rng = CounterRng::new(seed).fork(e as u64);
        let mut x = draw(&mut rng, prior);
        let mut obs = vec![draw(&mut rng, &obs_row(x))];
        let mut acts = Vec::new();
        for _ in 0..n {
            let u = draw(&mut rng, &explore);
            x = draw(&mut rng, &(0..nx).map(|x2| model.transition(u, x, x2)).collect::<Vec<_>>());
            acts.push(u);
            obs.push(draw(&mut rng, &obs_row(x)));
        }
        let mut total = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            // code: observations then actions, oldest first
            let mut code = 0usize;
            for &y in &obs {
                code = code * ny + y;
            }
            for &a in &acts {
                code = code * nu + a;
            }
            let u = actions[code];
            total += disc * model.cost(x, u);
            disc *= beta;
            x = draw(&mut rng, &(0..nx).map(|x2| model.transition(u, x, x2)).collect::<Vec<_>>());
            obs.remove(0);
            obs.push(draw(&mut rng, &obs_row(x)));
            if n > 0 {
                acts.remove(0);
                acts.push(u);
            }
        }
        returns.push(total);
    }
    let m = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (episodes as f64 - 1.0);
    (m, (var / episodes as f64).sqrt())
}

/// Least-squares slope of `ln(values)` against `0, 1, 2, ...`.
pub fn log_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let xs: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
