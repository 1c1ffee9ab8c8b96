//! Standard normal distribution helpers for the truncated-Gaussian kernel.

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Upper tail `1 - Phi(x)`, accurate in relative terms for large positive x.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn cdf(x: f64) -> f64 {
    sf(-x)
}

/// Probability masses of the cells `[edges[k], edges[k+1])` under the normal
/// law `N(mu, sigma^2)` truncated to `[edges[0], edges[last]]`.
///
/// The row telescopes to the truncation normaliser, so it sums to one up to
/// rounding. The tail that keeps the differences well conditioned is chosen
/// from the side of the interval the mean lies on.
pub fn truncated_cell_masses(mu: f64, sigma: f64, edges: &[f64]) -> Vec<f64> {
    assert!(sigma > 0.0 && edges.len() >= 2);
    let lo = edges[0];
    let hi = edges[edges.len() - 1];
    let upper_side = mu <= 0.5 * (lo + hi);
    // With the mean at or below the midpoint the interval sits in the upper
    // tail, so work with sf; otherwise with cdf (= sf of the mirrored value).
    let g = |b: f64| {
        let z = (b - mu) / sigma;
        if upper_side {
            -sf(z)
        } else {
            sf(-z)
        }
    };
    let vals: Vec<f64> = edges.iter().map(|&b| g(b)).collect();
    let norm = vals[vals.len() - 1] - vals[0];
    let mut masses: Vec<f64> = vals
        .windows(2)
        .map(|w| ((w[1] - w[0]) / norm).max(0.0))
        .collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    masses
}
