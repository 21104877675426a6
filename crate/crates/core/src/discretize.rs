//! Tauchen discretization of Gaussian AR(1) laws into finite chains.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::FiniteChain;

/// Default grid half-width in unconditional standard deviations.
pub const DEFAULT_HALF_WIDTH: f64 = 3.0;

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Discretizes `x' = (1 − ρ)·mean + ρ x + ε`, `ε ~ N(0, δ²)`, on `n` equally
/// spaced states spanning `mean ± m` unconditional standard deviations.
///
/// Interior cells are bounded by grid midpoints; the end cells absorb the
/// tails and the last column of each row takes the residual mass so rows sum
/// to one exactly.
pub fn tauchen(rho: f64, delta: f64, mean: f64, n: usize, m: f64) -> Result<FiniteChain> {
    if n == 0 {
        return Err(Error::Parameter("Tauchen needs at least one state".into()));
    }
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(Error::Parameter(format!("persistence must lie in (-1, 1), got {rho}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Parameter(format!("innovation std must be positive, got {delta}")));
    }
    if !(mean.is_finite() && m.is_finite() && m > 0.0) {
        return Err(Error::Parameter("mean and half-width must be finite, half-width positive".into()));
    }
    if n == 1 {
        return Ok(FiniteChain::degenerate(mean));
    }
    let s = delta / (1.0 - rho * rho).sqrt();
    let lo = mean - m * s;
    let step = 2.0 * m * s / (n - 1) as f64;
    let states: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let half = step / 2.0;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let centre = (1.0 - rho) * mean + rho * states[i];
        let mut acc = 0.0;
        for j in 0..n - 1 {
            let upper = normal_cdf((states[j] - centre + half) / delta);
            let lower = if j == 0 {
                0.0
            } else {
                normal_cdf((states[j] - centre - half) / delta)
            };
            let v = (upper - lower).max(0.0);
            p[(i, j)] = v;
            acc += v;
        }
        p[(i, n - 1)] = (1.0 - acc).max(0.0);
    }
    FiniteChain::new(states, p)
}

/// Tauchen in log space for `log σ' = (1 − ρ)σ̄ + ρ log σ + ε`; the returned
/// states are volatility levels.
pub fn discretize_log_volatility(rho: f64, delta: f64, log_mean: f64, n: usize, m: f64) -> Result<FiniteChain> {
    tauchen(rho, delta, log_mean, n, m)?.map_states(f64::exp)
}

/// Stationary level mean `exp(σ̄ + δ²/(2(1 − ρ²)))` of a lognormal AR(1).
pub fn lognormal_stationary_mean(rho: f64, delta: f64, log_mean: f64) -> f64 {
    (log_mean + delta * delta / (2.0 * (1.0 - rho * rho))).exp()
}
