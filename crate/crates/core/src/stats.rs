//! Inequality statistics of a wealth sample: Pareto tail exponents from
//! rank–size regressions, the Gini coefficient, Lorenz curve and cumulative
//! wealth shares.

use serde::Serialize;

use crate::error::{Error, Result};

/// Ascending copy of `sample`; ties keep their original order.
pub fn sorted_ascending(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn check_nonnegative(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::Parameter("empty sample".into()));
    }
    if let Some(x) = sample.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Domain(format!("wealth must be finite and nonnegative, got {x}")));
    }
    Ok(())
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Tail exponent from an ascending-sorted sample.
pub fn tail_exponent_sorted(sorted: &[f64], top_fraction: f64, rank_shift: bool) -> Result<f64> {
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(Error::Parameter(format!("top fraction must lie in (0, 1), got {top_fraction}")));
    }
    let n = sorted.len();
    if n < 100 {
        return Err(Error::Parameter(format!("tail regression needs at least 100 observations, got {n}")));
    }
    let k = (top_fraction * n as f64).ceil() as usize;
    let top = &sorted[n - k..];
    let positive: Vec<f64> = top.iter().copied().filter(|&x| x > 0.0).collect();
    let mut distinct = 0usize;
    let mut last = f64::NAN;
    for &x in &positive {
        if x != last {
            distinct += 1;
            last = x;
        }
    }
    if distinct < 10 {
        return Err(Error::UndefinedExponent(format!(
            "top slice has {distinct} distinct positive values, need at least 10"
        )));
    }
    let shift = if rank_shift { 0.5 } else { 0.0 };
    let m = positive.len();
    let log_w: Vec<f64> = positive.iter().rev().map(|x| x.ln()).collect();
    let log_r: Vec<f64> = (1..=m).map(|r| (r as f64 - shift).ln()).collect();
    Ok(-ols_slope(&log_w, &log_r))
}

/// Pareto exponent of the upper tail: OLS of log rank (largest value has
/// rank one) on log wealth over the top `top_fraction` of the sample.
pub fn tail_exponent(sample: &[f64], top_fraction: f64) -> Result<f64> {
    check_nonnegative(sample)?;
    tail_exponent_sorted(&sorted_ascending(sample), top_fraction, false)
}

/// Numerator and denominator of the Gini coefficient of an ascending sample:
/// `Σ (2i − n − 1) x₍ᵢ₎` over `n Σ x`.
pub fn gini_parts_sorted(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    let mut num = 0.0;
    let mut total = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        num += (2.0 * (i + 1) as f64 - n as f64 - 1.0) * x;
        total += x;
    }
    (num, n as f64 * total)
}

pub fn gini_sorted(sorted: &[f64]) -> Result<f64> {
    let (num, den) = gini_parts_sorted(sorted);
    if !(den > 0.0) {
        return Err(Error::Domain("Gini coefficient needs positive mean wealth".into()));
    }
    Ok(num / den)
}

/// Gini coefficient `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² x̄)`, via the sorted formula.
pub fn gini(sample: &[f64]) -> Result<f64> {
    check_nonnegative(sample)?;
    gini_sorted(&sorted_ascending(sample))
}

/// Lorenz points and cumulative wealth shares from an ascending sample.
pub fn lorenz_sorted(sorted: &[f64], step: f64) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Parameter(format!("share step must lie in (0, 1], got {step}")));
    }
    let n = sorted.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for &x in sorted {
        acc += x;
        cum.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Domain("Lorenz curve needs positive total wealth".into()));
    }
    let cells = (1.0 / step).round() as usize;
    let mut lorenz = Vec::with_capacity(cells + 1);
    lorenz.push((0.0, 0.0));
    let mut shares = Vec::with_capacity(cells);
    for k in 1..=cells {
        let p = (k as f64 * step).min(1.0);
        let share = if k == cells {
            1.0
        } else {
            let pos = p * n as f64;
            let whole = (pos.floor() as usize).min(n);
            let frac = pos - whole as f64;
            let partial = if whole < n { frac * sorted[whole] } else { 0.0 };
            (cum[whole] + partial) / acc
        };
        lorenz.push((if k == cells { 1.0 } else { p }, share));
        shares.push(100.0 * share);
    }
    Ok((lorenz, shares))
}

/// Lorenz curve at multiples of `step` (endpoints included) and the
/// cumulative wealth shares of the poorest `step, 2·step, …, 100%` in percent.
/// A cutoff that falls inside an observation takes the matching fraction of it.
pub fn lorenz_and_shares(sample: &[f64], step: f64) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    check_nonnegative(sample)?;
    lorenz_sorted(&sorted_ascending(sample), step)
}

/// Gini implied by the trapezoid area under a Lorenz curve.
pub fn lorenz_gini(lorenz: &[(f64, f64)]) -> f64 {
    let area: f64 = lorenz
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    1.0 - 2.0 * area
}

/// `(log wealth, log rank)` pairs from an ascending sample, decimated to at
/// most `max_points` ranks spread evenly in log rank.
pub fn zipf_points_sorted(sorted: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    let n = sorted.len();
    let point = |rank: usize| (sorted[n - rank].ln(), (rank as f64).ln());
    if n <= max_points {
        return (1..=n).map(point).collect();
    }
    if max_points < 2 {
        return (1..=max_points).map(point).collect();
    }
    let top = (n as f64).ln();
    let mut out = Vec::with_capacity(max_points);
    let mut last = 0usize;
    for k in 0..max_points {
        let rank = ((top * k as f64 / (max_points - 1) as f64).exp().round() as usize).clamp(1, n);
        if rank > last {
            out.push(point(rank));
            last = rank;
        }
    }
    out
}

pub fn zipf_points(sample: &[f64], max_points: usize) -> Result<Vec<(f64, f64)>> {
    check_nonnegative(sample)?;
    Ok(zipf_points_sorted(&sorted_ascending(sample), max_points))
}

/// The inequality summary of one wealth sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub tail_exponent_top5: f64,
    pub tail_exponent_top10: f64,
    pub gini: f64,
    pub lorenz: Vec<(f64, f64)>,
    /// Percent of total wealth held by the poorest 5%, 10%, …, 100%.
    pub wealth_shares: Vec<f64>,
}

impl InequalityReport {
    pub fn compute(sample: &[f64], rank_shift: bool) -> Result<Self> {
        check_nonnegative(sample)?;
        let sorted = sorted_ascending(sample);
        Self::from_sorted(&sorted, rank_shift)
    }

    pub fn from_sorted(sorted: &[f64], rank_shift: bool) -> Result<Self> {
        let (lorenz, wealth_shares) = lorenz_sorted(sorted, 0.05)?;
        Ok(Self {
            tail_exponent_top5: tail_exponent_sorted(sorted, 0.05, rank_shift)?,
            tail_exponent_top10: tail_exponent_sorted(sorted, 0.10, rank_shift)?,
            gini: gini_sorted(sorted)?,
            lorenz,
            wealth_shares,
        })
    }

    /// Cumulative share (percent) of the poorest `percent` of agents.
    pub fn share_at(&self, percent: u32) -> Option<f64> {
        if percent == 0 || percent % 5 != 0 {
            return None;
        }
        self.wealth_shares.get(percent as usize / 5 - 1).copied()
    }
}
