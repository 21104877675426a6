//! Time iteration with the Coleman operator.
//!
//! A policy `c(a, z)` is stored on an asset grid for every composite state.
//! One application of the operator solves, cell by cell, the Euler equation
//! with the borrowing constraint
//!
//! ```text
//! u′(ξ) = max{ β E_z R̂ u′(c(R̂(a − ξ) + Ŷ, ẑ)), u′(a) },   0 < ξ ≤ a,
//! ```
//!
//! and iteration is measured in the marginal-utility distance
//! `ρ(c, d) = sup |u′∘c − u′∘d|`, under which the operator contracts.

use rayon::prelude::*;

use crate::assumptions::AssumptionReport;
use crate::error::{Error, Result};
use crate::model::{Marginal, ModelSpec, ShockTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Strictly increasing, strictly positive asset grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetGrid {
    points: Vec<f64>,
    spacing: Spacing,
    inv_step: f64,
}

impl AssetGrid {
    pub fn new(min: f64, max: f64, n: usize, spacing: Spacing) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter("asset grid needs at least two points".into()));
        }
        if !(min > 0.0 && max > min && max.is_finite()) {
            return Err(Error::Parameter(format!(
                "asset grid bounds must satisfy 0 < min < max, got [{min}, {max}]"
            )));
        }
        let last = (n - 1) as f64;
        let points: Vec<f64> = match spacing {
            Spacing::Linear => (0..n).map(|i| min + (max - min) * i as f64 / last).collect(),
            Spacing::Log => {
                let (l0, l1) = (min.ln(), max.ln());
                (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / last).exp()).collect()
            }
        };
        let mut points = points;
        points[0] = min;
        points[n - 1] = max;
        let inv_step = match spacing {
            Spacing::Linear => last / (max - min),
            Spacing::Log => last / (max.ln() - min.ln()),
        };
        Ok(Self {
            points,
            spacing,
            inv_step,
        })
    }

    /// Default grid: 100 points equally spaced on `[1e-4, 50]`.
    pub fn default_grid() -> Self {
        Self::new(1e-4, 50.0, 100, Spacing::Linear).expect("valid default grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
    pub fn min(&self) -> f64 {
        self.points[0]
    }
    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Segment index `i` with `points[i] ≤ x ≤ points[i + 1]`, for `x` inside the grid.
    #[inline]
    fn segment(&self, x: f64) -> usize {
        let n = self.points.len();
        let guess = match self.spacing {
            Spacing::Linear => ((x - self.points[0]) * self.inv_step) as usize,
            Spacing::Log => ((x.ln() - self.points[0].ln()) * self.inv_step) as usize,
        };
        let mut i = guess.min(n - 2);
        // Rounding in the guess can be off by one in either direction.
        if x < self.points[i] && i > 0 {
            i -= 1;
        } else if x > self.points[i + 1] && i + 2 < n {
            i += 1;
        }
        i
    }
}

/// Space in which the stored policy is interpolated between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Consumption,
    MarginalUtility,
}

/// Consumption on an asset grid for each composite state, with the tail slope
/// used above the grid and the binding thresholds `ā(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionPolicy {
    grid: AssetGrid,
    num_states: usize,
    /// State-major: `values[z * n + i]`.
    values: Vec<f64>,
    slopes: Vec<f64>,
    thresholds: Vec<f64>,
    share_bound: f64,
    interpolation: Interpolation,
    /// `u′` at the stored values, filled only for marginal-utility interpolation.
    marginals: Vec<f64>,
}

impl ConsumptionPolicy {
    /// The consume-everything policy `c(a, z) = a`.
    pub fn identity(grid: AssetGrid, num_states: usize) -> Self {
        let values: Vec<f64> = (0..num_states).flat_map(|_| grid.points().to_vec()).collect();
        Self {
            grid,
            num_states,
            values,
            slopes: vec![1.0; num_states],
            thresholds: vec![f64::INFINITY; num_states],
            share_bound: 0.0,
            interpolation: Interpolation::Consumption,
            marginals: Vec::new(),
        }
    }

    /// Builds a policy from state-major values; slopes come from the last two
    /// grid points of each column.
    pub fn from_values(grid: AssetGrid, num_states: usize, values: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if values.len() != n * num_states {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                n * num_states,
                values.len()
            )));
        }
        for z in 0..num_states {
            for (i, &a) in grid.points().iter().enumerate() {
                let c = values[z * n + i];
                if !(c > 0.0 && c <= a) {
                    return Err(Error::Domain(format!(
                        "policy value {c} at a={a}, state {z} violates 0 < c <= a"
                    )));
                }
            }
        }
        let mut p = Self {
            grid,
            num_states,
            values,
            slopes: vec![0.0; num_states],
            thresholds: vec![f64::NAN; num_states],
            share_bound: 0.0,
            interpolation: Interpolation::Consumption,
            marginals: Vec::new(),
        };
        p.refresh_slopes();
        Ok(p)
    }

    fn refresh_slopes(&mut self) {
        let n = self.grid.len();
        let pts = self.grid.points();
        let h = pts[n - 1] - pts[n - 2];
        for z in 0..self.num_states {
            let col = &self.values[z * n..(z + 1) * n];
            self.slopes[z] = (col[n - 1] - col[n - 2]) / h;
        }
    }

    pub fn with_share_bound(mut self, alpha: f64) -> Self {
        self.share_bound = alpha.clamp(0.0, 1.0);
        self
    }

    pub fn with_thresholds(mut self, thresholds: Vec<f64>) -> Self {
        assert_eq!(thresholds.len(), self.num_states);
        self.thresholds = thresholds;
        self
    }

    pub fn with_slopes(mut self, slopes: Vec<f64>) -> Self {
        assert_eq!(slopes.len(), self.num_states);
        self.slopes = slopes;
        self
    }

    /// Switches the interpolation space; `marginal` is `u′` of the model.
    pub fn with_interpolation(mut self, interpolation: Interpolation, marginal: Marginal) -> Self {
        self.interpolation = interpolation;
        self.marginals = match interpolation {
            Interpolation::Consumption => Vec::new(),
            Interpolation::MarginalUtility => self.values.iter().map(|&c| marginal.eval(c)).collect(),
        };
        self
    }

    pub fn grid(&self) -> &AssetGrid {
        &self.grid
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    /// Consumption column for one state.
    pub fn column(&self, z: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[z * n..(z + 1) * n]
    }
    pub fn value(&self, i: usize, z: usize) -> f64 {
        self.values[z * self.grid.len() + i]
    }
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
    pub fn share_bound(&self) -> f64 {
        self.share_bound
    }
    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Consumption at any `a ≥ 0`: zero at the origin, linear to the first
    /// grid point below the grid, piecewise linear on it and linear
    /// extrapolation (clipped to `[α a, a]`) above it.
    pub fn evaluate(&self, a: f64, z: usize) -> Result<f64> {
        if !(a >= 0.0) {
            return Err(Error::Domain(format!("assets must be nonnegative, got {a}")));
        }
        if z >= self.num_states {
            return Err(Error::Parameter(format!("state {z} out of range")));
        }
        Ok(self.consumption(a, z))
    }

    #[inline]
    pub(crate) fn consumption(&self, a: f64, z: usize) -> f64 {
        self.consumption_and_slope(a, z).0
    }

    /// Consumption and its derivative in `a`.
    #[inline]
    fn consumption_and_slope(&self, a: f64, z: usize) -> (f64, f64) {
        let n = self.grid.len();
        let pts = self.grid.points();
        let col = &self.values[z * n..(z + 1) * n];
        if a <= 0.0 {
            return (0.0, col[0] / pts[0]);
        }
        if a < pts[0] {
            let k = col[0] / pts[0];
            return ((k * a).min(a), k);
        }
        if a >= pts[n - 1] {
            let s = self.slopes[z];
            let c = col[n - 1] + s * (a - pts[n - 1]);
            if c > a {
                return (a, 1.0);
            }
            let floor = self.share_bound * a;
            if c < floor {
                return (floor, self.share_bound);
            }
            return (c, s);
        }
        let i = self.grid.segment(a);
        let (x0, x1) = (pts[i], pts[i + 1]);
        let slope = (col[i + 1] - col[i]) / (x1 - x0);
        (col[i] + slope * (a - x0), slope)
    }

    /// `(u′∘c)(a, z)` and its derivative in `a`.
    #[inline]
    fn marginal_and_slope(&self, a: f64, z: usize, up: &Marginal) -> (f64, f64) {
        let n = self.grid.len();
        let pts = self.grid.points();
        if self.interpolation == Interpolation::MarginalUtility && a >= pts[0] && a < pts[n - 1] {
            let m = &self.marginals[z * n..(z + 1) * n];
            let i = self.grid.segment(a);
            let (x0, x1) = (pts[i], pts[i + 1]);
            let slope = (m[i + 1] - m[i]) / (x1 - x0);
            return (m[i] + slope * (a - x0), slope);
        }
        let (c, dc) = self.consumption_and_slope(a, z);
        (up.eval(c), up.slope(c) * dc)
    }

    /// Consumption-to-wealth ratio on the grid for one state.
    pub fn share_profile(&self, z: usize) -> Vec<f64> {
        self.column(z)
            .iter()
            .zip(self.grid.points())
            .map(|(c, a)| c / a)
            .collect()
    }
}

/// Tolerances and relaxation for time iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stopping tolerance on `ρ(c_k, c_{k+1})`.
    pub tol: f64,
    pub max_iter: usize,
    /// Euler-residual tolerance of the per-cell root finder, in `u′` units.
    pub root_tol: f64,
    /// Relaxation weight on the operator image, in `(0, 1]`.
    pub damping: f64,
    /// Iterate even when the contraction condition fails.
    pub force: bool,
    pub interpolation: Interpolation,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 2000,
            root_tol: 1e-10,
            damping: 1.0,
            force: false,
            interpolation: Interpolation::Consumption,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Parameter("policy tolerance must be positive".into()));
        }
        if !(self.root_tol > 0.0) {
            return Err(Error::Parameter("root tolerance must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Parameter("damping must lie in (0, 1]".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration `ρ` distances recorded by [`solve_policy`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub distances: Vec<f64>,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }

    /// Least-squares slope of `log ρ_k` over the last `window` iterations,
    /// exponentiated: the empirical per-step decay factor.
    pub fn decay_rate(&self, window: usize) -> Option<f64> {
        let d: Vec<f64> = self
            .distances
            .iter()
            .rev()
            .take(window)
            .rev()
            .copied()
            .filter(|v| *v > 0.0)
            .collect();
        if d.len() < 3 {
            return None;
        }
        let n = d.len() as f64;
        let xm = (n - 1.0) / 2.0;
        let ym = d.iter().map(|v| v.ln()).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (k, v) in d.iter().enumerate() {
            let dx = k as f64 - xm;
            sxy += dx * (v.ln() - ym);
            sxx += dx * dx;
        }
        Some((sxy / sxx).exp())
    }
}

/// The Coleman operator for one model, with its innovation nodes and
/// transition rows precomputed.
pub struct ColemanOperator<'m> {
    model: &'m ModelSpec,
    table: ShockTable,
    rows: Vec<Vec<(usize, f64)>>,
    marginal: Marginal,
    options: SolveOptions,
    share_bound: f64,
}

impl<'m> ColemanOperator<'m> {
    pub fn new(model: &'m ModelSpec, options: SolveOptions) -> Result<Self> {
        options.validate()?;
        let p = model.process.composite_matrix();
        let rows = (0..p.nrows())
            .map(|z| {
                (0..p.ncols())
                    .filter_map(|j| {
                        let w = p[(z, j)];
                        (w > 0.0).then_some((j, w))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            model,
            table: model.shock_table(),
            rows,
            marginal: model.utility.marginal(),
            options,
            share_bound: 0.0,
        })
    }

    /// Share lower bound applied when extrapolating policies above the grid.
    pub fn with_share_bound(mut self, alpha: f64) -> Self {
        self.share_bound = alpha;
        self
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    fn check_policy(&self, c: &ConsumptionPolicy) -> Result<()> {
        if c.num_states() != self.model.process.num_states() {
            return Err(Error::GridMismatch(format!(
                "policy has {} states, model has {}",
                c.num_states(),
                self.model.process.num_states()
            )));
        }
        Ok(())
    }

    /// `β E_z R̂ (u′∘c)(R̂ s + Ŷ, ẑ)` and its derivative in savings `s`.
    #[inline]
    pub fn discounted_expectation(&self, c: &ConsumptionPolicy, z: usize, s: f64) -> (f64, f64) {
        let up = &self.marginal;
        let (mut e, mut de) = (0.0, 0.0);
        for &(j, pj) in &self.rows[z] {
            let w = &self.table.weights[j];
            let r = &self.table.returns[j];
            let y = &self.table.incomes[j];
            let (mut ej, mut dej) = (0.0, 0.0);
            for k in 0..w.len() {
                let (m, dm) = c.marginal_and_slope(r[k] * s + y[k], j, up);
                let wr = w[k] * r[k];
                ej += wr * m;
                dej += wr * r[k] * dm;
            }
            e += pj * ej;
            de += pj * dej;
        }
        (self.model.beta * e, self.model.beta * de)
    }

    /// `ā_c(z) = (u′)⁻¹[β E_z R̂ (u′∘c)(Ŷ, ẑ)]`: the largest wealth at which
    /// the image of `c` consumes everything. Infinite for a myopic agent.
    pub fn binding_threshold(&self, c: &ConsumptionPolicy, z: usize) -> Result<f64> {
        self.check_policy(c)?;
        if self.model.beta == 0.0 {
            return Ok(f64::INFINITY);
        }
        let (e, _) = self.discounted_expectation(c, z, 0.0);
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::Numerical(format!(
                "expected discounted marginal utility at zero savings is {e} in state {z}"
            )));
        }
        Ok(self.marginal.inverse(e))
    }

    /// Euler residual `u′(c(a,z)) − β E_z R̂ u′(c(R̂(a − c) + Ŷ))` at a grid
    /// point, for the policy evaluated against itself.
    pub fn euler_residual(&self, c: &ConsumptionPolicy, i: usize, z: usize) -> f64 {
        let a = c.grid().points()[i];
        let ci = c.value(i, z);
        let (e, _) = self.discounted_expectation(c, z, a - ci);
        self.marginal.eval(ci) - e
    }

    /// Euler residual of `image` against the policy `input` it was computed from.
    pub fn operator_residual(&self, input: &ConsumptionPolicy, image: &ConsumptionPolicy, i: usize, z: usize) -> f64 {
        let a = image.grid().points()[i];
        let ci = image.value(i, z);
        let (e, _) = self.discounted_expectation(input, z, a - ci);
        self.marginal.eval(ci) - e
    }

    /// Solves the interior Euler equation on `(0, a)` by safeguarded Newton
    /// steps inside a shrinking bracket, starting from `guess`.
    fn solve_cell(&self, c: &ConsumptionPolicy, z: usize, a: f64, guess: f64) -> Result<f64> {
        let up = &self.marginal;
        let tol = self.options.root_tol;
        let (mut lo, mut hi) = (1e-14 * a, a);
        let mut x = guess.clamp(lo, hi);
        if x >= hi || x <= lo {
            x = (lo * hi).sqrt();
        }
        let mut step_old = hi - lo;
        let mut step = step_old;
        let mut best = (f64::INFINITY, x);
        for _ in 0..400 {
            let (e, de) = self.discounted_expectation(c, z, a - x);
            if !e.is_finite() {
                return Err(Error::Numerical(format!(
                    "expectation overflow at a={a}, state {z}: the model likely violates its assumptions"
                )));
            }
            let f = up.eval(x) - e;
            let df = up.slope(x) + de;
            if f.abs() < best.0 {
                best = (f.abs(), x);
            }
            if f.abs() <= tol {
                return Ok(x);
            }
            if f > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(best.1);
            }
            let newton = x - f / df;
            let slow = (2.0 * f).abs() > (step_old * df).abs();
            let next = if df < 0.0 && newton > lo && newton < hi && !slow {
                step_old = step;
                step = (newton - x).abs();
                newton
            } else {
                step_old = step;
                let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
                step = (mid - x).abs();
                mid
            };
            if next == x {
                return Ok(best.1);
            }
            x = next;
        }
        if best.0.is_finite() && best.1 > 1e-14 * a && best.1 < a {
            return Ok(best.1);
        }
        Err(Error::Numerical(format!("root bracket failure at a={a}, state {z}")))
    }

    /// One application of the operator. Cells at or below the binding
    /// threshold consume everything; the rest solve the interior equation.
    pub fn apply(&self, c: &ConsumptionPolicy) -> Result<ConsumptionPolicy> {
        self.check_policy(c)?;
        let c = &if c.interpolation != self.options.interpolation {
            c.clone().with_interpolation(self.options.interpolation, self.marginal)
        } else {
            c.clone()
        };
        let grid = c.grid().clone();
        let n = grid.len();
        let k = c.num_states();
        let columns: Vec<Result<(Vec<f64>, f64)>> = (0..k)
            .into_par_iter()
            .map(|z| {
                let threshold = self.binding_threshold(c, z)?;
                let mut col = Vec::with_capacity(n);
                for (i, &a) in grid.points().iter().enumerate() {
                    if a <= threshold {
                        col.push(a);
                    } else {
                        col.push(self.solve_cell(c, z, a, c.value(i, z))?);
                    }
                }
                Ok((col, threshold))
            })
            .collect();
        let mut values = Vec::with_capacity(n * k);
        let mut thresholds = Vec::with_capacity(k);
        for col in columns {
            let (v, t) = col?;
            values.extend(v);
            thresholds.push(t);
        }
        let mut out = ConsumptionPolicy {
            grid,
            num_states: k,
            values,
            slopes: vec![0.0; k],
            thresholds,
            share_bound: self.share_bound,
            interpolation: Interpolation::Consumption,
            marginals: Vec::new(),
        };
        out.refresh_slopes();
        Ok(out.with_interpolation(self.options.interpolation, self.marginal))
    }

    /// `ρ(c, d) = max |u′(c) − u′(d)|` over grid points and states.
    pub fn rho_distance(&self, c: &ConsumptionPolicy, d: &ConsumptionPolicy) -> Result<f64> {
        rho_distance_with(&self.marginal, c, d)
    }

    /// Thresholds of `c`'s own image for every state.
    pub fn thresholds(&self, c: &ConsumptionPolicy) -> Result<Vec<f64>> {
        (0..c.num_states()).map(|z| self.binding_threshold(c, z)).collect()
    }
}

fn rho_distance_with(up: &Marginal, c: &ConsumptionPolicy, d: &ConsumptionPolicy) -> Result<f64> {
    if c.grid.points() != d.grid.points() || c.num_states != d.num_states {
        return Err(Error::GridMismatch("policies live on different grids".into()));
    }
    Ok(c.values
        .iter()
        .zip(&d.values)
        .map(|(&x, &y)| (up.eval(x) - up.eval(y)).abs())
        .fold(0.0, f64::max))
}

/// `ρ(c, d)` under the model's utility.
pub fn rho_distance(c: &ConsumptionPolicy, d: &ConsumptionPolicy, model: &ModelSpec) -> Result<f64> {
    rho_distance_with(&model.utility.marginal(), c, d)
}

/// Binding threshold `ā_c(z)` of the operator image of `c`.
pub fn binding_threshold(c: &ConsumptionPolicy, z: usize, model: &ModelSpec) -> Result<f64> {
    ColemanOperator::new(model, SolveOptions::default())?.binding_threshold(c, z)
}

/// One application of the Coleman operator.
pub fn apply_coleman(c: &ConsumptionPolicy, model: &ModelSpec, options: &SolveOptions) -> Result<ConsumptionPolicy> {
    ColemanOperator::new(model, *options)?
        .with_share_bound(c.share_bound())
        .apply(c)
}

/// Time iteration from `c₀(a, z) = a` until successive iterates are within
/// `options.tol` in `ρ`. Refuses models failing the contraction condition
/// unless `options.force` is set.
pub fn solve_policy(
    model: &ModelSpec,
    grid: &AssetGrid,
    options: &SolveOptions,
    report: &AssumptionReport,
) -> Result<(ConsumptionPolicy, SolveTrace)> {
    options.validate()?;
    if !report.contraction_ok && !options.force {
        return Err(Error::AssumptionGate(format!(
            "beta * r(K) = {} >= 1; the Coleman operator is not certified to contract",
            model.beta * report.r_k
        )));
    }
    let k = model.process.num_states();
    let alpha = report.share_bound();
    let mut c = ConsumptionPolicy::identity(grid.clone(), k).with_share_bound(alpha);
    let mut trace = SolveTrace::default();
    if model.beta == 0.0 {
        trace.distances.push(0.0);
        return Ok((c, trace));
    }
    let op = ColemanOperator::new(model, *options)?.with_share_bound(alpha);
    let marginal = model.utility.marginal();
    for _ in 0..options.max_iter {
        let image = op.apply(&c)?;
        let dist = op.rho_distance(&c, &image)?;
        trace.distances.push(dist);
        let next = if options.damping < 1.0 {
            let values = c
                .values
                .iter()
                .zip(&image.values)
                .map(|(a, b)| (1.0 - options.damping) * a + options.damping * b)
                .collect();
            let mut p = ConsumptionPolicy::from_values(grid.clone(), k, values)?.with_share_bound(alpha);
            p.thresholds = image.thresholds.clone();
            p.with_interpolation(options.interpolation, marginal)
        } else {
            image
        };
        c = next;
        if dist < options.tol {
            let thresholds = op.thresholds(&c)?;
            return Ok((c.with_thresholds(thresholds), trace));
        }
    }
    let last_distance = trace.distances.last().copied().unwrap_or(f64::NAN);
    Err(Error::PolicyNoConvergence {
        iterations: options.max_iter,
        last_distance,
        trace: trace.distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExogenousProcess, FiniteChain, UtilitySpec};

    fn deterministic_log(r: f64, beta: f64, y: f64) -> ModelSpec {
        let p = ExogenousProcess::constant_return(FiniteChain::degenerate(y.ln()), 0.0, r).unwrap();
        ModelSpec::new(beta, UtilitySpec::Log, p, 1).unwrap()
    }

    #[test]
    fn grid_construction_and_segments() {
        let g = AssetGrid::default_grid();
        assert_eq!(g.len(), 100);
        assert_eq!(g.min(), 1e-4);
        assert_eq!(g.max(), 50.0);
        for (i, w) in g.points().windows(2).enumerate() {
            let mid = 0.5 * (w[0] + w[1]);
            assert_eq!(g.segment(mid), i);
            assert!(w[0] < w[1]);
        }
        assert!(AssetGrid::new(0.0, 1.0, 10, Spacing::Linear).is_err());
        assert!(AssetGrid::new(1.0, 1.0, 10, Spacing::Linear).is_err());
        assert!(AssetGrid::new(0.1, 1.0, 1, Spacing::Linear).is_err());
        let lg = AssetGrid::new(1e-3, 100.0, 50, Spacing::Log).unwrap();
        for (i, w) in lg.points().windows(2).enumerate() {
            assert_eq!(lg.segment(0.5 * (w[0] + w[1])), i);
        }
    }

    #[test]
    fn evaluate_policy_contract() {
        let g = AssetGrid::default_grid();
        let values: Vec<f64> = g.points().iter().map(|&a| a.min(0.3 + 0.2 * a)).collect();
        let p = ConsumptionPolicy::from_values(g.clone(), 1, values.clone())
            .unwrap()
            .with_share_bound(0.1);
        for (i, &a) in g.points().iter().enumerate() {
            assert_eq!(p.evaluate(a, 0).unwrap(), values[i]);
        }
        assert_eq!(p.evaluate(0.0, 0).unwrap(), 0.0);
        assert!(p.evaluate(-1.0, 0).is_err());
        assert!(p.evaluate(1.0, 1).is_err());
        let a = 2.0 * g.max();
        let c = p.evaluate(a, 0).unwrap();
        let formula = values[99] + p.slopes()[0] * (a - g.max());
        assert!((c - formula).abs() < 1e-12);
        assert!(c >= 0.1 * a && c <= a);
        let below = p.evaluate(0.5e-4, 0).unwrap();
        assert!(below <= 0.5e-4 && below > 0.0);
    }

    #[test]
    fn rho_distance_examples() {
        let g = AssetGrid::default_grid();
        let model = deterministic_log(1.02, 0.95, 1.0);
        let id = ConsumptionPolicy::identity(g.clone(), 1);
        let half = ConsumptionPolicy::from_values(g.clone(), 1, g.points().iter().map(|a| a / 2.0).collect()).unwrap();
        assert_eq!(rho_distance(&id, &id, &model).unwrap(), 0.0);
        let d = rho_distance(&id, &half, &model).unwrap();
        assert!((d - 1e4).abs() < 1e-6, "{d}");
        assert_eq!(d, rho_distance(&half, &id, &model).unwrap());
        let other = ConsumptionPolicy::identity(AssetGrid::new(1e-3, 50.0, 100, Spacing::Linear).unwrap(), 1);
        assert!(rho_distance(&id, &other, &model).is_err());
    }

    #[test]
    fn threshold_of_identity_in_deterministic_log_case() {
        // u′(x) = 1/x, c = identity, next wealth is Y = 1: ā = 1 / (β R).
        let model = deterministic_log(1.02, 0.95, 1.0);
        let id = ConsumptionPolicy::identity(AssetGrid::default_grid(), 1);
        let t = binding_threshold(&id, 0, &model).unwrap();
        assert!((t - 1.0 / (0.95 * 1.02)).abs() < 1e-12);
    }

    #[test]
    fn myopic_agent_consumes_everything() {
        let model = deterministic_log(1.02, 0.0, 1.0);
        let report = AssumptionReport::evaluate(&model).unwrap();
        let g = AssetGrid::default_grid();
        let (c, _) = solve_policy(&model, &g, &SolveOptions::default(), &report).unwrap();
        assert_eq!(c.values(), g.points());
        assert!(binding_threshold(&c, 0, &model).unwrap().is_infinite());
    }

    #[test]
    fn binding_region_maps_to_identity() {
        let model = deterministic_log(1.02, 0.95, 1.0);
        let id = ConsumptionPolicy::identity(AssetGrid::default_grid(), 1);
        let t = apply_coleman(&id, &model, &SolveOptions::default()).unwrap();
        let threshold = t.thresholds()[0];
        for (i, &a) in t.grid().points().iter().enumerate() {
            let c = t.value(i, 0);
            if a <= threshold {
                assert_eq!(c, a);
            } else {
                assert!(c < a);
            }
        }
    }

    #[test]
    fn deterministic_log_converges_to_permanent_income_rule() {
        let eps = 1e-6;
        let model = deterministic_log(1.02, 0.95, eps);
        let report = AssumptionReport::evaluate(&model).unwrap();
        let grid = AssetGrid::default_grid();
        let (c, trace) = solve_policy(&model, &grid, &SolveOptions::default(), &report).unwrap();
        assert!(trace.iterations() > 1);
        for (i, &a) in grid.points().iter().enumerate() {
            if a >= 0.1 {
                let want = 0.05 * a;
                assert!(((c.value(i, 0) - want) / want).abs() < 0.01, "a={a}");
            }
        }
    }

    #[test]
    fn refuses_when_contraction_fails_unless_forced() {
        let model = deterministic_log(1.1, 0.95, 1.0);
        let report = AssumptionReport::evaluate(&model).unwrap();
        assert!(!report.contraction_ok);
        let g = AssetGrid::default_grid();
        let err = solve_policy(&model, &g, &SolveOptions::default(), &report).unwrap_err();
        assert!(matches!(err, Error::AssumptionGate(_)));
        let opts = SolveOptions {
            force: true,
            max_iter: 3,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_policy(&model, &g, &opts, &report),
            Err(Error::PolicyNoConvergence { .. })
        ));
    }

    #[test]
    fn options_validation() {
        let bad = SolveOptions {
            damping: 0.0,
            ..SolveOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolveOptions {
            tol: 0.0,
            ..SolveOptions::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn damped_and_marginal_interpolation_agree_with_plain_iteration() {
        let chi = crate::discretize::tauchen(0.9, 0.2, 0.0, 3, 3.0).unwrap();
        let p = ExogenousProcess::constant_return(chi, 0.2, 1.02).unwrap();
        let model = ModelSpec::new(0.95, UtilitySpec::crra(2.0).unwrap(), p, 5).unwrap();
        let report = AssumptionReport::evaluate(&model).unwrap();
        let grid = AssetGrid::new(1e-4, 30.0, 60, Spacing::Linear).unwrap();
        let plain = solve_policy(&model, &grid, &SolveOptions::default(), &report).unwrap().0;
        let damped_opts = SolveOptions {
            damping: 0.7,
            ..SolveOptions::default()
        };
        let damped = solve_policy(&model, &grid, &damped_opts, &report).unwrap().0;
        for (a, b) in plain.values().iter().zip(damped.values()) {
            assert!((a - b).abs() < 1e-5 * a.max(1.0));
        }
        let mu_opts = SolveOptions {
            interpolation: Interpolation::MarginalUtility,
            ..SolveOptions::default()
        };
        let mu = solve_policy(&model, &grid, &mu_opts, &report).unwrap().0;
        for z in 0..3 {
            let col = mu.column(z);
            assert!(col.windows(2).all(|w| w[0] <= w[1]));
            assert!(col.iter().zip(grid.points()).all(|(c, a)| *c > 0.0 && c <= a));
        }
    }
}
