//! Stability regions over two-parameter grids.
//!
//! Each grid point rebuilds the Markov chains from a perturbed configuration
//! and evaluates the contraction and patience conditions. No policy is solved.

use rayon::prelude::*;

use crate::assumptions::AssumptionReport;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::io::{fmt_num, Table};

pub const AXIS_NAMES: [&str; 6] = ["rho_sigma", "delta_sigma", "rho_mu", "delta_mu", "beta", "gamma"];

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, values: Vec<f64>) -> Result<Self> {
        if !AXIS_NAMES.contains(&name) {
            return Err(Error::Parameter(format!(
                "unknown sweep axis '{name}' (expected one of {})",
                AXIS_NAMES.join(", ")
            )));
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("axis '{name}' needs finite values")));
        }
        Ok(Self {
            name: name.to_string(),
            values,
        })
    }
}

/// Outcome at one grid point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub x: f64,
    pub y: f64,
    pub outcome: std::result::Result<AssumptionReport, String>,
}

impl SweepPoint {
    pub fn stable(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.stability_ok)
    }

    /// Smaller of the contraction and patience margins; negative when unstable.
    pub fn margin(&self) -> Option<f64> {
        self.outcome
            .as_ref()
            .ok()
            .map(|r| r.contraction_margin.min(r.patience_margin()))
    }
}

/// Points in row-major order: `points[i * axis2.len() + j]`.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub axis1: Axis,
    pub axis2: Axis,
    pub points: Vec<SweepPoint>,
}

impl SweepGrid {
    pub fn point(&self, i: usize, j: usize) -> &SweepPoint {
        &self.points[i * self.axis2.values.len() + j]
    }

    fn column(&self, i: usize) -> &[SweepPoint] {
        let n = self.axis2.values.len();
        &self.points[i * n..(i + 1) * n]
    }

    /// One row per grid point:
    /// `axis1, axis2, r_k, contraction_margin, patience_lhs, patience_rhs, contraction_ok, stable, error`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new([
            self.axis1.name.as_str(),
            self.axis2.name.as_str(),
            "r_k",
            "contraction_margin",
            "patience_lhs",
            "patience_rhs",
            "contraction_ok",
            "stable",
            "error",
        ]);
        for p in &self.points {
            let mut row = vec![fmt_num(p.x), fmt_num(p.y)];
            match &p.outcome {
                Ok(r) => row.extend([
                    fmt_num(r.r_k),
                    fmt_num(r.contraction_margin),
                    fmt_num(r.patience_lhs),
                    fmt_num(r.patience_rhs),
                    r.contraction_ok.to_string(),
                    r.stability_ok.to_string(),
                    String::new(),
                ]),
                Err(e) => {
                    row.extend(["nan", "nan", "nan", "nan", "false", "false"].map(String::from));
                    row.push(e.replace(',', ";"));
                }
            }
            t.push(row);
        }
        t
    }
}

/// Evaluates the assumption report at every `(axis1, axis2)` pair. Points
/// whose model cannot be built record the error and the sweep continues.
pub fn stability_sweep(base: &Config, axis1: &Axis, axis2: &Axis) -> Result<SweepGrid> {
    Axis::new(&axis1.name, axis1.values.clone())?;
    Axis::new(&axis2.name, axis2.values.clone())?;
    let n2 = axis2.values.len();
    let points = (0..axis1.values.len() * n2)
        .into_par_iter()
        .map(|k| {
            let (x, y) = (axis1.values[k / n2], axis2.values[k % n2]);
            let evaluate = || -> Result<AssumptionReport> {
                let mut c = base.clone();
                c.set_parameter(&axis1.name, x)?;
                c.set_parameter(&axis2.name, y)?;
                AssumptionReport::evaluate(&c.model()?)
            };
            SweepPoint {
                x,
                y,
                outcome: evaluate().map_err(|e| e.to_string()),
            }
        })
        .collect();
    Ok(SweepGrid {
        axis1: axis1.clone(),
        axis2: axis2.clone(),
        points,
    })
}

/// Threshold of axis2 for one axis1 value.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub x: f64,
    /// Largest stable axis2 value, interpolated to the margin's zero crossing;
    /// `None` when no point in the column is stable.
    pub threshold: Option<f64>,
    /// Stability switches more than once along the column.
    pub non_monotone: bool,
}

/// Per-column frontier: the last stable axis2 value, moved toward the next
/// (unstable) point by linear interpolation of the margin.
pub fn stability_frontier(grid: &SweepGrid) -> Vec<FrontierPoint> {
    let ys = &grid.axis2.values;
    (0..grid.axis1.values.len())
        .map(|i| {
            let col = grid.column(i);
            let switches = col.windows(2).filter(|w| w[0].stable() != w[1].stable()).count();
            let non_monotone = switches > 1;
            let last = col.iter().rposition(SweepPoint::stable);
            let threshold = last.map(|j| {
                if j + 1 == col.len() {
                    return ys[j];
                }
                match (col[j].margin(), col[j + 1].margin()) {
                    (Some(m0), Some(m1)) if m0 > 0.0 && m1 <= 0.0 && m0.is_finite() && m1.is_finite() => {
                        ys[j] + (ys[j + 1] - ys[j]) * m0 / (m0 - m1)
                    }
                    _ => ys[j],
                }
            });
            FrontierPoint {
                x: grid.axis1.values[i],
                threshold,
                non_monotone,
            }
        })
        .collect()
}

/// Frontier CSV; an all-unstable column is written as `nan`.
pub fn frontier_table(grid: &SweepGrid, frontier: &[FrontierPoint]) -> Table {
    let mut t = Table::new([
        grid.axis1.name.clone(),
        format!("{}_threshold", grid.axis2.name),
        "non_monotone".to_string(),
    ]);
    for f in frontier {
        t.push(vec![
            fmt_num(f.x),
            fmt_num(f.threshold.unwrap_or(f64::NAN)),
            f.non_monotone.to_string(),
        ]);
    }
    t
}

/// Adjacent points along axis2 whose `r_K` jump exceeds ten times the
/// column's median jump; hints at discretization artifacts.
pub fn continuity_warnings(grid: &SweepGrid) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..grid.axis1.values.len() {
        let col = grid.column(i);
        let jumps: Vec<Option<f64>> = col
            .windows(2)
            .map(|w| match (&w[0].outcome, &w[1].outcome) {
                (Ok(a), Ok(b)) => Some((b.r_k - a.r_k).abs()),
                _ => None,
            })
            .collect();
        let mut known: Vec<f64> = jumps.iter().flatten().copied().collect();
        if known.len() < 3 {
            continue;
        }
        known.sort_by(f64::total_cmp);
        let median = known[known.len() / 2];
        for (j, d) in jumps.iter().enumerate() {
            if let Some(d) = d {
                if *d > 10.0 * median && *d > 1e-12 {
                    out.push((i, j));
                }
            }
        }
    }
    out
}
