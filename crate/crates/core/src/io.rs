//! File formats: policies, wealth samples and CSV reports.
//!
//! All numbers are written as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64`. Each file opens with `#` lines carrying the
//! tool version, the config hash and, where relevant, the seed.
//!
//! Policy file layout:
//!
//! ```text
//! # ifp policy
//! # tool_version: 0.1.0
//! # config_hash: <hex>
//! # model_fingerprint: <hex>
//! # policy_fingerprint: <hex>
//! # beta: <num>
//! # gamma: <num>
//! # grid: <min> <max> <points> <linear|log>
//! # interpolation: <consumption|marginal-utility>
//! # share_bound: <num>
//! # state: <index> <chi> <mu> <sigma>        (one line per composite state)
//! # slopes: <num> ...                       (one per state)
//! # thresholds: <num> ...                   (one per state; `inf` when unset)
//! a,c_0,c_1,...
//! <a_i>,<c(a_i, 0)>,<c(a_i, 1)>,...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coleman::{AssetGrid, ConsumptionPolicy, Interpolation, Spacing};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, UtilitySpec};
use crate::simulate::{SampleMeta, WealthSample};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("not a number: '{s}'")))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(" ")
}

fn spacing_name(s: Spacing) -> &'static str {
    match s {
        Spacing::Linear => "linear",
        Spacing::Log => "log",
    }
}

fn interpolation_name(i: Interpolation) -> &'static str {
    match i {
        Interpolation::Consumption => "consumption",
        Interpolation::MarginalUtility => "marginal-utility",
    }
}

fn policy_rows(policy: &ConsumptionPolicy) -> String {
    let n = policy.grid().len();
    let k = policy.num_states();
    let mut out = String::with_capacity(n * (k + 1) * 24);
    out.push('a');
    for z in 0..k {
        let _ = write!(out, ",c_{z}");
    }
    out.push('\n');
    for (i, &a) in policy.grid().points().iter().enumerate() {
        out.push_str(&fmt_num(a));
        for z in 0..k {
            out.push(',');
            out.push_str(&fmt_num(policy.value(i, z)));
        }
        out.push('\n');
    }
    out
}

/// Hex SHA-256 of the policy's grid, values, slopes, thresholds and share bound.
pub fn policy_fingerprint(policy: &ConsumptionPolicy) -> String {
    let g = policy.grid();
    let mut h = Sha256::new();
    h.update(format!(
        "grid {} {} {} {}\n",
        fmt_num(g.min()),
        fmt_num(g.max()),
        g.len(),
        spacing_name(g.spacing())
    ));
    h.update(format!("interpolation {}\n", interpolation_name(policy.interpolation())));
    h.update(format!("share_bound {}\n", fmt_num(policy.share_bound())));
    h.update(format!("slopes {}\n", join(policy.slopes())));
    h.update(format!("thresholds {}\n", join(policy.thresholds())));
    h.update(policy_rows(policy));
    hex::encode(h.finalize())
}

/// Renders a policy file for `policy` solved under `model`.
pub fn render_policy(policy: &ConsumptionPolicy, model: &ModelSpec, config_hash: &str) -> String {
    let g = policy.grid();
    let mut out = String::new();
    out.push_str("# ifp policy\n");
    let _ = writeln!(out, "# tool_version: {TOOL_VERSION}");
    let _ = writeln!(out, "# config_hash: {config_hash}");
    let _ = writeln!(out, "# model_fingerprint: {}", model.fingerprint());
    let _ = writeln!(out, "# policy_fingerprint: {}", policy_fingerprint(policy));
    let _ = writeln!(out, "# beta: {}", fmt_num(model.beta));
    let _ = writeln!(out, "# gamma: {}", fmt_num(model.utility.gamma()));
    let _ = writeln!(
        out,
        "# grid: {} {} {} {}",
        fmt_num(g.min()),
        fmt_num(g.max()),
        g.len(),
        spacing_name(g.spacing())
    );
    let _ = writeln!(out, "# interpolation: {}", interpolation_name(policy.interpolation()));
    let _ = writeln!(out, "# share_bound: {}", fmt_num(policy.share_bound()));
    for (k, s) in model.process.composite_states().iter().enumerate() {
        let _ = writeln!(out, "# state: {k} {} {} {}", fmt_num(s.chi), fmt_num(s.mu), fmt_num(s.sigma));
    }
    let _ = writeln!(out, "# slopes: {}", join(policy.slopes()));
    let _ = writeln!(out, "# thresholds: {}", join(policy.thresholds()));
    out.push_str(&policy_rows(policy));
    out
}

pub fn write_policy(path: &Path, policy: &ConsumptionPolicy, model: &ModelSpec, config_hash: &str) -> Result<()> {
    fs::write(path, render_policy(policy, model, config_hash))?;
    Ok(())
}

/// A policy read back from disk with its provenance header.
#[derive(Debug, Clone)]
pub struct PolicyFile {
    pub policy: ConsumptionPolicy,
    pub config_hash: String,
    pub model_fingerprint: String,
    pub policy_fingerprint: String,
    pub beta: f64,
    pub gamma: f64,
}

impl PolicyFile {
    /// Refuses a policy solved for a different model.
    pub fn check_model(&self, model: &ModelSpec) -> Result<()> {
        let want = model.fingerprint();
        if self.model_fingerprint != want {
            return Err(Error::Fingerprint {
                policy: self.model_fingerprint.clone(),
                model: want,
            });
        }
        Ok(())
    }
}

fn header_value<'a>(headers: &'a [(String, String)], key: &str) -> Result<&'a str> {
    headers
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Format(format!("policy header lacks '{key}'")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(parse_num).collect()
}

pub fn parse_policy(text: &str) -> Result<PolicyFile> {
    let mut headers = Vec::new();
    let mut body = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
        } else if !line.trim().is_empty() {
            body.push((lineno + 1, line));
        }
    }
    let grid_spec: Vec<&str> = header_value(&headers, "grid")?.split_whitespace().collect();
    if grid_spec.len() != 4 {
        return Err(Error::Format("grid header needs min, max, points and spacing".into()));
    }
    let spacing = match grid_spec[3] {
        "linear" => Spacing::Linear,
        "log" => Spacing::Log,
        other => return Err(Error::Format(format!("unknown grid spacing '{other}'"))),
    };
    let points: usize = grid_spec[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad grid size '{}'", grid_spec[2])))?;
    let grid = AssetGrid::new(parse_num(grid_spec[0])?, parse_num(grid_spec[1])?, points, spacing)?;
    let slopes = parse_list(header_value(&headers, "slopes")?)?;
    let thresholds = parse_list(header_value(&headers, "thresholds")?)?;
    let k = slopes.len();
    if thresholds.len() != k {
        return Err(Error::Format("slopes and thresholds differ in length".into()));
    }
    let (_, columns) = body.first().ok_or_else(|| Error::Format("policy file has no table".into()))?;
    if columns.split(',').count() != k + 1 {
        return Err(Error::GridMismatch(format!("table has {} columns, expected {}", columns.split(',').count(), k + 1)));
    }
    let rows = &body[1..];
    if rows.len() != points {
        return Err(Error::GridMismatch(format!("table has {} rows, grid has {points}", rows.len())));
    }
    let mut values = vec![0.0; points * k];
    for (i, (lineno, line)) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != k + 1 {
            return Err(Error::Format(format!("line {lineno}: expected {} fields", k + 1)));
        }
        let a = parse_num(cells[0])?;
        if a != grid.points()[i] {
            return Err(Error::GridMismatch(format!("line {lineno}: grid point {a} does not match header grid")));
        }
        for z in 0..k {
            values[z * points + i] = parse_num(cells[z + 1])?;
        }
    }
    let gamma = parse_num(header_value(&headers, "gamma")?)?;
    let interpolation = match header_value(&headers, "interpolation")? {
        "consumption" => Interpolation::Consumption,
        "marginal-utility" => Interpolation::MarginalUtility,
        other => return Err(Error::Format(format!("unknown interpolation '{other}'"))),
    };
    let policy = ConsumptionPolicy::from_values(grid, k, values)?
        .with_slopes(slopes)
        .with_thresholds(thresholds)
        .with_share_bound(parse_num(header_value(&headers, "share_bound")?)?)
        .with_interpolation(interpolation, UtilitySpec::crra(gamma)?.marginal());
    let recorded = header_value(&headers, "policy_fingerprint")?.to_string();
    if recorded != policy_fingerprint(&policy) {
        return Err(Error::Format("policy table does not match its recorded fingerprint".into()));
    }
    Ok(PolicyFile {
        policy,
        config_hash: header_value(&headers, "config_hash")?.to_string(),
        model_fingerprint: header_value(&headers, "model_fingerprint")?.to_string(),
        policy_fingerprint: recorded,
        beta: parse_num(header_value(&headers, "beta")?)?,
        gamma,
    })
}

pub fn read_policy(path: &Path) -> Result<PolicyFile> {
    parse_policy(&fs::read_to_string(path)?)
}

/// Sidecar document written next to a sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub tool_version: String,
    pub config_hash: String,
    pub len: usize,
    pub meta: SampleMeta,
}

pub fn sidecar_path(sample_path: &Path) -> PathBuf {
    let mut s = sample_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes `asset,state` rows plus a `.meta.json` sidecar.
pub fn write_sample(path: &Path, sample: &WealthSample, config_hash: &str) -> Result<()> {
    let mut out = String::with_capacity(sample.len() * 28 + 256);
    let _ = writeln!(out, "# tool_version: {TOOL_VERSION}");
    let _ = writeln!(out, "# config_hash: {config_hash}");
    let _ = writeln!(out, "# seed: {}", sample.meta.config.seed);
    out.push_str("asset,state\n");
    for (a, z) in sample.assets.iter().zip(&sample.states) {
        out.push_str(&fmt_num(*a));
        let _ = writeln!(out, ",{z}");
    }
    fs::write(path, out)?;
    let sidecar = SampleSidecar {
        tool_version: TOOL_VERSION.into(),
        config_hash: config_hash.into(),
        len: sample.len(),
        meta: sample.meta.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_sample(path: &Path) -> Result<(WealthSample, SampleSidecar)> {
    let sidecar: SampleSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| Error::Format(format!("sample sidecar: {e}")))?;
    let text = fs::read_to_string(path)?;
    let mut assets = Vec::with_capacity(sidecar.len);
    let mut states = Vec::with_capacity(sidecar.len);
    let mut seen_header = false;
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let (a, z) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {}: expected 'asset,state'", lineno + 1)))?;
        assets.push(parse_num(a)?);
        states.push(
            z.trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad state '{z}'", lineno + 1)))?,
        );
    }
    if assets.len() != sidecar.len {
        return Err(Error::Format(format!(
            "sample has {} rows, sidecar records {}",
            assets.len(),
            sidecar.len
        )));
    }
    let sample = WealthSample {
        assets,
        states,
        meta: sidecar.meta.clone(),
    };
    Ok((sample, sidecar))
}

/// Provenance lines opening every report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportHeader {
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl ReportHeader {
    fn render(&self) -> String {
        let mut out = format!("# tool_version: {TOOL_VERSION}\n# config_hash: {}\n", self.config_hash);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed: {seed}");
        }
        out
    }
}

/// A CSV table with a provenance header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, header: &ReportHeader) -> String {
        let mut out = header.render();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, header: &ReportHeader) -> Result<()> {
        fs::write(path, self.render(header))?;
        Ok(())
    }
}

/// Parses a report CSV back into a table, skipping `#` lines.
pub fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Format("table has no header row".into()))?
        .split(',')
        .map(String::from)
        .collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    Ok(Table { columns, rows })
}
