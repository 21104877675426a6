//! Run configuration: a TOML tree with model, grid, solver, simulation,
//! sweep and output sections. Every field has a default, so an empty file
//! describes the calibrated benchmark with stochastic volatility.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coleman::{AssetGrid, Interpolation, SolveOptions, Spacing};
use crate::discretize::{discretize_log_volatility, lognormal_stationary_mean, tauchen};
use crate::error::{Error, Result};
use crate::model::{Expectation, ExogenousProcess, FiniteChain, ModelSpec, ReturnMode, UtilitySpec};
use crate::simulate::{InitialCondition, SimConfig, SimMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub income: IncomeSection,
    pub returns: ReturnSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
    pub reproduce: ReproduceSection,
    pub stats: StatsSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            income: IncomeSection::default(),
            returns: ReturnSection::default(),
            grid: GridSection::default(),
            solver: SolverSection::default(),
            simulation: SimulationSection::default(),
            sweep: SweepSection::default(),
            reproduce: ReproduceSection::default(),
            stats: StatsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationKind {
    GaussHermite,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub beta: f64,
    /// Relative risk aversion; `1` selects log utility.
    pub gamma: f64,
    pub quad_nodes: usize,
    pub expectation: ExpectationKind,
    pub mc_draws: usize,
    pub mc_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            beta: 0.95,
            gamma: 2.0,
            quad_nodes: 21,
            expectation: ExpectationKind::GaussHermite,
            mc_draws: 1000,
            mc_seed: 0,
        }
    }
}

/// `χ' = ρ_χ χ + ε`, `log Y = χ + η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncomeSection {
    pub rho_chi: f64,
    pub delta_chi: f64,
    pub n_chi: usize,
    pub eta_std: f64,
}

impl Default for IncomeSection {
    fn default() -> Self {
        Self {
            rho_chi: 0.977,
            delta_chi: 0.02f64.sqrt(),
            n_chi: 5,
            eta_std: 0.075f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReturnModeKind {
    Stochastic,
    Iid,
    Constant,
}

/// `log R = μ + σ ζ` with AR(1) laws for `μ` and `log σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReturnSection {
    pub mode: ReturnModeKind,
    pub mu_bar: f64,
    pub rho_mu: f64,
    pub delta_mu: f64,
    pub n_mu: usize,
    pub sigma_bar: f64,
    pub rho_sigma: f64,
    pub delta_sigma: f64,
    pub n_sigma: usize,
    /// Overrides the stationary-mean return in constant mode.
    pub constant_return: Option<f64>,
    /// Tauchen grid half-width in unconditional standard deviations.
    pub tauchen_m: f64,
}

impl Default for ReturnSection {
    fn default() -> Self {
        Self {
            mode: ReturnModeKind::Stochastic,
            mu_bar: 0.0281,
            rho_mu: 0.5722,
            delta_mu: 0.0067,
            n_mu: 1,
            sigma_bar: -3.2556,
            rho_sigma: 0.2895,
            delta_sigma: 0.1896,
            n_sigma: 5,
            constant_return: None,
            tauchen_m: crate::discretize::DEFAULT_HALF_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: SpacingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacingKind {
    Linear,
    Log,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            min: 1e-4,
            max: 50.0,
            points: 100,
            spacing: SpacingKind::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationKind {
    Consumption,
    MarginalUtility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub root_tol: f64,
    pub damping: f64,
    pub force: bool,
    pub interpolation: InterpolationKind,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            root_tol: d.root_tol,
            damping: d.damping,
            force: d.force,
            interpolation: InterpolationKind::Consumption,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimModeKind {
    Panel,
    SinglePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// Start every agent at `initial_assets` in the central state.
    PointMass,
    /// Draw the starting state from the stationary law of the exogenous chain.
    StationaryZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_agents: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub mode: SimModeKind,
    pub initial: InitialKind,
    pub initial_assets: f64,
    /// Starting composite state for point-mass starts; the central state when absent.
    pub initial_state: Option<usize>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_agents: 1_000_000,
            horizon: 1000,
            burn_in: 500,
            seed: 20_190_101,
            mode: SimModeKind::Panel,
            initial: InitialKind::StationaryZ,
            initial_assets: 1.0,
            initial_state: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + step * i as f64).collect()
    }
}

impl Default for AxisSpec {
    fn default() -> Self {
        Self {
            name: "rho_sigma".into(),
            min: 0.0,
            max: 0.95,
            points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis1: AxisSpec::default(),
            axis2: AxisSpec {
                name: "delta_sigma".into(),
                min: 0.0,
                max: 1.0,
                points: 41,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceSection {
    /// State count of the non-collapsed return chain in the two benchmark models.
    pub return_states: usize,
}

impl Default for ReproduceSection {
    fn default() -> Self {
        Self { return_states: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    /// Subtract one half from ranks in tail regressions.
    pub rank_shift: bool,
    pub zipf_points: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            rank_shift: false,
            zipf_points: 10_000,
        }
    }
}

/// The four return environments compared in the inequality tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Economy {
    /// Constant return mean, stochastic volatility.
    ModelI,
    /// Persistent return mean, volatility fixed at its stationary mean.
    ModelII,
    /// IID lognormal returns.
    Iid,
    /// Constant gross return at the stationary mean.
    Constant,
}

impl Economy {
    pub const ALL: [Economy; 4] = [Economy::ModelI, Economy::ModelII, Economy::Iid, Economy::Constant];

    pub fn label(&self) -> &'static str {
        match self {
            Economy::ModelI => "model_i",
            Economy::ModelII => "model_ii",
            Economy::Iid => "iid",
            Economy::Constant => "constant",
        }
    }

    /// Copy of `base` with the return chains set for this economy.
    pub fn configure(&self, base: &Config) -> Config {
        let mut c = base.clone();
        let n = base.reproduce.return_states;
        let r = &mut c.returns;
        r.constant_return = None;
        match self {
            Economy::ModelI => {
                r.mode = ReturnModeKind::Stochastic;
                r.n_mu = 1;
                r.n_sigma = n;
            }
            Economy::ModelII => {
                r.mode = ReturnModeKind::Stochastic;
                r.n_mu = n;
                r.n_sigma = 1;
            }
            Economy::Iid => {
                r.mode = ReturnModeKind::Iid;
                r.n_mu = 1;
                r.n_sigma = 1;
            }
            Economy::Constant => {
                r.mode = ReturnModeKind::Constant;
                r.n_mu = 1;
                r.n_sigma = 1;
            }
        }
        c
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Chain for the return mean: a single state at `μ̄` when collapsed.
    pub fn mu_chain(&self) -> Result<FiniteChain> {
        let r = &self.returns;
        if r.n_mu <= 1 || r.delta_mu == 0.0 {
            return Ok(FiniteChain::degenerate(r.mu_bar));
        }
        tauchen(r.rho_mu, r.delta_mu, r.mu_bar, r.n_mu, r.tauchen_m)
    }

    /// Chain for the volatility level: a single state at the lognormal
    /// stationary mean `σ̂` when collapsed.
    pub fn sigma_chain(&self) -> Result<FiniteChain> {
        let r = &self.returns;
        if r.n_sigma <= 1 || r.delta_sigma == 0.0 {
            if !(r.rho_sigma.abs() < 1.0) {
                return Err(Error::Parameter(format!(
                    "volatility persistence must lie in (-1, 1), got {}",
                    r.rho_sigma
                )));
            }
            return Ok(FiniteChain::degenerate(lognormal_stationary_mean(
                r.rho_sigma,
                r.delta_sigma,
                r.sigma_bar,
            )));
        }
        discretize_log_volatility(r.rho_sigma, r.delta_sigma, r.sigma_bar, r.n_sigma, r.tauchen_m)
    }

    pub fn chi_chain(&self) -> Result<FiniteChain> {
        let i = &self.income;
        if i.n_chi <= 1 || i.delta_chi == 0.0 {
            return Ok(FiniteChain::degenerate(0.0));
        }
        tauchen(i.rho_chi, i.delta_chi, 0.0, i.n_chi, self.returns.tauchen_m)
    }

    pub fn process(&self) -> Result<ExogenousProcess> {
        let chi = self.chi_chain()?;
        let eta = self.income.eta_std;
        let r = &self.returns;
        if r.mode == ReturnModeKind::Constant {
            if let Some(value) = r.constant_return {
                return ExogenousProcess::constant_return(chi, eta, value);
            }
        }
        let mode = match r.mode {
            ReturnModeKind::Stochastic => ReturnMode::Stochastic,
            ReturnModeKind::Iid => ReturnMode::IidCollapsed,
            ReturnModeKind::Constant => ReturnMode::Constant,
        };
        ExogenousProcess::new(chi, self.mu_chain()?, self.sigma_chain()?, eta, mode)
    }

    pub fn model(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let spec = ModelSpec::new(m.beta, UtilitySpec::crra(m.gamma)?, self.process()?, m.quad_nodes)?;
        match m.expectation {
            ExpectationKind::GaussHermite => Ok(spec),
            ExpectationKind::MonteCarlo => spec.with_expectation(Expectation::MonteCarlo {
                draws: m.mc_draws,
                seed: m.mc_seed,
            }),
        }
    }

    pub fn asset_grid(&self) -> Result<AssetGrid> {
        let g = &self.grid;
        let spacing = match g.spacing {
            SpacingKind::Linear => Spacing::Linear,
            SpacingKind::Log => Spacing::Log,
        };
        AssetGrid::new(g.min, g.max, g.points, spacing)
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.solver;
        SolveOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            root_tol: s.root_tol,
            damping: s.damping,
            force: s.force,
            interpolation: match s.interpolation {
                InterpolationKind::Consumption => Interpolation::Consumption,
                InterpolationKind::MarginalUtility => Interpolation::MarginalUtility,
            },
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            n_agents: s.n_agents,
            horizon: s.horizon,
            burn_in: s.burn_in,
            seed: s.seed,
            mode: match s.mode {
                SimModeKind::Panel => SimMode::Panel,
                SimModeKind::SinglePath => SimMode::SinglePath,
            },
            initial: match s.initial {
                InitialKind::PointMass => InitialCondition::PointMass {
                    assets: s.initial_assets,
                    state: s.initial_state,
                },
                InitialKind::StationaryZ => InitialCondition::StationaryZ {
                    assets: s.initial_assets,
                },
            },
        }
    }

    /// Sets a named calibration parameter; used by stability sweeps.
    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "rho_sigma" => self.returns.rho_sigma = value,
            "delta_sigma" => self.returns.delta_sigma = value,
            "rho_mu" => self.returns.rho_mu = value,
            "delta_mu" => self.returns.delta_mu = value,
            "beta" => self.model.beta = value,
            "gamma" => self.model.gamma = value,
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep axis '{other}' (expected rho_sigma, delta_sigma, rho_mu, delta_mu, beta or gamma)"
                )))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default_and_round_trips() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(Config::from_toml("[model]\nbeta = 0.9\nbogus = 1").is_err());
        assert!(Config::from_toml("[model]\nbeta = \"high\"").is_err());
        assert!(Config::from_toml("[[[").is_err());
    }

    #[test]
    fn economies_have_expected_state_counts() {
        let base = Config::default();
        let count = |e: Economy| e.configure(&base).model().unwrap().process.num_states();
        assert_eq!(count(Economy::ModelI), 25);
        assert_eq!(count(Economy::ModelII), 25);
        assert_eq!(count(Economy::Iid), 5);
        assert_eq!(count(Economy::Constant), 5);
        let mut full = base.clone();
        full.returns.n_mu = 5;
        assert_eq!(full.model().unwrap().process.num_states(), 125);
    }

    #[test]
    fn collapsed_chains_use_stationary_means() {
        let c = Economy::Iid.configure(&Config::default());
        let p = c.process().unwrap();
        assert!((p.mu().states()[0] - 0.0281).abs() < 1e-15);
        assert!((p.sigma().states()[0] - 0.0393).abs() < 5e-5);
        let k = Economy::Constant.configure(&Config::default()).process().unwrap();
        let want = (0.0281 + 0.5 * p.sigma().states()[0].powi(2)).exp();
        assert!((k.expected_return()[0] - want).abs() < 1e-14);
    }

    #[test]
    fn set_parameter_names() {
        let mut c = Config::default();
        c.set_parameter("delta_mu", 0.01).unwrap();
        assert_eq!(c.returns.delta_mu, 0.01);
        assert!(c.set_parameter("alpha", 0.1).is_err());
    }
}
