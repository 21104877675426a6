//! Monte Carlo simulation of `(a_t, z_t)` under a solved policy.
//!
//! Every agent owns a ChaCha8 stream keyed by the master seed and its index,
//! so panel results do not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coleman::ConsumptionPolicy;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Independent agents; keep each terminal asset level.
    Panel,
    /// One long path; keep every post-burn-in asset level.
    SinglePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Fixed assets and state; `None` picks the central state.
    PointMass { assets: f64, state: Option<usize> },
    /// Fixed assets, state drawn from the stationary law of `z`.
    StationaryZ { assets: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_agents: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub mode: SimMode,
    pub initial: InitialCondition,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: 1_000_000,
            horizon: 1000,
            burn_in: 500,
            seed: 20_190_101,
            mode: SimMode::Panel,
            initial: InitialCondition::StationaryZ { assets: 1.0 },
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Parameter("n_agents must be positive".into()));
        }
        if self.mode == SimMode::Panel && self.burn_in >= self.horizon {
            return Err(Error::Parameter(format!(
                "burn_in ({}) must be below horizon ({}) in panel mode",
                self.burn_in, self.horizon
            )));
        }
        let a0 = match self.initial {
            InitialCondition::PointMass { assets, .. } | InitialCondition::StationaryZ { assets } => assets,
        };
        if !(a0.is_finite() && a0 >= 0.0) {
            return Err(Error::Parameter(format!("initial assets must be finite and nonnegative, got {a0}")));
        }
        Ok(())
    }

    /// Number of observations the run produces.
    pub fn sample_len(&self) -> usize {
        self.n_agents
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub config: SimConfig,
    pub policy_fingerprint: String,
    pub model_fingerprint: String,
}

/// A simulated cross-section (or path) of assets with matching state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthSample {
    pub assets: Vec<f64>,
    pub states: Vec<usize>,
    pub meta: SampleMeta,
}

impl WealthSample {
    pub fn len(&self) -> usize {
        self.assets.len()
    }
    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }
    pub fn mean(&self) -> f64 {
        self.assets.iter().sum::<f64>() / self.assets.len() as f64
    }
}

/// Innovations consumed by one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draws {
    /// Uniform on `[0, 1)` selecting `z′`.
    pub u: f64,
    pub zeta: f64,
    pub eta: f64,
}

impl Draws {
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        Self {
            u: rng.gen(),
            zeta: rng.sample(StandardNormal),
            eta: rng.sample(StandardNormal),
        }
    }
}

/// Precomputed transition data for fast stepping.
struct Kernel<'a> {
    policy: &'a ConsumptionPolicy,
    cdf: Vec<f64>,
    n: usize,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    chi: Vec<f64>,
    eta_std: f64,
}

impl<'a> Kernel<'a> {
    fn new(policy: &'a ConsumptionPolicy, model: &ModelSpec) -> Result<Self> {
        let p = &model.process;
        let n = p.num_states();
        if policy.num_states() != n {
            return Err(Error::GridMismatch(format!(
                "policy has {} states, model has {n}",
                policy.num_states()
            )));
        }
        let m = p.composite_matrix();
        let mut cdf = Vec::with_capacity(n * n);
        for z in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += m[(z, j)];
                cdf.push(acc);
            }
            // Guard against rows summing to slightly under one.
            cdf[z * n + n - 1] = f64::INFINITY;
        }
        let states = p.composite_states();
        Ok(Self {
            policy,
            cdf,
            n,
            mu: states.iter().map(|s| s.mu).collect(),
            sigma: states.iter().map(|s| s.sigma).collect(),
            chi: states.iter().map(|s| s.chi).collect(),
            eta_std: p.eta_std(),
        })
    }

    #[inline]
    fn next_state(&self, z: usize, u: f64) -> usize {
        let row = &self.cdf[z * self.n..(z + 1) * self.n];
        row.iter().position(|&c| u < c).unwrap_or(self.n - 1)
    }

    #[inline]
    fn step(&self, a: f64, z: usize, d: &Draws) -> (f64, usize) {
        let saving = (a - self.policy.consumption(a, z)).max(0.0);
        let zn = self.next_state(z, d.u);
        let r = (self.mu[zn] + self.sigma[zn] * d.zeta).exp();
        let y = (self.chi[zn] + self.eta_std * d.eta).exp();
        (r * saving + y, zn)
    }
}

/// One transition `a′ = R(z′, ζ′)(a − c(a, z)) + Y(z′, η′)`.
pub fn step(a: f64, z: usize, policy: &ConsumptionPolicy, model: &ModelSpec, draws: &Draws) -> Result<(f64, usize)> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("assets must be finite and nonnegative, got {a}")));
    }
    if z >= model.process.num_states() {
        return Err(Error::Parameter(format!("state {z} out of range")));
    }
    Ok(Kernel::new(policy, model)?.step(a, z, draws))
}

fn agent_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Simulates under `policy`; the result depends only on the seed, the
/// configuration and the inputs.
pub fn run(policy: &ConsumptionPolicy, model: &ModelSpec, config: &SimConfig) -> Result<WealthSample> {
    config.validate()?;
    let kernel = Kernel::new(policy, model)?;
    let n = kernel.n;
    let (a0, fixed, stationary) = match config.initial {
        InitialCondition::PointMass { assets, state } => {
            let z0 = state.unwrap_or_else(|| model.process.central_state());
            if z0 >= n {
                return Err(Error::Parameter(format!("initial state {z0} out of range")));
            }
            (assets, Some(z0), Vec::new())
        }
        InitialCondition::StationaryZ { assets } => (assets, None, model.process.stationary_distribution()),
    };
    let start = |rng: &mut ChaCha8Rng| fixed.unwrap_or_else(|| sample_index(rng, &stationary));

    let (assets, states) = match config.mode {
        SimMode::Panel => {
            let pairs: Vec<(f64, usize)> = (0..config.n_agents)
                .into_par_iter()
                .map(|agent| {
                    let mut rng = agent_rng(config.seed, agent as u64);
                    let mut z = start(&mut rng);
                    let mut a = a0;
                    for _ in 0..config.horizon {
                        (a, z) = kernel.step(a, z, &Draws::sample(&mut rng));
                    }
                    (a, z)
                })
                .collect();
            pairs.into_iter().unzip()
        }
        SimMode::SinglePath => {
            let mut rng = agent_rng(config.seed, u64::MAX);
            let mut z = start(&mut rng);
            let mut a = a0;
            for _ in 0..config.burn_in {
                (a, z) = kernel.step(a, z, &Draws::sample(&mut rng));
            }
            let mut assets = Vec::with_capacity(config.n_agents);
            let mut states = Vec::with_capacity(config.n_agents);
            for _ in 0..config.n_agents {
                (a, z) = kernel.step(a, z, &Draws::sample(&mut rng));
                assets.push(a);
                states.push(z);
            }
            (assets, states)
        }
    };
    Ok(WealthSample {
        assets,
        states,
        meta: SampleMeta {
            config: config.clone(),
            policy_fingerprint: crate::io::policy_fingerprint(policy),
            model_fingerprint: model.fingerprint(),
        },
    })
}

/// Functions of wealth whose sample averages estimate stationary moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Identity,
    Log1p,
    /// `1{a > x}`.
    Above(f64),
}

impl Observable {
    #[inline]
    pub fn eval(&self, a: f64) -> f64 {
        match *self {
            Observable::Identity => a,
            Observable::Log1p => a.ln_1p(),
            Observable::Above(x) => f64::from(u8::from(a > x)),
        }
    }
}

pub fn time_average(path: &[f64], h: Observable) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::Parameter("time average of an empty sample".into()));
    }
    Ok(path.iter().map(|&a| h.eval(a)).sum::<f64>() / path.len() as f64)
}

/// Standard error of the mean for independent draws.
pub fn iid_standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Batch-means standard error of the mean for a serially dependent path.
pub fn batch_means_standard_error(path: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || path.len() < 2 * batches {
        return Err(Error::Parameter(format!(
            "need at least two batches of two observations, got {} points for {batches} batches",
            path.len()
        )));
    }
    let size = path.len() / batches;
    let means: Vec<f64> = path
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    Ok(iid_standard_error(&means))
}

/// Two-sample Kolmogorov–Smirnov comparison of the two halves of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitHalfKs {
    pub statistic: f64,
    /// Asymptotic 1% critical value.
    pub critical: f64,
}

impl SplitHalfKs {
    pub fn is_stationary(&self) -> bool {
        self.statistic < self.critical
    }
}

pub fn split_half_ks(path: &[f64]) -> Result<SplitHalfKs> {
    if path.len() < 4 {
        return Err(Error::Parameter("split-half test needs at least four points".into()));
    }
    let mid = path.len() / 2;
    let mut x = path[..mid].to_vec();
    let mut y = path[mid..].to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(SplitHalfKs {
        statistic: d,
        critical: 1.628 * ((n + m) / (n * m)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coleman::{solve_policy, AssetGrid, SolveOptions, Spacing};
    use crate::assumptions::AssumptionReport;
    use crate::model::{ExogenousProcess, FiniteChain, UtilitySpec};
    use nalgebra::DMatrix;

    fn two_state_model(r: f64, eta: f64) -> ModelSpec {
        let chi = FiniteChain::new(vec![-0.1, 0.1], DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8])).unwrap();
        let p = ExogenousProcess::constant_return(chi, eta, r).unwrap();
        ModelSpec::new(0.95, UtilitySpec::crra(2.0).unwrap(), p, 7).unwrap()
    }

    fn solved(model: &ModelSpec) -> ConsumptionPolicy {
        let grid = AssetGrid::new(1e-4, 50.0, 60, Spacing::Linear).unwrap();
        let report = AssumptionReport::evaluate(model).unwrap();
        solve_policy(model, &grid, &SolveOptions::default(), &report).unwrap().0
    }

    #[test]
    fn binding_point_maps_to_income() {
        let m = two_state_model(1.02, 0.2);
        let id = ConsumptionPolicy::identity(AssetGrid::default_grid(), 2);
        let d = Draws { u: 0.95, zeta: 0.3, eta: -0.4 };
        let (a, z) = step(3.0, 0, &id, &m, &d).unwrap();
        assert_eq!(z, 1);
        assert!((a - (0.1 - 0.2 * 0.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn constant_return_law_of_motion() {
        let m = two_state_model(1.03, 0.0);
        let grid = AssetGrid::default_grid();
        let half: Vec<f64> = (0..2).flat_map(|_| grid.points().iter().map(|a| a / 2.0).collect::<Vec<_>>()).collect();
        let c = ConsumptionPolicy::from_values(grid, 2, half).unwrap();
        let d = Draws { u: 0.1, zeta: 1.7, eta: 0.9 };
        let (a, z) = step(4.0, 0, &c, &m, &d).unwrap();
        assert_eq!(z, 0);
        assert!((a - (1.03 * 2.0 + (-0.1f64).exp())).abs() < 1e-12);
        assert!(step(-1.0, 0, &c, &m, &d).is_err());
        assert!(step(1.0, 2, &c, &m, &d).is_err());
    }

    #[test]
    fn runs_are_reproducible_and_positive() {
        let m = two_state_model(1.02, 0.3);
        let c = solved(&m);
        let cfg = SimConfig {
            n_agents: 2000,
            horizon: 100,
            burn_in: 50,
            seed: 7,
            ..SimConfig::default()
        };
        let a = run(&c, &m, &cfg).unwrap();
        let b = run(&c, &m, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2000);
        assert!(a.assets.iter().all(|&x| x > 0.0 && x.is_finite()));
        let other = run(&c, &m, &SimConfig { seed: 8, ..cfg.clone() }).unwrap();
        assert_ne!(a.assets, other.assets);
        let path = run(&c, &m, &SimConfig { mode: SimMode::SinglePath, ..cfg }).unwrap();
        assert_eq!(path.len(), 2000);
        assert!(path.assets.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn panel_is_independent_of_thread_count() {
        let m = two_state_model(1.02, 0.3);
        let c = solved(&m);
        let cfg = SimConfig {
            n_agents: 500,
            horizon: 60,
            burn_in: 10,
            seed: 3,
            initial: InitialCondition::StationaryZ { assets: 1.0 },
            ..SimConfig::default()
        };
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| run(&c, &m, &cfg)).unwrap();
        let b = wide.install(|| run(&c, &m, &cfg)).unwrap();
        assert_eq!(a.assets, b.assets);
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            burn_in: 10,
            horizon: 10,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SimConfig { n_agents: 0, ..SimConfig::default() }.validate().is_err());
        let path = SimConfig {
            mode: SimMode::SinglePath,
            ..bad
        };
        assert!(path.validate().is_ok());
    }

    #[test]
    fn time_average_registry() {
        assert_eq!(time_average(&[2.5; 10], Observable::Identity).unwrap(), 2.5);
        assert_eq!(time_average(&[0.3, 1.0, 7.0], Observable::Above(0.0)).unwrap(), 1.0);
        assert!((time_average(&[0.0, std::f64::consts::E - 1.0], Observable::Log1p).unwrap() - 0.5).abs() < 1e-15);
        assert!(time_average(&[], Observable::Identity).is_err());
    }

    #[test]
    fn split_half_ks_detects_shift() {
        let iid: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 4001) as f64).collect();
        assert!(split_half_ks(&iid).unwrap().is_stationary());
        let drift: Vec<f64> = (0..4000).map(|i| i as f64).collect();
        let ks = split_half_ks(&drift).unwrap();
        assert!((ks.statistic - 1.0).abs() < 1e-12);
        assert!(!ks.is_stationary());
    }

    #[test]
    fn batch_means_of_iid_noise() {
        let mut rng = agent_rng(1, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let se = batch_means_standard_error(&xs, 50).unwrap();
        let naive = iid_standard_error(&xs);
        assert!((se / naive - 1.0).abs() < 0.4, "{se} vs {naive}");
        assert!(batch_means_standard_error(&xs[..3], 2).is_err());
    }
}
