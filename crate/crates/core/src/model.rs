//! Primitives of the household problem: utility, exogenous Markov state,
//! innovation laws for returns and income, and the assembled model.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::quadrature::NormalRule;

/// Transient income innovations beyond this standard deviation are rejected;
/// the lognormal moments the solver relies on overflow long before.
pub const MAX_ETA_STD: f64 = 10.0;

/// CRRA period utility. `Log` is the `γ = 1` member of the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilitySpec {
    Crra(f64),
    Log,
}

impl UtilitySpec {
    /// Builds a CRRA utility, mapping `γ = 1` onto `Log`.
    pub fn crra(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Parameter(format!(
                "relative risk aversion must be positive, got {gamma}"
            )));
        }
        Ok(if gamma == 1.0 {
            UtilitySpec::Log
        } else {
            UtilitySpec::Crra(gamma)
        })
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            UtilitySpec::Crra(g) => g,
            UtilitySpec::Log => 1.0,
        }
    }

    pub fn u(&self, c: f64) -> Result<f64> {
        check_positive("consumption", c)?;
        Ok(match *self {
            UtilitySpec::Crra(g) => c.powf(1.0 - g) / (1.0 - g),
            UtilitySpec::Log => c.ln(),
        })
    }

    /// Marginal utility `u′(c)`.
    pub fn u_prime(&self, c: f64) -> Result<f64> {
        check_positive("consumption", c)?;
        Ok(self.marginal().eval(c))
    }

    /// Inverse marginal utility `(u′)⁻¹(m)`.
    pub fn u_prime_inv(&self, m: f64) -> Result<f64> {
        check_positive("marginal utility", m)?;
        Ok(self.marginal().inverse(m))
    }

    /// Unchecked evaluator used in the solver's inner loops.
    pub fn marginal(&self) -> Marginal {
        let g = self.gamma();
        if g == 1.0 {
            Marginal::Log
        } else if g.fract() == 0.0 && g <= 16.0 {
            Marginal::Integer(g as i32, g)
        } else {
            Marginal::General(g)
        }
    }
}

fn check_positive(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be positive, got {x}")))
    }
}

/// Fast `u′`, `u″` and `(u′)⁻¹` with the exponent dispatch resolved once.
#[derive(Debug, Clone, Copy)]
pub enum Marginal {
    Log,
    Integer(i32, f64),
    General(f64),
}

impl Marginal {
    #[inline]
    pub fn eval(&self, c: f64) -> f64 {
        match *self {
            Marginal::Log => 1.0 / c,
            Marginal::Integer(k, _) => 1.0 / c.powi(k),
            Marginal::General(g) => c.powf(-g),
        }
    }

    /// `u″(c)`, always negative.
    #[inline]
    pub fn slope(&self, c: f64) -> f64 {
        match *self {
            Marginal::Log => -1.0 / (c * c),
            Marginal::Integer(k, g) => -g / c.powi(k + 1),
            Marginal::General(g) => -g * c.powf(-g - 1.0),
        }
    }

    #[inline]
    pub fn inverse(&self, m: f64) -> f64 {
        match *self {
            Marginal::Log => 1.0 / m,
            Marginal::Integer(2, _) => 1.0 / m.sqrt(),
            Marginal::Integer(_, g) | Marginal::General(g) => m.powf(-1.0 / g),
        }
    }
}

/// Finite Markov chain on strictly increasing real states.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    states: Vec<f64>,
    transition: DMatrix<f64>,
}

impl FiniteChain {
    pub fn new(states: Vec<f64>, transition: DMatrix<f64>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::Parameter("chain needs at least one state".into()));
        }
        if transition.nrows() != n || transition.ncols() != n {
            return Err(Error::Parameter(format!(
                "transition matrix is {}x{}, expected {n}x{n}",
                transition.nrows(),
                transition.ncols()
            )));
        }
        if states.iter().any(|s| !s.is_finite()) {
            return Err(Error::Parameter("chain states must be finite".into()));
        }
        if states.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("chain states must be strictly increasing".into()));
        }
        check_stochastic(&transition, 1e-12)?;
        Ok(Self { states, transition })
    }

    /// One-state chain at `value`.
    pub fn degenerate(value: f64) -> Self {
        Self {
            states: vec![value],
            transition: DMatrix::from_element(1, 1, 1.0),
        }
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn map_states<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        Self::new(self.states.iter().map(|&x| f(x)).collect(), self.transition.clone())
    }

    pub fn stationary_distribution(&self) -> Vec<f64> {
        stationary_distribution(&self.transition)
    }

    pub fn stationary_mean(&self) -> f64 {
        let pi = self.stationary_distribution();
        pi.iter().zip(&self.states).map(|(p, x)| p * x).sum()
    }

    /// First-order autocorrelation of the state under the stationary law.
    pub fn autocorrelation(&self) -> f64 {
        let pi = self.stationary_distribution();
        let x = &self.states;
        let mean: f64 = pi.iter().zip(x).map(|(p, v)| p * v).sum();
        let var: f64 = pi.iter().zip(x).map(|(p, v)| p * (v - mean).powi(2)).sum();
        if var <= 0.0 {
            return 0.0;
        }
        let n = x.len();
        let mut cov = 0.0;
        for i in 0..n {
            for j in 0..n {
                cov += pi[i] * self.transition[(i, j)] * (x[i] - mean) * (x[j] - mean);
            }
        }
        cov / var
    }
}

pub(crate) fn check_stochastic(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Parameter(format!(
                "transition row {i} has a negative or non-finite entry"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::Parameter(format!("transition row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Stationary law of a row-stochastic matrix. Solves the balance equations
/// directly and falls back to iterating the lazy chain when the linear
/// system is singular (reducible chains).
pub fn stationary_distribution(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    if n == 1 {
        return vec![1.0];
    }
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    if let Some(x) = a.lu().solve(&b) {
        if x.iter().all(|&v| v.is_finite() && v > -1e-12) {
            let mut v: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            return v;
        }
    }
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    let pt = p.transpose();
    for _ in 0..1_000_000 {
        let next = (&pi + &pt * &pi) * 0.5;
        let diff = (&next - &pi).amax();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    pi.iter().copied().collect()
}

/// How the gross return on savings is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnMode {
    /// `log R = μ + σ ζ` with `μ`, `σ` following their chains.
    Stochastic,
    /// Both return chains replaced by single states at their stationary means,
    /// leaving an IID lognormal return.
    IidCollapsed,
    /// Return fixed at the stationary mean of the configured return process.
    Constant,
}

/// One composite exogenous state `z = (χ, μ, σ)` with its component indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeState {
    pub chi: f64,
    pub mu: f64,
    pub sigma: f64,
    pub index: (usize, usize, usize),
}

/// Product Markov chain driving income and returns.
///
/// Composite states are ordered with `χ` varying slowest and `σ` fastest.
/// Unless a full composite matrix is supplied, the components are independent
/// and the kernel is the Kronecker product `Π_χ ⊗ Π_μ ⊗ Π_σ`.
#[derive(Debug, Clone)]
pub struct ExogenousProcess {
    chi: FiniteChain,
    mu: FiniteChain,
    sigma: FiniteChain,
    eta_std: f64,
    mode: ReturnMode,
    composite: DMatrix<f64>,
    separable: bool,
    states: Vec<CompositeState>,
}

impl ExogenousProcess {
    pub fn new(
        chi: FiniteChain,
        mu: FiniteChain,
        sigma: FiniteChain,
        eta_std: f64,
        mode: ReturnMode,
    ) -> Result<Self> {
        if !(eta_std.is_finite() && (0.0..MAX_ETA_STD).contains(&eta_std)) {
            return Err(Error::Parameter(format!(
                "transient income std must lie in [0, {MAX_ETA_STD}), got {eta_std}"
            )));
        }
        if mode != ReturnMode::Constant && sigma.states().iter().any(|&s| s <= 0.0) {
            return Err(Error::Parameter("volatility states must be strictly positive".into()));
        }
        let (mu, sigma) = match mode {
            ReturnMode::Stochastic => (mu, sigma),
            ReturnMode::IidCollapsed => (
                FiniteChain::degenerate(mu.stationary_mean()),
                FiniteChain::degenerate(sigma.stationary_mean()),
            ),
            ReturnMode::Constant => {
                let pm = mu.stationary_distribution();
                let ps = sigma.stationary_distribution();
                let mut mean_r = 0.0;
                for (i, &m) in mu.states().iter().enumerate() {
                    for (j, &s) in sigma.states().iter().enumerate() {
                        mean_r += pm[i] * ps[j] * (m + 0.5 * s * s).exp();
                    }
                }
                (FiniteChain::degenerate(mean_r.ln()), FiniteChain::degenerate(0.0))
            }
        };
        let composite = chi
            .transition()
            .kronecker(mu.transition())
            .kronecker(sigma.transition());
        let mut states = Vec::with_capacity(composite.nrows());
        for (a, &x) in chi.states().iter().enumerate() {
            for (b, &m) in mu.states().iter().enumerate() {
                for (c, &s) in sigma.states().iter().enumerate() {
                    states.push(CompositeState {
                        chi: x,
                        mu: m,
                        sigma: s,
                        index: (a, b, c),
                    });
                }
            }
        }
        Ok(Self {
            chi,
            mu,
            sigma,
            eta_std,
            mode,
            composite,
            separable: true,
            states,
        })
    }

    /// Deterministic gross return `r` with income driven by `chi` and `eta_std`.
    pub fn constant_return(chi: FiniteChain, eta_std: f64, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("gross return must be positive, got {r}")));
        }
        Self::new(
            chi,
            FiniteChain::degenerate(r.ln()),
            FiniteChain::degenerate(0.0),
            eta_std,
            ReturnMode::Constant,
        )
    }

    /// Replaces the independent-components kernel by a user-supplied composite
    /// matrix over the same composite state ordering.
    pub fn with_composite_matrix(mut self, matrix: DMatrix<f64>) -> Result<Self> {
        let k = self.states.len();
        if matrix.nrows() != k || matrix.ncols() != k {
            return Err(Error::Parameter(format!(
                "composite matrix must be {k}x{k}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_stochastic(&matrix, 1e-10)?;
        self.composite = matrix;
        self.separable = false;
        Ok(self)
    }

    pub fn chi(&self) -> &FiniteChain {
        &self.chi
    }
    pub fn mu(&self) -> &FiniteChain {
        &self.mu
    }
    pub fn sigma(&self) -> &FiniteChain {
        &self.sigma
    }
    pub fn eta_std(&self) -> f64 {
        self.eta_std
    }
    pub fn mode(&self) -> ReturnMode {
        self.mode
    }
    pub fn composite_matrix(&self) -> &DMatrix<f64> {
        &self.composite
    }
    /// True when the kernel is the Kronecker product of the component chains.
    pub fn is_separable(&self) -> bool {
        self.separable
    }
    pub fn composite_states(&self) -> &[CompositeState] {
        &self.states
    }
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn stationary_distribution(&self) -> Vec<f64> {
        stationary_distribution(&self.composite)
    }

    /// Composite index of the state whose components sit closest to their
    /// chains' stationary means.
    pub fn central_state(&self) -> usize {
        let nearest = |c: &FiniteChain| {
            let m = c.stationary_mean();
            c.states()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - m).abs().total_cmp(&(b.1 - m).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        let (a, b, c) = (nearest(&self.chi), nearest(&self.mu), nearest(&self.sigma));
        (a * self.mu.len() + b) * self.sigma.len() + c
    }

    /// `E[R | z′]` for each composite state.
    pub fn expected_return(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| (s.mu + 0.5 * s.sigma * s.sigma).exp())
            .collect()
    }

    /// `E[R^p | z′]` for each composite state (lognormal moment).
    pub fn return_moment(&self, p: f64) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| (p * s.mu + 0.5 * p * p * s.sigma * s.sigma).exp())
            .collect()
    }

    fn check_index(&self, j: usize) -> Result<&CompositeState> {
        self.states.get(j).ok_or_else(|| {
            Error::Parameter(format!(
                "state index {j} out of range (have {} states)",
                self.states.len()
            ))
        })
    }

    /// Quadrature nodes `(weight, R, Y)` for the innovations drawn alongside
    /// the next state `z′ = next_state`.
    pub fn conditional_ry_nodes(&self, next_state: usize, quad_nodes: usize) -> Result<Vec<ShockNode>> {
        if quad_nodes == 0 {
            return Err(Error::Parameter("quadrature needs at least one node".into()));
        }
        let s = *self.check_index(next_state)?;
        let rule = NormalRule::gauss_hermite(quad_nodes);
        Ok(tensor_nodes(&s, self.eta_std, &rule))
    }
}

fn tensor_nodes(s: &CompositeState, eta_std: f64, rule: &NormalRule) -> Vec<ShockNode> {
    let single = NormalRule::gauss_hermite(1);
    let zeta = if s.sigma == 0.0 { &single } else { rule };
    let eta = if eta_std == 0.0 { &single } else { rule };
    let mut out = Vec::with_capacity(zeta.len() * eta.len());
    for (&x, &wx) in zeta.nodes.iter().zip(&zeta.weights) {
        let r = (s.mu + s.sigma * x).exp();
        for (&y, &wy) in eta.nodes.iter().zip(&eta.weights) {
            out.push(ShockNode {
                weight: wx * wy,
                r,
                y: (s.chi + eta_std * y).exp(),
            });
        }
    }
    out
}

/// One innovation node: probability weight, gross return and income.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockNode {
    pub weight: f64,
    pub r: f64,
    pub y: f64,
}

/// How innovation expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// Tensor Gauss–Hermite rule with `quad_nodes` points per innovation.
    GaussHermite,
    /// Fixed seeded draws of `(ζ, η)` pairs with equal weights.
    MonteCarlo { draws: usize, seed: u64 },
}

/// Full specification of the household problem.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub beta: f64,
    pub utility: UtilitySpec,
    pub process: ExogenousProcess,
    pub quad_nodes: usize,
    pub expectation: Expectation,
}

impl ModelSpec {
    pub fn new(beta: f64, utility: UtilitySpec, process: ExogenousProcess, quad_nodes: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Parameter(format!("discount factor must lie in [0, 1), got {beta}")));
        }
        if quad_nodes == 0 {
            return Err(Error::Parameter("quadrature needs at least one node".into()));
        }
        Ok(Self {
            beta,
            utility,
            process,
            quad_nodes,
            expectation: Expectation::GaussHermite,
        })
    }

    pub fn with_expectation(mut self, expectation: Expectation) -> Result<Self> {
        if let Expectation::MonteCarlo { draws, .. } = expectation {
            if draws == 0 {
                return Err(Error::Parameter("Monte Carlo expectation needs draws".into()));
            }
        }
        self.expectation = expectation;
        Ok(self)
    }

    /// Innovation nodes for every next state under the configured rule.
    pub fn shock_table(&self) -> ShockTable {
        ShockTable::build(self)
    }

    /// Hex SHA-256 of a canonical rendering of every numerical input.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |label: &str, xs: &[f64]| {
            h.update(label.as_bytes());
            for x in xs {
                h.update(format!("{:.16e};", x).as_bytes());
            }
        };
        put("beta", &[self.beta]);
        put("gamma", &[self.utility.gamma()]);
        let p = &self.process;
        for (name, c) in [("chi", &p.chi), ("mu", &p.mu), ("sigma", &p.sigma)] {
            put(name, c.states());
            put("P", c.transition().transpose().as_slice());
        }
        put("composite", p.composite.transpose().as_slice());
        put("eta", &[p.eta_std]);
        put(&format!("mode{:?}", p.mode), &[]);
        put(&format!("quad{}", self.quad_nodes), &[]);
        put(&format!("{:?}", self.expectation), &[]);
        hex::encode(h.finalize())
    }
}

/// Innovation nodes per next composite state, stored column-wise for the
/// solver's inner loop.
#[derive(Debug, Clone)]
pub struct ShockTable {
    pub weights: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
    pub incomes: Vec<Vec<f64>>,
}

impl ShockTable {
    pub fn build(model: &ModelSpec) -> Self {
        let p = &model.process;
        let k = p.num_states();
        let mut t = Self {
            weights: Vec::with_capacity(k),
            returns: Vec::with_capacity(k),
            incomes: Vec::with_capacity(k),
        };
        match model.expectation {
            Expectation::GaussHermite => {
                let rule = NormalRule::gauss_hermite(model.quad_nodes);
                for s in p.composite_states() {
                    let nodes = tensor_nodes(s, p.eta_std, &rule);
                    t.push(&nodes);
                }
            }
            Expectation::MonteCarlo { draws, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pairs: Vec<(f64, f64)> = (0..draws)
                    .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                    .collect();
                let w = 1.0 / draws as f64;
                for s in p.composite_states() {
                    let nodes: Vec<ShockNode> = pairs
                        .iter()
                        .map(|&(zeta, eta)| ShockNode {
                            weight: w,
                            r: (s.mu + s.sigma * zeta).exp(),
                            y: (s.chi + p.eta_std * eta).exp(),
                        })
                        .collect();
                    t.push(&nodes);
                }
            }
        }
        t
    }

    fn push(&mut self, nodes: &[ShockNode]) {
        self.weights.push(nodes.iter().map(|n| n.weight).collect());
        self.returns.push(nodes.iter().map(|n| n.r).collect());
        self.incomes.push(nodes.iter().map(|n| n.y).collect());
    }

    /// `E[h(R, Y) | z′ = j]`.
    pub fn expect<F: Fn(f64, f64) -> f64>(&self, j: usize, h: F) -> f64 {
        self.weights[j]
            .iter()
            .zip(&self.returns[j])
            .zip(&self.incomes[j])
            .map(|((&w, &r), &y)| w * h(r, y))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p: f64, q: f64, states: [f64; 2]) -> FiniteChain {
        FiniteChain::new(
            states.to_vec(),
            DMatrix::from_row_slice(2, 2, &[p, 1.0 - p, 1.0 - q, q]),
        )
        .unwrap()
    }

    #[test]
    fn u_prime_examples() {
        let g2 = UtilitySpec::crra(2.0).unwrap();
        assert_eq!(g2.u_prime(2.0).unwrap(), 0.25);
        assert_eq!(UtilitySpec::Log.u_prime(1.0).unwrap(), 1.0);
        let g15 = UtilitySpec::crra(1.5).unwrap();
        assert!((g15.u_prime(4.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(g2.u_prime(0.0).is_err());
        assert!(g2.u_prime(-1.0).is_err());
    }

    #[test]
    fn u_prime_inv_examples() {
        let g2 = UtilitySpec::crra(2.0).unwrap();
        assert_eq!(g2.u_prime_inv(0.25).unwrap(), 2.0);
        assert_eq!(UtilitySpec::Log.u_prime_inv(1.0).unwrap(), 1.0);
        let half = UtilitySpec::crra(0.5).unwrap();
        assert!((half.u_prime_inv(0.1).unwrap() - 100.0).abs() < 1e-10);
        assert!(half.u_prime_inv(0.0).is_err());
    }

    #[test]
    fn crra_one_is_log_and_nonpositive_gamma_rejected() {
        assert_eq!(UtilitySpec::crra(1.0).unwrap(), UtilitySpec::Log);
        assert!(UtilitySpec::crra(0.0).is_err());
        assert!(UtilitySpec::crra(-2.0).is_err());
    }

    #[test]
    fn inada_limits() {
        let u = UtilitySpec::Log;
        assert!(u.u_prime(1e-12).unwrap() > 1e6);
        assert!(u.u_prime(1e12).unwrap() < 1e-6);
    }

    #[test]
    fn utility_is_increasing_and_concave() {
        for u in [UtilitySpec::Log, UtilitySpec::crra(2.0).unwrap(), UtilitySpec::crra(0.5).unwrap()] {
            let grid: Vec<f64> = (0..100).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 99.0)).collect();
            for w in grid.windows(2) {
                assert!(u.u(w[0]).unwrap() < u.u(w[1]).unwrap());
                assert!(u.u_prime(w[0]).unwrap() > u.u_prime(w[1]).unwrap());
            }
        }
    }

    #[test]
    fn chain_validation() {
        assert!(FiniteChain::new(vec![], DMatrix::zeros(0, 0)).is_err());
        assert!(FiniteChain::new(vec![1.0, 0.0], DMatrix::identity(2, 2)).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(FiniteChain::new(vec![0.0, 1.0], bad).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.1, -0.1, 0.5, 0.5]);
        assert!(FiniteChain::new(vec![0.0, 1.0], neg).is_err());
    }

    #[test]
    fn stationary_distribution_of_two_state_chain() {
        let c = two_state(0.9, 0.8, [0.0, 1.0]);
        let pi = c.stationary_distribution();
        // pi_0 = (1-q) / (2 - p - q)
        assert!((pi[0] - 0.2 / 0.3).abs() < 1e-12);
        assert!((pi[1] - 0.1 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn composite_ordering_chi_slowest_sigma_fastest() {
        let chi = two_state(0.9, 0.9, [-1.0, 1.0]);
        let sigma = two_state(0.7, 0.7, [0.1, 0.2]);
        let p = ExogenousProcess::new(chi, FiniteChain::degenerate(0.03), sigma, 0.1, ReturnMode::Stochastic).unwrap();
        let got: Vec<(f64, f64)> = p.composite_states().iter().map(|s| (s.chi, s.sigma)).collect();
        assert_eq!(got, vec![(-1.0, 0.1), (-1.0, 0.2), (1.0, 0.1), (1.0, 0.2)]);
        let single = ExogenousProcess::constant_return(FiniteChain::degenerate(0.0), 0.0, 1.02).unwrap();
        assert_eq!(single.num_states(), 1);
    }

    #[test]
    fn kronecker_kernel_entries() {
        let chi = two_state(0.9, 0.6, [-1.0, 1.0]);
        let mu = two_state(0.8, 0.7, [0.0, 0.05]);
        let sigma = two_state(0.75, 0.55, [0.1, 0.2]);
        let p = ExogenousProcess::new(chi.clone(), mu.clone(), sigma.clone(), 0.1, ReturnMode::Stochastic).unwrap();
        let k = p.composite_matrix();
        for i in 0..8 {
            let (a, b, c) = p.composite_states()[i].index;
            for j in 0..8 {
                let (d, e, f) = p.composite_states()[j].index;
                let want = chi.transition()[(a, d)] * mu.transition()[(b, e)] * sigma.transition()[(c, f)];
                assert!((k[(i, j)] - want).abs() < 1e-15);
            }
            assert!((k.row(i).sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_nonpositive_volatility_and_huge_eta() {
        let z = FiniteChain::degenerate(0.0);
        assert!(ExogenousProcess::new(z.clone(), z.clone(), FiniteChain::degenerate(0.0), 0.1, ReturnMode::Stochastic).is_err());
        assert!(ExogenousProcess::new(z.clone(), z.clone(), FiniteChain::degenerate(0.1), f64::INFINITY, ReturnMode::Stochastic).is_err());
        assert!(ExogenousProcess::new(z.clone(), z, FiniteChain::degenerate(0.1), -0.1, ReturnMode::Stochastic).is_err());
    }

    #[test]
    fn constant_mode_collapses_to_stationary_mean_return() {
        let mu = two_state(0.5, 0.5, [0.0, 0.04]);
        let sigma = FiniteChain::degenerate(0.1);
        let p = ExogenousProcess::new(FiniteChain::degenerate(0.0), mu, sigma, 0.0, ReturnMode::Constant).unwrap();
        let want = 0.5 * ((0.005f64).exp() + (0.045f64).exp());
        assert!((p.expected_return()[0] - want).abs() < 1e-14);
        let nodes = p.conditional_ry_nodes(0, 21).unwrap();
        assert_eq!(nodes.len(), 1);
        assert!((nodes[0].r - want).abs() < 1e-14);
    }

    #[test]
    fn iid_mode_collapses_chains() {
        let mu = two_state(0.9, 0.9, [0.0, 0.04]);
        let sigma = two_state(0.5, 0.5, [0.02, 0.06]);
        let p = ExogenousProcess::new(FiniteChain::degenerate(0.0), mu, sigma, 0.2, ReturnMode::IidCollapsed).unwrap();
        assert_eq!(p.num_states(), 1);
        assert!((p.mu().states()[0] - 0.02).abs() < 1e-12);
        assert!((p.sigma().states()[0] - 0.04).abs() < 1e-12);
    }

    #[test]
    fn degenerate_innovations_give_single_node() {
        let p = ExogenousProcess::constant_return(FiniteChain::degenerate(0.3), 0.0, 1.05).unwrap();
        let nodes = p.conditional_ry_nodes(0, 21).unwrap();
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0].weight, 1.0);
        assert!((nodes[0].y - 0.3f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn one_node_rule_sits_at_conditional_medians() {
        let p = ExogenousProcess::new(
            FiniteChain::degenerate(0.2),
            FiniteChain::degenerate(0.03),
            FiniteChain::degenerate(0.1),
            0.3,
            ReturnMode::Stochastic,
        )
        .unwrap();
        let nodes = p.conditional_ry_nodes(0, 1).unwrap();
        assert_eq!(nodes.len(), 1);
        assert!((nodes[0].r - 0.03f64.exp()).abs() < 1e-15);
        assert!((nodes[0].y - 0.2f64.exp()).abs() < 1e-15);
        assert!(p.conditional_ry_nodes(1, 3).is_err());
        assert!(p.conditional_ry_nodes(0, 0).is_err());
    }

    #[test]
    fn quadrature_matches_lognormal_mean() {
        let p = ExogenousProcess::new(
            FiniteChain::degenerate(0.0),
            FiniteChain::degenerate(0.0),
            FiniteChain::degenerate(0.2),
            0.1,
            ReturnMode::Stochastic,
        )
        .unwrap();
        let nodes = p.conditional_ry_nodes(0, 21).unwrap();
        let w: f64 = nodes.iter().map(|n| n.weight).sum();
        assert!((w - 1.0).abs() < 1e-12);
        let er: f64 = nodes.iter().map(|n| n.weight * n.r).sum();
        assert!((er - (0.02f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let p = ExogenousProcess::constant_return(FiniteChain::degenerate(0.0), 0.1, 1.02).unwrap();
        let a = ModelSpec::new(0.95, UtilitySpec::Log, p.clone(), 7).unwrap();
        let b = ModelSpec::new(0.95, UtilitySpec::Log, p.clone(), 7).unwrap();
        let c = ModelSpec::new(0.94, UtilitySpec::Log, p, 7).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert!(ModelSpec::new(1.0, UtilitySpec::Log, a.process.clone(), 7).is_err());
    }
}
