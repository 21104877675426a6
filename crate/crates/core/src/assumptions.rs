//! Spectral-radius checks for the contraction, patience and income
//! conditions, collected into an [`AssumptionReport`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Largest horizon searched when back-reporting the contraction modulus.
pub const MAX_CONTRACTION_STEPS: u32 = 64;

/// Spectral radius of a square nonnegative matrix by power iteration.
///
/// Iterates on `M + τI` (with `τ` a tenth of the largest row sum) so that
/// periodic chains still have a strictly dominant eigenvalue. Stops when the
/// Collatz–Wielandt bounds or successive norm ratios agree to `tol`.
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Parameter(format!(
            "spectral radius needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::Parameter("matrix entries must be finite and nonnegative".into()));
    }
    let max_row = m.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    if max_row == 0.0 {
        return Ok(0.0);
    }
    let shift = 0.1 * max_row;
    let a = m + DMatrix::identity(n, n) * shift;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    let mut prev_ratio = f64::NAN;
    let mut stable = 0;
    let mut estimate = f64::NAN;
    for _ in 0..max_iter {
        let y = &a * &x;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let q = y[i] / x[i];
            lo = lo.min(q);
            hi = hi.max(q);
        }
        if hi - lo <= tol * hi {
            return Ok(0.5 * (lo + hi) - shift);
        }
        let norm = y.amax();
        let ratio = norm / x.amax();
        estimate = ratio - shift;
        if (ratio - prev_ratio).abs() <= 0.1 * tol * ratio {
            stable += 1;
            if stable >= 3 {
                return Ok(estimate);
            }
        } else {
            stable = 0;
        }
        prev_ratio = ratio;
        x = y / norm;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate,
    })
}

fn sup_norm_of_product(p: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    (p * v).iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

fn scale_columns(p: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut k = p.clone();
    for (j, mut col) in k.column_iter_mut().enumerate() {
        col *= d[j];
    }
    k
}

/// Outcome of the discounted expected-return condition `β r(K) < 1`.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionCheck {
    pub r_k: f64,
    pub passes: bool,
    /// Smallest `n` with `β^n ‖K^n‖ < 1`, capped at [`MAX_CONTRACTION_STEPS`].
    pub n: u32,
    /// `β^n sup_z E_z R_1⋯R_n` at that `n`.
    pub theta: f64,
}

/// Expected-return operator `K = Π D` with `D = diag(E[R | z′])`.
pub fn expected_return_operator(model: &ModelSpec) -> DMatrix<f64> {
    let p = &model.process;
    scale_columns(p.composite_matrix(), &p.expected_return())
}

pub fn check_contraction(model: &ModelSpec) -> Result<ContractionCheck> {
    let k = expected_return_operator(model);
    let r_k = spectral_radius(&k, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let beta = model.beta;
    let passes = beta * r_k < 1.0;
    let mut power = k.clone();
    let mut n = 1;
    let mut theta = beta * row_sum_norm(&power);
    while theta >= 1.0 && n < MAX_CONTRACTION_STEPS {
        power = &power * &k;
        n += 1;
        theta = beta.powi(n as i32) * row_sum_norm(&power);
    }
    Ok(ContractionCheck { r_k, passes, n, theta })
}

fn row_sum_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.sum()).fold(0.0, f64::max)
}

/// The patience condition `max{r(ΠD), 1} < (β ‖ΠV‖)^{-1/γ}` and the band of
/// consumption-share bounds `α` it certifies.
#[derive(Debug, Clone, Serialize)]
pub struct PatienceCheck {
    /// Spectral term before taking the max with one.
    pub spectral: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub passes: bool,
    /// True when evaluated in the separable `(Π_μ, Π_σ)` form.
    pub separable_form: bool,
    pub alpha_band: Option<(f64, f64)>,
    pub alpha: Option<f64>,
}

pub fn check_patience(model: &ModelSpec) -> Result<PatienceCheck> {
    let gamma = model.utility.gamma();
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!("relative risk aversion must be positive, got {gamma}")));
    }
    let p = &model.process;
    let (spectral, norm) = if p.is_separable() {
        let mu = p.mu();
        let sigma = p.sigma();
        let d_mu: Vec<f64> = mu.states().iter().map(|&m| m.exp()).collect();
        let d_sigma: Vec<f64> = sigma.states().iter().map(|&s| (0.5 * s * s).exp()).collect();
        let v_mu: Vec<f64> = mu.states().iter().map(|&m| ((1.0 - gamma) * m).exp()).collect();
        let v_sigma: Vec<f64> = sigma
            .states()
            .iter()
            .map(|&s| (0.5 * (1.0 - gamma).powi(2) * s * s).exp())
            .collect();
        let r_mu = spectral_radius(&scale_columns(mu.transition(), &d_mu), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        let r_sigma = spectral_radius(&scale_columns(sigma.transition(), &d_sigma), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        (
            r_mu * r_sigma,
            sup_norm_of_product(mu.transition(), &v_mu) * sup_norm_of_product(sigma.transition(), &v_sigma),
        )
    } else {
        let k = expected_return_operator(model);
        let v = p.return_moment(1.0 - gamma);
        (
            spectral_radius(&k, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
            sup_norm_of_product(p.composite_matrix(), &v),
        )
    };
    let lhs = spectral.max(1.0);
    let rhs = if model.beta == 0.0 {
        f64::INFINITY
    } else {
        (model.beta * norm).powf(-1.0 / gamma)
    };
    let passes = lhs < rhs;
    let alpha_band = if passes {
        let lo = (1.0 - 1.0 / spectral).max(0.0);
        let hi = (1.0 - 1.0 / rhs).min(1.0);
        (hi > lo).then_some((lo, hi))
    } else {
        None
    };
    Ok(PatienceCheck {
        spectral,
        lhs,
        rhs,
        passes,
        separable_form: p.is_separable(),
        alpha: alpha_band.map(|(lo, hi)| 0.5 * (lo + hi)),
        alpha_band,
    })
}

/// Suprema over current states of the income and return moments the
/// optimality results need bounded.
#[derive(Debug, Clone, Serialize)]
pub struct IncomeMoments {
    pub sup_e_y: f64,
    pub sup_e_uprime_y: f64,
    pub sup_e_r_uprime_y: f64,
    pub sup_e_r2: f64,
    pub sup_e_uprime_y_sq: f64,
    pub passes: bool,
}

pub fn check_income_moments(model: &ModelSpec) -> IncomeMoments {
    let table = model.shock_table();
    let up = model.utility.marginal();
    let p = model.process.composite_matrix();
    let k = p.nrows();
    let conditional = |h: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        (0..k).map(|j| table.expect(j, |r, y| h(r, y))).collect()
    };
    let sup = |v: Vec<f64>| sup_norm_of_product(p, &v);
    let sup_e_y = sup(conditional(&|_, y| y));
    let sup_e_uprime_y = sup(conditional(&|_, y| up.eval(y)));
    let sup_e_r_uprime_y = sup(conditional(&|r, y| r * up.eval(y)));
    let sup_e_r2 = sup(conditional(&|r, _| r * r));
    let sup_e_uprime_y_sq = sup(conditional(&|_, y| up.eval(y).powi(2)));
    let passes = [sup_e_y, sup_e_uprime_y, sup_e_r_uprime_y, sup_e_r2, sup_e_uprime_y_sq]
        .iter()
        .all(|v| v.is_finite());
    IncomeMoments {
        sup_e_y,
        sup_e_uprime_y,
        sup_e_r_uprime_y,
        sup_e_r2,
        sup_e_uprime_y_sq,
        passes,
    }
}

/// Geometric drift constants `(q, q′)` for income on a finite state space:
/// `q = 0` and `q′ = sup_z E_z Y_2`.
pub fn check_drift(model: &ModelSpec) -> (f64, f64) {
    let p = &model.process;
    let eta = p.eta_std();
    let ey: Vec<f64> = p
        .composite_states()
        .iter()
        .map(|s| (s.chi + 0.5 * eta * eta).exp())
        .collect();
    let p2 = p.composite_matrix() * p.composite_matrix();
    (0.0, sup_norm_of_product(&p2, &ey))
}

/// Every checkable condition for one model, with margins.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub beta: f64,
    pub gamma: f64,
    pub r_k: f64,
    pub n: u32,
    pub theta: f64,
    pub contraction_ok: bool,
    pub contraction_margin: f64,
    pub patience_spectral: f64,
    pub patience_lhs: f64,
    pub patience_rhs: f64,
    pub patience_separable: bool,
    pub stability_ok: bool,
    pub alpha: Option<f64>,
    pub alpha_band: Option<(f64, f64)>,
    pub income_ok: bool,
    pub income: IncomeMoments,
    pub drift_q: f64,
    pub drift_q_prime: f64,
}

impl AssumptionReport {
    pub fn evaluate(model: &ModelSpec) -> Result<Self> {
        let c = check_contraction(model)?;
        let pat = check_patience(model)?;
        let income = check_income_moments(model);
        let (q, qp) = check_drift(model);
        Ok(Self {
            beta: model.beta,
            gamma: model.utility.gamma(),
            r_k: c.r_k,
            n: c.n,
            theta: c.theta,
            contraction_ok: c.passes,
            contraction_margin: 1.0 - model.beta * c.r_k,
            patience_spectral: pat.spectral,
            patience_lhs: pat.lhs,
            patience_rhs: pat.rhs,
            patience_separable: pat.separable_form,
            stability_ok: c.passes && pat.passes && pat.alpha.is_some(),
            alpha: pat.alpha,
            alpha_band: pat.alpha_band,
            income_ok: income.passes,
            income,
            drift_q: q,
            drift_q_prime: qp,
        })
    }

    /// Patience margin `rhs − lhs`; positive when the condition holds.
    pub fn patience_margin(&self) -> f64 {
        self.patience_rhs - self.patience_lhs
    }

    /// Share lower bound usable for policy checks, zero when none is certified.
    pub fn share_bound(&self) -> f64 {
        self.alpha.unwrap_or(0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExogenousProcess, FiniteChain, ReturnMode, UtilitySpec};

    fn constant_model(r: f64, beta: f64, utility: UtilitySpec) -> ModelSpec {
        let p = ExogenousProcess::constant_return(FiniteChain::degenerate(0.0), 0.0, r).unwrap();
        ModelSpec::new(beta, utility, p, 7).unwrap()
    }

    /// Largest root modulus of a 2x2 characteristic polynomial.
    fn radius_2x2(m: &DMatrix<f64>) -> f64 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
        } else {
            det.sqrt()
        }
    }

    #[test]
    fn radius_of_simple_matrices() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert!((spectral_radius(&eye, 1e-12, 1000).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        assert!((spectral_radius(&d, 1e-12, 10_000).unwrap() - 2.0).abs() < 1e-10);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((spectral_radius(&swap, 1e-12, 10_000).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(spectral_radius(&DMatrix::zeros(2, 2), 1e-12, 10).unwrap(), 0.0);
        assert!(spectral_radius(&DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), 1e-12, 10).is_err());
        assert!(spectral_radius(&DMatrix::from_row_slice(1, 1, &[-1.0]), 1e-12, 10).is_err());
    }

    #[test]
    fn radius_of_markov_times_diagonal() {
        let pi = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        let k = scale_columns(&pi, &[1.0, 1.1]);
        // tr = 1.89, det = 0.9*0.99 - 0.1*0.11 = 0.88; root = (1.89 + sqrt(1.89^2 - 3.52)) / 2
        let want = (1.89 + (1.89f64 * 1.89 - 3.52).sqrt()) / 2.0;
        assert!((spectral_radius(&k, 1e-12, 10_000).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn radius_agrees_with_2x2_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let mut m = DMatrix::zeros(2, 2);
            for i in 0..2 {
                let a: f64 = rng.gen_range(0.0..1.0);
                let keep: f64 = rng.gen_range(0.5..1.0);
                m[(i, 0)] = a * keep;
                m[(i, 1)] = (1.0 - a) * keep;
            }
            let m = scale_columns(&m, &[rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)]);
            let got = spectral_radius(&m, 1e-12, 100_000).unwrap();
            assert!((got - radius_2x2(&m)).abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn constant_return_contraction() {
        let m = constant_model(1.02, 0.95, UtilitySpec::Log);
        let c = check_contraction(&m).unwrap();
        assert!((c.r_k - 1.02).abs() < 1e-12);
        assert!(c.passes);
        assert_eq!(c.n, 1);
        assert!((c.theta - 0.969).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_strict() {
        let beta = 0.95;
        let m = constant_model(1.0 / beta, beta, UtilitySpec::Log);
        let c = check_contraction(&m).unwrap();
        assert!(!(beta * c.r_k < 1.0 - 1e-12));
        let bigger = constant_model(1.0 / beta * 1.001, beta, UtilitySpec::Log);
        assert!(!check_contraction(&bigger).unwrap().passes);
    }

    #[test]
    fn raising_beta_shrinks_margin() {
        let mut last = f64::INFINITY;
        for beta in [0.8, 0.85, 0.9, 0.95] {
            let m = constant_model(1.03, beta, UtilitySpec::Log);
            let margin = AssumptionReport::evaluate(&m).unwrap().contraction_margin;
            assert!(margin < last);
            last = margin;
        }
    }

    #[test]
    fn log_utility_patience_reduces_to_discount() {
        let chi = crate::discretize::tauchen(0.9, 0.1, 0.0, 3, 3.0).unwrap();
        let mu = crate::discretize::tauchen(0.5, 0.01, 0.03, 3, 3.0).unwrap();
        let sigma = crate::discretize::discretize_log_volatility(0.3, 0.2, -3.0, 3, 3.0).unwrap();
        let p = ExogenousProcess::new(chi, mu, sigma, 0.2, ReturnMode::Stochastic).unwrap();
        let m = ModelSpec::new(0.95, UtilitySpec::Log, p, 7).unwrap();
        let pat = check_patience(&m).unwrap();
        assert!((pat.rhs - 1.0 / 0.95).abs() < 1e-12);
    }

    #[test]
    fn constant_return_patience_scalar_algebra() {
        let (r, beta, gamma) = (1.03, 0.95, 2.0);
        let m = constant_model(r, beta, UtilitySpec::crra(gamma).unwrap());
        let pat = check_patience(&m).unwrap();
        assert!((pat.lhs - r).abs() < 1e-12);
        let rhs = (beta * r.powf(1.0 - gamma)).powf(-1.0 / gamma);
        assert!((pat.rhs - rhs).abs() < 1e-12);
        assert!(pat.passes);
        let alpha = pat.alpha.unwrap();
        // The band is exactly where β R^{1-γ} ≤ (1-α)^γ and (1-α) R < 1.
        assert!(beta * r.powf(1.0 - gamma) <= (1.0 - alpha).powf(gamma));
        assert!((1.0 - alpha) * r < 1.0);
        let (lo, hi) = pat.alpha_band.unwrap();
        assert!((lo - (1.0 - 1.0 / r)).abs() < 1e-12);
        assert!((hi - (1.0 - (beta * r.powf(1.0 - gamma)).powf(1.0 / gamma))).abs() < 1e-12);
    }

    #[test]
    fn composite_fallback_matches_separable_on_independent_chains() {
        let chi = crate::discretize::tauchen(0.9, 0.1, 0.0, 2, 3.0).unwrap();
        let mu = crate::discretize::tauchen(0.6, 0.01, 0.03, 3, 3.0).unwrap();
        let sigma = crate::discretize::discretize_log_volatility(0.3, 0.2, -3.0, 2, 3.0).unwrap();
        let p = ExogenousProcess::new(chi, mu, sigma, 0.2, ReturnMode::Stochastic).unwrap();
        let matrix = p.composite_matrix().clone();
        let sep = ModelSpec::new(0.95, UtilitySpec::crra(2.0).unwrap(), p.clone(), 7).unwrap();
        let gen = ModelSpec::new(0.95, UtilitySpec::crra(2.0).unwrap(), p.with_composite_matrix(matrix).unwrap(), 7).unwrap();
        let a = check_patience(&sep).unwrap();
        let b = check_patience(&gen).unwrap();
        assert!(a.separable_form && !b.separable_form);
        assert!((a.spectral - b.spectral).abs() < 1e-8);
        assert!((a.rhs - b.rhs).abs() < 1e-10);
        let c = check_contraction(&sep).unwrap();
        assert!((c.r_k - a.spectral).abs() < 1e-8);
    }

    #[test]
    fn income_moments_trivial_and_lognormal() {
        let m = constant_model(1.02, 0.95, UtilitySpec::crra(3.0).unwrap());
        let inc = check_income_moments(&m);
        assert!((inc.sup_e_uprime_y - 1.0).abs() < 1e-15);
        assert!((inc.sup_e_r2 - 1.02f64.powi(2)).abs() < 1e-12);
        assert!(inc.passes);

        let eta = 0.075f64.sqrt();
        let p = ExogenousProcess::constant_return(FiniteChain::degenerate(0.0), eta, 1.02).unwrap();
        let m = ModelSpec::new(0.95, UtilitySpec::crra(2.0).unwrap(), p, 21).unwrap();
        let inc = check_income_moments(&m);
        let want = (2.0 * 4.0 * 0.075f64).exp();
        assert!(((inc.sup_e_uprime_y_sq - want) / want).abs() < 1e-6);
    }

    #[test]
    fn drift_constants() {
        let m = constant_model(1.02, 0.95, UtilitySpec::Log);
        assert_eq!(check_drift(&m), (0.0, 1.0));

        let chi = crate::discretize::tauchen(0.977, 0.02f64.sqrt(), 0.0, 5, 3.0).unwrap();
        let eta = 0.075f64.sqrt();
        let p = ExogenousProcess::constant_return(chi.clone(), eta, 1.02).unwrap();
        let m = ModelSpec::new(0.95, UtilitySpec::Log, p, 7).unwrap();
        let p2 = chi.transition() * chi.transition();
        let ey = DVector::from_iterator(5, chi.states().iter().map(|x| x.exp()));
        let want = (p2 * ey).max() * (0.5 * eta * eta).exp();
        assert!((check_drift(&m).1 - want).abs() < 1e-12);
    }

    #[test]
    fn report_invariants() {
        let m = constant_model(1.03, 0.95, UtilitySpec::crra(2.0).unwrap());
        let r = AssumptionReport::evaluate(&m).unwrap();
        assert!(r.stability_ok && r.contraction_ok);
        let a = r.alpha.unwrap();
        assert!(a > 0.0 && a < 1.0);
        assert!(r.to_json().contains("\"r_k\""));
    }
}
