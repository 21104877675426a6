use nalgebra::DMatrix;
use proptest::prelude::*;

use ifp::assumptions::{spectral_radius, AssumptionReport, DEFAULT_MAX_ITER, DEFAULT_TOL};
use ifp::coleman::{apply_coleman, AssetGrid, ConsumptionPolicy, SolveOptions, Spacing};
use ifp::discretize::tauchen;
use ifp::model::{ExogenousProcess, ModelSpec, UtilitySpec};
use ifp::quadrature::NormalRule;
use ifp::simulate::{self, InitialCondition, SimConfig};

fn stochastic(raw: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_row_slice(n, n, &raw[..n * n]);
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

fn small_model(beta: f64, gamma: f64, r: f64, persistence: f64) -> ModelSpec {
    let chi = tauchen(persistence, 0.2, 0.0, 3, 3.0).unwrap();
    let p = ExogenousProcess::constant_return(chi, 0.3, r).unwrap();
    ModelSpec::new(beta, UtilitySpec::crra(gamma).unwrap(), p, 5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tauchen_rows_are_distributions(rho in -0.99f64..0.99, delta in 0.01f64..2.0, n in 1usize..9, mean in -1.0f64..1.0) {
        let c = tauchen(rho, delta, mean, n, 3.0).unwrap();
        for row in c.transition().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
        prop_assert!(c.states().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn power_iteration_matches_dense_eigenvalues(n in 2usize..6, raw in prop::collection::vec(0.001f64..1.0, 25), d in prop::collection::vec(0.5f64..1.5, 5)) {
        let p = stochastic(&raw, n);
        let k = &p * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d[..n]));
        let r = spectral_radius(&k, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let oracle = k.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!((r - oracle).abs() < 1e-9, "{} vs {}", r, oracle);
    }

    #[test]
    fn raising_beta_shrinks_contraction_margin(b0 in 0.5f64..0.9, db in 0.001f64..0.09, r in 0.9f64..1.1) {
        let lo = AssumptionReport::evaluate(&small_model(b0, 2.0, r, 0.5)).unwrap();
        let hi = AssumptionReport::evaluate(&small_model(b0 + db, 2.0, r, 0.5)).unwrap();
        prop_assert!(hi.contraction_margin < lo.contraction_margin);
    }

    #[test]
    fn lognormal_moment_identity(s in -2.0f64..2.0) {
        let rule = NormalRule::gauss_hermite(21);
        let got = rule.expect(|x| (s * x).exp());
        prop_assert!((got / (0.5 * s * s).exp() - 1.0).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The operator maps feasible increasing policies to feasible increasing policies.
    #[test]
    fn operator_preserves_policy_class(kappa in 0.05f64..1.0, b in 0.05f64..5.0, beta in 0.5f64..0.95, gamma in 1.0f64..4.0) {
        let model = small_model(beta, gamma, 1.01, 0.8);
        let grid = AssetGrid::new(1e-3, 20.0, 30, Spacing::Linear).unwrap();
        let k = model.process.num_states();
        let values: Vec<f64> = (0..k)
            .flat_map(|_| grid.points().iter().map(|&a| (kappa * a + (1.0 - kappa) * a.min(b)).min(a)).collect::<Vec<_>>())
            .collect();
        let c = ConsumptionPolicy::from_values(grid.clone(), k, values).unwrap();
        let t = apply_coleman(&c, &model, &SolveOptions::default()).unwrap();
        let pts = grid.points();
        for z in 0..k {
            let col = t.column(z);
            for i in 0..pts.len() {
                prop_assert!(col[i] > 0.0 && col[i] <= pts[i]);
                if i > 0 {
                    prop_assert!(col[i] >= col[i - 1] - 1e-12);
                }
            }
        }
    }

    /// Terminal assets are positive and reproducible for any seed.
    #[test]
    fn simulation_is_positive_and_reproducible(seed in any::<u64>()) {
        let model = small_model(0.9, 2.0, 1.02, 0.7);
        let grid = AssetGrid::new(1e-3, 20.0, 30, Spacing::Linear).unwrap();
        let c = ConsumptionPolicy::identity(grid, model.process.num_states());
        let cfg = SimConfig {
            n_agents: 200,
            horizon: 30,
            burn_in: 5,
            seed,
            initial: InitialCondition::PointMass { assets: 2.0, state: None },
            ..SimConfig::default()
        };
        let a = simulate::run(&c, &model, &cfg).unwrap();
        prop_assert!(a.assets.iter().all(|&x| x > 0.0));
        prop_assert_eq!(a, simulate::run(&c, &model, &cfg).unwrap());
    }
}
