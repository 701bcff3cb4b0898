//! Property tests for the structural invariants.

use fdsa_core::basis::{gauss_legendre, phi_eval, psi_deriv, BasisConfig};
use fdsa_core::fields::divergence_max_2d;
use fdsa_core::linalg::Matrix;
use fdsa_core::solver2d::{CurlCurlConfig, Solver2d};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadrature_integrates_polynomials_exactly(
        q in 2usize..24,
        coeffs in proptest::collection::vec(-1.0f64..1.0, 1..8),
    ) {
        // any polynomial of degree <= 2Q-1 is integrated exactly
        let rule = gauss_legendre(q).unwrap();
        let deg_cap = (2 * q - 1).min(coeffs.len() - 1);
        let poly = |x: f64| -> f64 {
            coeffs[..=deg_cap]
                .iter()
                .enumerate()
                .map(|(k, c)| c * x.powi(k as i32))
                .sum()
        };
        let exact: f64 = coeffs[..=deg_cap]
            .iter()
            .enumerate()
            .map(|(k, c)| if k % 2 == 0 { 2.0 * c / (k as f64 + 1.0) } else { 0.0 })
            .sum();
        let got = rule.integrate(poly);
        prop_assert!((got - exact).abs() <= 1e-13 * (1.0 + exact.abs()));
    }

    #[test]
    fn psi_derivative_equals_phi(m in 1usize..40, x in -1.0f64..1.0) {
        let lhs = psi_deriv(m + 1, x).unwrap();
        let rhs = phi_eval(m, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn random_expansions_are_divergence_free(
        seed in any::<u64>(),
        n in 6usize..24,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = BasisConfig::new(n).unwrap();
        let u = Matrix::from_fn(n - 1, n - 1, |_, _| rng.random_range(-1.0..1.0));
        let div = divergence_max_2d(&u, cfg, 32).unwrap();
        prop_assert!(div <= 1e-11 * u.max_abs().max(1e-300));
    }

    #[test]
    fn residual_histories_are_monotone(seed in any::<u64>(), kappa in -20.0f64..20.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let solver = Solver2d::new(BasisConfig::new(n).unwrap()).unwrap();
        let f = Matrix::from_fn(n - 1, n - 1, |_, _| rng.random_range(-1.0..1.0));
        let (_, report) = solver.solve(&f, &CurlCurlConfig::new(kappa)).unwrap();
        for w in report.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }
}
