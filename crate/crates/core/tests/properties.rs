use bosecond::bogoliubov::{dispersion, quadratic_coeffs};
use bosecond::commutator::{expand_ad, from_text, to_text, verify_structure};
use bosecond::fit::power_law;
use bosecond::fock::{basis_dimension, build_b, build_basis, exp_b, number_op};
use bosecond::lattice::{shell_counts, ModeSet, Momentum};
use bosecond::linalg::orthogonality_defect;
use bosecond::potential::PotentialSpec;
use bosecond::scattering::{eta_coefficients, solve_neumann, Mesh};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mode_sets_are_sorted_and_negation_closed(m in 1i64..40) {
        let set = ModeSet::from_max_norm_sq(m);
        let counts = shell_counts(m);
        prop_assert_eq!(set.len() as u64, counts.iter().skip(1).sum::<u64>());
        for (i, p) in set.iter().enumerate() {
            prop_assert!(!p.is_zero() && p.norm_sq_int() <= m);
            prop_assert_eq!(set.get(set.neg(i)), p.neg());
        }
        prop_assert!(set.momenta().windows(2).all(|w| (w[0].norm_sq_int(), w[0].n) < (w[1].norm_sq_int(), w[1].n)));
    }

    #[test]
    fn basis_dimension_and_number_bound(shell in 1i64..=2, n_max in 1usize..=3) {
        let set = ModeSet::from_max_norm_sq(shell);
        let basis = build_basis(&set, 50, n_max).unwrap();
        prop_assert_eq!(basis.dim() as u128, basis_dimension(set.len(), n_max));
        prop_assert!(number_op(&basis).diag().iter().all(|&x| x <= n_max as f64));
    }

    #[test]
    fn generator_is_antisymmetric_and_exponential_orthogonal(
        eta in proptest::collection::vec(-0.3f64..0.3, 3),
        n in 4u64..200,
    ) {
        let set = ModeSet::from_max_norm_sq(1);
        // η must be even in p: pair entries by axis
        let e: Vec<f64> = set.iter().map(|p| eta[p.n.iter().position(|&x| x != 0).unwrap()]).collect();
        let basis = build_basis(&set, n, 3.min(n as usize)).unwrap();
        let b = build_b(&basis, &e).unwrap();
        prop_assert!(b.add(&b.transpose()).max_abs() <= 1e-15);
        let u = exp_b(&b).unwrap();
        prop_assert!(orthogonality_defect(&u) <= 1e-12);
    }

    #[test]
    fn quadratic_identities_and_bounds(kappa in 0.0f64..=0.05, beta in 0.2f64..0.8, e in 3u32..=5) {
        let spec = PotentialSpec::ball(1.0, 1.0, kappa, beta, 10u64.pow(e));
        let set = ModeSet::from_max_norm_sq(6);
        let sol = eta_coefficients(solve_neumann(&spec, 0.4, Mesh::default()).unwrap(), &set).unwrap();
        prop_assert!(sol.lambda >= 0.0);
        let c = quadratic_coeffs(&spec, &sol, &set).unwrap();
        prop_assert!(c.hyperbolic_defect() <= 1e-12);
        prop_assert!(c.tanh_defect() <= 1e-12);
        prop_assert!(c.max_identity_residual() <= 1e-12);
        prop_assert!(c.max_g_over_f <= 0.5);
        for i in 0..c.len() {
            prop_assert!(c.f[i] >= 0.5 * c.p2[i]);
            prop_assert!(c.eta[i] <= 0.0);
        }
    }

    #[test]
    fn dispersion_dominates_kinetic(n in proptest::array::uniform3(-6i32..=6), kv0 in 0.0f64..10.0) {
        let p = Momentum::new(n[0], n[1], n[2]);
        prop_assume!(!p.is_zero());
        let e = dispersion(&p, kv0);
        prop_assert!(e >= p.norm_sq());
        prop_assert!(e * e - p.norm_sq() * p.norm_sq() - 2.0 * p.norm_sq() * kv0 <= 1e-9 * e * e);
    }

    #[test]
    fn power_law_recovers_exact_data(a in -2.0f64..2.0, c in 0.01f64..100.0) {
        let xs = [1e2, 1e3, 1e4, 1e5];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(a)).collect();
        let fit = power_law(&xs, &ys).unwrap();
        prop_assert!((fit.exponent - a).abs() < 1e-10);
        prop_assert!((fit.prefactor / c - 1.0).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 5, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn expansion_text_roundtrips(n in 0usize..=4) {
        let terms = expand_ad(n).unwrap();
        prop_assert!(verify_structure(&terms, n).is_ok());
        let back = from_text(&to_text(&terms, n), n).unwrap();
        prop_assert_eq!(back, terms);
    }
}
