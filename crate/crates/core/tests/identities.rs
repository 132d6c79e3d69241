use cyflab::random::{identity_suite, pointwise_curvature, random_forms};
use proptest::prelude::*;

#[test]
fn seeded_forms_are_reproducible() {
    assert_eq!(random_forms(7, 5, 2), random_forms(7, 5, 2));
    assert_ne!(random_forms(7, 5, 2), random_forms(8, 5, 2));
    assert_eq!(identity_suite(7, 50, 2).unwrap(), identity_suite(7, 50, 2).unwrap());
}

#[test]
fn random_forms_are_positive_on_fibers() {
    for m in random_forms(3, 50, 2) {
        let mut fiber = cyflab::CMat::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                fiber.a[i][j] = m.a[i][j];
            }
        }
        assert!(fiber.min_eigenvalue() > 0.0);
        assert!(m.hermitian_defect() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identities_hold_for_any_seed(seed in any::<u64>(), n in 1usize..=2) {
        let r = identity_suite(seed, 20, n).unwrap();
        prop_assert!(r.semmes_max < 1e-11, "semmes {}", r.semmes_max);
        prop_assert!(r.contraction_max < 1e-11, "contraction {}", r.contraction_max);
        prop_assert!(r.det_oracle_max < 1e-11, "det {}", r.det_oracle_max);
    }

    #[test]
    fn one_dimensional_curvature_is_det_over_fiber_entry(seed in any::<u64>()) {
        for m in random_forms(seed, 10, 1) {
            let c = pointwise_curvature(&m).unwrap();
            let oracle = m.det().re / m.a[0][0].re;
            prop_assert!((c - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{} vs {}", c, oracle);
        }
    }
}
