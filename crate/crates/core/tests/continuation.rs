use cyflab::continuation::{epsilon_continuation, fit_order, loglog_slope, validate_schedule};
use cyflab::{make_family, FamilySpec, FiberGrid, PotentialTerm, SolverConfig, Transform};
use num_complex::Complex64 as C;
use proptest::prelude::*;

#[test]
fn schedules_must_decrease_strictly() {
    assert!(validate_schedule(&[1.0, 0.3, 0.0]).is_ok());
    assert!(validate_schedule(&[0.5]).is_ok());
    for bad in [&[][..], &[1.0, 1.0], &[0.1, 0.3], &[1.0, -0.1], &[f64::NAN, 0.0], &[f64::INFINITY, 0.0]] {
        assert!(validate_schedule(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn loglog_slope_of_a_power_law() {
    let pts: Vec<(f64, f64)> = [1.0, 0.5, 0.1, 0.01].iter().map(|&x| (x, 3.0 * x * x)).collect();
    assert!((loglog_slope(&pts) - 2.0).abs() < 1e-12);
    assert!(loglog_slope(&[(1.0, 1.0)]).is_nan());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn profiled_fit_recovers_the_leading_exponent(p in 0.3f64..3.0, c1 in -0.5f64..0.5, c2 in -0.3f64..0.3) {
        let xs: [f64; 6] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003];
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, x.powf(p) * (1.0 + c1 * x + c2 * x * x))).collect();
        let fit = fit_order(&pts, 2);
        prop_assert!((fit.order - p).abs() < 1e-6, "{} vs {}", fit.order, p);
    }

    #[test]
    fn noisy_first_order_data_stays_near_one(seed in 0u64..1000) {
        let xs: [f64; 6] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003];
        let noise = |i: usize| 1.0 + 1e-4 * (((seed as usize * 7 + i * 13) % 17) as f64 / 8.0 - 1.0);
        let pts: Vec<(f64, f64)> = xs.iter().enumerate().map(|(i, &x)| (x, 0.4 * x * (1.0 - 0.2 * x + 0.5 * x * x) * noise(i))).collect();
        let fit = fit_order(&pts, 2);
        prop_assert!((fit.order - 1.0).abs() < 0.01, "{}", fit.order);
    }
}

#[test]
fn path_on_a_perturbed_fiber_is_first_order() {
    let tr = Transform::new(FiberGrid::new(1, 32).unwrap());
    let terms = PotentialTerm::cosine(&[1, 0], &[(0, 0, C::new(0.05, 0.0))]);
    let s = C::new(0.0, 1.0);
    let fam = make_family(FamilySpec::universal_elliptic(&[s]).with_potential(terms), &tr).unwrap();
    let schedule = [1.0, 0.3, 0.1, 0.03, 0.01, 0.0];
    let path = epsilon_continuation(&fam, &tr, s, &schedule, &SolverConfig::default()).unwrap();
    assert!(path.failure.is_none());
    assert_eq!(path.rows.len(), schedule.len());
    assert!(path.rows.last().unwrap().sup_diff < 1e-14);
    assert!((path.order - 1.0).abs() < 3.0 * path.order_stderr + 1e-3, "order {} ± {}", path.order, path.order_stderr);
    // the KE integral is O(ε) and vanishes at the end of the path
    assert!(path.rows.last().unwrap().ke_integral < 1e-12);
    for r in path.rows.iter().filter(|r| r.epsilon > 0.0) {
        assert!(r.ke_integral <= path.c_fit * r.epsilon * (1.0 + 1e-12));
    }
}
