use cyflab::green::{build_green_constant, k_bound, GreenOperator};
use cyflab::{CMat, FiberChart, FiberGrid, Spectral, Transform};
use num_complex::Complex64 as C;
use proptest::prelude::*;

/// `K` on the square torus with `h = 1`, from the theta-function closed form of the kernel.
const K_SQUARE: f64 = 0.2206356001526516;

fn elliptic(tau: C, size: usize, h: f64) -> GreenOperator {
    let sp = Spectral::new(Transform::new(FiberGrid::new(1, size).unwrap()), FiberChart::elliptic(tau).unwrap()).unwrap();
    build_green_constant(&sp, CMat::identity(1).scale(C::new(h, 0.0))).unwrap()
}

fn abelian(size: usize, h: &CMat) -> GreenOperator {
    let i = C::new(0.0, 1.0);
    let omega = [[C::new(0.1, 1.0), C::new(0.2, 0.0)], [C::new(0.2, 0.0), i]];
    let sp = Spectral::new(Transform::new(FiberGrid::new(2, size).unwrap()), FiberChart::abelian(omega).unwrap()).unwrap();
    build_green_constant(&sp, h.clone()).unwrap()
}

fn bump(g: &GreenOperator) -> Vec<f64> {
    let grid = *g.spectral().grid();
    (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            (2.0 * std::f64::consts::PI * x[0]).cos() + 0.3 * (4.0 * std::f64::consts::PI * (x[0] + x[1])).sin()
        })
        .collect()
}

#[test]
fn square_torus_matches_theta_closed_form() {
    let mut errs = vec![];
    for size in [16, 32, 64] {
        let g = elliptic(C::new(0.0, 1.0), size, 1.0);
        let kb = k_bound(&g, 2 * size).unwrap();
        errs.push((kb.k - K_SQUARE).abs());
        for a in &kb.argmin {
            assert!((a - 0.5).abs() < 1e-6, "argmin {:?}", kb.argmin);
        }
    }
    println!("K errors {errs:?}");
    assert!(errs.windows(2).all(|w| w[1] < w[0]));
    assert!(errs[2] < 1e-4);
}

#[test]
fn bound_is_stable_under_resolution() {
    let g = elliptic(C::new(0.3, 0.8), 32, 1.0);
    let a = k_bound(&g, 64).unwrap();
    let b = k_bound(&g, 128).unwrap();
    assert!((a.k - b.k).abs() < 1e-10, "{} vs {}", a.k, b.k);
    assert!(a.min <= a.grid_min + 1e-15);
}

#[test]
fn kernel_scales_with_the_metric() {
    for c in [0.5, 3.0] {
        let one = elliptic(C::new(0.0, 1.3), 24, 1.0);
        let scaled = elliptic(C::new(0.0, 1.3), 24, c);
        assert!((k_bound(&one, 48).unwrap().k - k_bound(&scaled, 48).unwrap().k).abs() < 1e-12);

        let h = CMat::from_rows(&[&[C::new(1.0, 0.0), C::new(0.2, 0.1)], &[C::new(0.2, -0.1), C::new(1.5, 0.0)]]);
        let a = k_bound(&abelian(8, &h), 16).unwrap().k;
        let b = k_bound(&abelian(8, &h.scale(C::new(c, 0.0))), 16).unwrap().k;
        assert!((b - a / c).abs() < 1e-12 * a.abs().max(1.0), "{b} vs {}", a / c);
    }
}

#[test]
fn abelian_kernel_identities() {
    let h = CMat::from_rows(&[&[C::new(1.2, 0.0), C::new(0.1, 0.3)], &[C::new(0.1, -0.3), C::new(0.9, 0.0)]]);
    let g = abelian(8, &h);
    assert!(g.reproducing_residual(&bump(&g)).unwrap() < 1e-11);
    assert!(g.mean_residual().unwrap() < 1e-12);
    assert!(g.symmetry_defect().unwrap() < 1e-12);
    assert!(k_bound(&g, 16).unwrap().k > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reproducing_on_random_elliptic_fibers(re in -0.5f64..0.5, im in 0.6f64..2.0, h in 0.2f64..5.0) {
        let g = elliptic(C::new(re, im), 16, h);
        prop_assert!(g.reproducing_residual(&bump(&g)).unwrap() < 1e-11);
        prop_assert!(g.mean_residual().unwrap() < 1e-12);
        let kb = k_bound(&g, 32).unwrap();
        prop_assert!(kb.k > 0.0, "K = {}", kb.k);
        prop_assert!(kb.min <= kb.grid_min + 1e-14, "{} > {}", kb.min, kb.grid_min);
    }
}
