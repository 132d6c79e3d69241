use std::f64::consts::PI;
use std::time::Instant;

use cyflab::solver::apply_operator;
use cyflab::{
    compute_eta, linearized_solve, solve_ma, CMat, Deriv, FiberChart, FiberGrid, FiberMetric, MaProblem, Normalization,
    SolverConfig, Spectral, Transform, Volume,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(size: usize) -> Spectral {
    let grid = FiberGrid::new(1, size).unwrap();
    Spectral::new(Transform::new(grid), FiberChart::elliptic(Complex64::new(0.0, 1.0)).unwrap()).unwrap()
}

fn abelian_square(size: usize) -> Spectral {
    let grid = FiberGrid::new(2, size).unwrap();
    let i = Complex64::new(0.0, 1.0);
    let z = Complex64::new(0.0, 0.0);
    Spectral::new(Transform::new(grid), FiberChart::abelian([[i, z], [z, i]]).unwrap()).unwrap()
}

fn flat(sp: &Spectral) -> FiberMetric {
    FiberMetric::constant(&CMat::identity(sp.n()), sp.nodes()).unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn trivial_problem_returns_zero() {
    let sp = square(16);
    for eps in [0.0, 0.3] {
        let p = MaProblem::new(flat(&sp), vec![0.0; sp.nodes()], eps);
        let sol = solve_ma(&sp, &p, Normalization::KeVolume, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.newton_iters, 0);
        assert!(sol.phi.iter().all(|v| *v == 0.0));
    }
}

// φ* = 0.1 cos 2πx on the square torus; Δ_flat φ* = −0.1 π² cos 2πx
fn manufactured_n1(sp: &Spectral, eps: f64) -> (Vec<f64>, MaProblem) {
    let g = sp.grid();
    let star = g.sample_real(|xi| 0.1 * (2.0 * PI * xi[0]).cos());
    let f = g.sample_real(|xi| {
        let c = (2.0 * PI * xi[0]).cos();
        (1.0 - 0.1 * PI * PI * c).ln() - eps * 0.1 * c
    });
    (star, MaProblem::new(flat(sp), vec![0.0; sp.nodes()], eps).with_extra_f(f))
}

#[test]
fn manufactured_solution_one_dimensional() {
    let sp = square(64);
    let (star, p) = manufactured_n1(&sp, 0.5);
    let sol = solve_ma(&sp, &p, Normalization::None, &SolverConfig::default(), None).unwrap();
    assert!(sup_diff(&sol.phi, &star) < 1e-10, "error {}", sup_diff(&sol.phi, &star));
    assert!(sol.residual_sup < 1e-11);
    // a different starting point reaches the same solution
    let start: Vec<f64> = star.iter().map(|v| 0.5 * v + 0.01).collect();
    let other = solve_ma(&sp, &p, Normalization::None, &SolverConfig::default(), Some(&start)).unwrap();
    assert!(sup_diff(&sol.phi, &other.phi) < 1e-9);
}

#[test]
fn manufactured_error_decays_spectrally() {
    // non-band-limited φ* = a e^{sin 2πx}; φ*_xx = a e^{sin}(4π²cos² − 4π² sin)
    let a = 0.02;
    let mut errs = vec![];
    for size in [8, 16] {
        let sp = square(size);
        let g = sp.grid();
        let star = g.sample_real(|xi| a * (2.0 * PI * xi[0]).sin().exp());
        let f = g.sample_real(|xi| {
            let (s, c) = (2.0 * PI * xi[0]).sin_cos();
            let lap = 0.25 * a * s.exp() * 4.0 * PI * PI * (c * c - s);
            (1.0 + lap).ln() - 0.5 * a * s.exp()
        });
        let p = MaProblem::new(flat(&sp), vec![0.0; sp.nodes()], 0.5).with_extra_f(f);
        let sol = solve_ma(&sp, &p, Normalization::None, &SolverConfig::default(), None).unwrap();
        errs.push(sup_diff(&sol.phi, &star));
    }
    assert!(errs[0] / errs[1] >= 100.0, "errors {errs:?}");
}

#[test]
fn manufactured_solution_two_dimensional() {
    let t0 = Instant::now();
    let sp = abelian_square(24);
    let g = sp.grid();
    let star = g.sample_real(|xi| 0.05 * (2.0 * PI * xi[0]).cos() + 0.05 * (2.0 * PI * xi[3]).cos());
    let f = g.sample_real(|xi| {
        let a = 1.0 - 0.05 * PI * PI * (2.0 * PI * xi[0]).cos();
        let b = 1.0 - 0.05 * PI * PI * (2.0 * PI * xi[3]).cos();
        (a * b).ln()
    });
    let p = MaProblem::new(flat(&sp), vec![0.0; sp.nodes()], 0.0).with_extra_f(f);
    let sol = solve_ma(&sp, &p, Normalization::ReferenceVolume, &SolverConfig::default(), None).unwrap();
    assert!(sup_diff(&sol.phi, &star) < 1e-9, "error {}", sup_diff(&sol.phi, &star));
    let vol0 = sp.volume(Volume::Flat);
    assert!((sp.volume(Volume::Metric(&sol.h)) - vol0).abs() < 1e-10);
    eprintln!("n=2 manufactured solve: {:?}, {} Newton steps", t0.elapsed(), sol.newton_iters);
}

#[test]
fn eta_for_perturbed_square_metric() {
    let sp = square(32);
    let g = sp.grid();
    let gz = g.sample_real(|xi| 1.0 + 0.2 * (2.0 * PI * xi[0]).cos());
    let m = cyflab::HermitianField::from_components(1, &[vec![gz.iter().map(|v| Complex64::new(*v, 0.0)).collect()]]);
    let metric = FiberMetric::new(m).unwrap();
    let eta = compute_eta(&metric);
    // mean of 1 + 0.2 cos is 1, so c = 0
    for (e, v) in eta.iter().zip(&gz) {
        assert!((e + v.ln()).abs() < 1e-14);
    }
    let w: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    assert!((sp.integrate(&w, Volume::Metric(&metric)) - sp.volume(Volume::Metric(&metric))).abs() < 1e-13);
}

#[test]
fn linearized_solve_on_flat_torus() {
    let sp = square(32);
    let g = sp.grid();
    let r = g.sample_real(|xi| (2.0 * PI * xi[0]).cos());
    let u = linearized_solve(&sp, &flat(&sp), 1.0, &r, &SolverConfig::default()).unwrap();
    // −Δ cos 2πx = π² cos 2πx with Δ = (∂_x² + ∂_y²)/4
    for (ui, ri) in u.iter().zip(&r) {
        assert!((ui - ri / (1.0 + PI * PI)).abs() < 1e-12);
    }
    let zero = linearized_solve(&sp, &flat(&sp), 0.0, &vec![0.0; sp.nodes()], &SolverConfig::default()).unwrap();
    assert!(zero.iter().all(|v| v.abs() < 1e-300));
    let bad = linearized_solve(&sp, &flat(&sp), 0.0, &vec![1.0; sp.nodes()], &SolverConfig::default());
    assert!(matches!(bad, Err(cyflab::Error::Solvability(_))));
}

#[test]
fn linearized_round_trip_on_curved_metric() {
    let sp = square(32);
    let g = sp.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let coef: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let hz = g.sample_real(|xi| {
        1.0 + coef[0] * (2.0 * PI * xi[0]).cos() + coef[1] * (2.0 * PI * (xi[0] + xi[1])).sin() + coef[2] * (4.0 * PI * xi[1]).cos()
    });
    let h = FiberMetric::new(cyflab::HermitianField::from_components(
        1,
        &[vec![hz.iter().map(|v| Complex64::new(*v, 0.0)).collect()]],
    ))
    .unwrap();
    let r = g.sample_real(|xi| coef[3] * (2.0 * PI * xi[1]).sin() + coef[4] * (6.0 * PI * xi[0]).cos() + coef[5]);
    for eps in [0.7, 0.0] {
        let mut rr = r.clone();
        if eps == 0.0 {
            let m = sp.integrate(&rr, Volume::Metric(&h)) / sp.volume(Volume::Metric(&h));
            rr.iter_mut().for_each(|v| *v -= m);
        }
        let u = linearized_solve(&sp, &h, eps, &rr, &SolverConfig::default()).unwrap();
        let back: Vec<f64> = apply_operator(&sp, &h, eps, &u).unwrap().iter().map(|v| -v).collect();
        assert!(sup_diff(&back, &rr) < 1e-10);
        if eps == 0.0 {
            assert!(sp.integrate(&u, Volume::Metric(&h)).abs() < 1e-13);
        }
    }
    let _ = Deriv::Z(0);
}
