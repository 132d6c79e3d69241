use cyflab::geometry::curvature_report;
use cyflab::lattice::{omega_closedness, StencilConfig};
use cyflab::oracle::{compare, CompareTolerances, EllipticOracle};
use cyflab::{make_family, FamilySpec, FiberGrid, SolverConfig, Transform};
use num_complex::Complex64 as C;

fn points() -> Vec<C> {
    vec![C::new(0.0, 1.0), C::new(0.3, 0.8), C::new(-0.45, 2.0), C::new(0.1, 0.6)]
}

#[test]
fn pipeline_matches_closed_forms() {
    let tr = Transform::new(FiberGrid::new(1, 32).unwrap());
    let fam = make_family(FamilySpec::universal_elliptic(&points()), &tr).unwrap();
    for &s in fam.samples() {
        let p = curvature_report(&fam, &tr, s, StencilConfig::new(1e-3, false), 0.0, &SolverConfig::default()).unwrap();
        let table = compare(&p.report, &EllipticOracle::new(s).unwrap(), &CompareTolerances::default());
        assert!(table.pass(), "s = {s}: {table:?}");
        let o = EllipticOracle::new(s).unwrap();
        assert!((p.report.direct_image - o.direct_image_density()).abs() < 1e-6 * o.direct_image_density());
    }
}

#[test]
fn closed_forms_are_modular() {
    let pts: Vec<(C, C)> = points().into_iter().map(|s| (C::new(0.2, 0.1) + 0.5 * s, s)).collect();
    assert!(EllipticOracle::invariance_defect(&pts).unwrap() < 1e-12);
}

#[test]
fn family_form_is_closed() {
    let tr = Transform::new(FiberGrid::new(1, 16).unwrap());
    let fam = make_family(FamilySpec::universal_elliptic(&points()), &tr).unwrap();
    for &s in fam.samples() {
        // central differences leave an O(h²) defect
        let d = omega_closedness(&fam, &tr, s, StencilConfig::new(1e-3, false)).unwrap();
        let half = omega_closedness(&fam, &tr, s, StencilConfig::new(5e-4, false)).unwrap();
        assert!(d < 1e-5, "s = {s}: {d:e}");
        assert!(half < d / 3.0 + 1e-10, "s = {s}: {d:e} -> {half:e}");
    }
}
