//! Named verification suites for `cyflab verify`.

use cyflab::continuation::{epsilon_continuation, EpsilonPath};
use cyflab::derivatives::vphi_cross_check;
use cyflab::geometry::curvature_report;
use cyflab::green::theorem12_assemble;
use cyflab::lattice::{volume_drift, StencilConfig};
use cyflab::oracle::{compare, CompareTolerances, EllipticOracle, ErrorTable};
use cyflab::random::{identity_suite, pointwise_curvature, random_forms, IdentityReport};
use cyflab::{make_family, FamilyKind, FamilySpec};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{family, family_row, green_checks, green_row, positivity_checks, transform};
use crate::config::{Format, RunConfig, SUITES};
use crate::report::{classify, write_json, Check, Failure, Provenance, TOL};

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub provenance: Provenance,
    pub suite: String,
    pub checks: Vec<Check>,
    pub table: Value,
    pub pass: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn verify(cfg: &RunConfig, suite: &str) -> Result<bool, Failure> {
    let (checks, table) = match suite {
        "identities" => identities(cfg),
        "elliptic" => elliptic(cfg)?,
        "product" => product(cfg)?,
        "epsilon" => epsilon(cfg)?,
        "green" => green(cfg)?,
        "positivity" => positivity(cfg)?,
        "convergence" => convergence(cfg)?,
        other => return Err(Failure::Config(format!("unknown suite {other:?}; known: {}", SUITES.join(", ")))),
    };
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    let report = SuiteReport { provenance: Provenance::new(cfg), suite: suite.to_string(), checks, table, pass };
    for c in &report.checks {
        println!("[{suite}] {}", c.line());
    }
    if cfg.outputs.formats.contains(&Format::Json) {
        write_json(&cfg.outputs.dir.join(format!("verify_{suite}.json")), &report)?;
    }
    Ok(pass)
}

fn samples(cfg: &RunConfig) -> Vec<Complex64> {
    cfg.family.samples()
}

fn identities(cfg: &RunConfig) -> (Vec<Check>, Value) {
    let mut checks = vec![];
    let mut reports: Vec<IdentityReport> = vec![];
    for n in [1, 2] {
        match identity_suite(cfg.seed, 100, n) {
            Ok(r) => {
                checks.push(Check::below(format!("semmes n={n}"), r.semmes_max, TOL.identity));
                checks.push(Check::below(format!("contraction n={n}"), r.contraction_max, TOL.identity));
                checks.push(Check::below(format!("determinant n={n}"), r.det_oracle_max, TOL.identity));
                reports.push(r);
            }
            Err(e) => checks.push(Check::below(format!("suite n={n}: {e}"), f64::INFINITY, TOL.identity)),
        }
    }
    // c = det / τ_zz̄ for n = 1
    let det = random_forms(cfg.seed, 100, 1)
        .iter()
        .map(|m| pointwise_curvature(m).map(|c| (c - m.det().re / m.a[0][0].re).abs()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    checks.push(Check::below("det/tau_zz oracle n=1", det, TOL.determinant));
    (checks, to_value(&reports))
}

fn elliptic(cfg: &RunConfig) -> Result<(Vec<Check>, Value), Failure> {
    let mut c = cfg.clone();
    c.family = FamilySpec::universal_elliptic(&samples(cfg)).with_base(cfg.family.base.clone());
    c.family.n = 1;
    let tr = transform(&c)?;
    let fam = family(&c, &tr)?;
    let tol = CompareTolerances::default();
    let tables: Vec<ErrorTable> = fam
        .samples()
        .par_iter()
        .map(|&s| {
            let p = curvature_report(&fam, &tr, s, c.stencil, 0.0, &c.solver.solver_config())?;
            Ok(compare(&p.report, &EllipticOracle::new(s)?, &tol))
        })
        .collect::<cyflab::Result<_>>()
        .map_err(classify)?;
    let mut checks = vec![];
    for row in ["geodesic_curvature", "dbarv_norm2", "theta_e", "phi", "wp", "kodaira_spencer_norm", "direct_image"] {
        let worst = tables.iter().filter_map(|t| t.row(row)).max_by(|a, b| {
            let ea = if a.relative { a.rel_err } else { a.abs_err };
            let eb = if b.relative { b.rel_err } else { b.abs_err };
            ea.total_cmp(&eb)
        });
        if let Some(r) = worst {
            let kind = if r.relative { "relative" } else { "absolute" };
            checks.push(Check::at_most(format!("{row} ({kind})"), if r.relative { r.rel_err } else { r.abs_err }, r.tol));
        }
    }
    let pts: Vec<(Complex64, Complex64)> =
        fam.samples().iter().map(|&s| (Complex64::new(0.31, 0.17) + 0.4 * s, s)).collect();
    let inv = EllipticOracle::invariance_defect(&pts).map_err(classify)?;
    checks.push(Check::below("oracle invariance", inv, 1e-12));
    Ok((checks, to_value(&tables)))
}

fn product(cfg: &RunConfig) -> Result<(Vec<Check>, Value), Failure> {
    let mut c = cfg.clone();
    if cfg.family.kind != FamilyKind::Product {
        c.family = FamilySpec::product(Complex64::new(0.0, 1.0), 1.0, &samples(cfg)).with_base(cfg.family.base.clone());
    }
    let tr = transform(&c)?;
    let fam = family(&c, &tr)?;
    let reports: Vec<_> = fam
        .samples()
        .par_iter()
        .map(|&s| curvature_report(&fam, &tr, s, c.stencil, 0.0, &c.solver.solver_config()).map(|p| p.report))
        .collect::<cyflab::Result<_>>()
        .map_err(classify)?;
    let worst = |f: &dyn Fn(&cyflab::geometry::CurvatureReport) -> f64| reports.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
    let mut checks = vec![
        Check::at_most("theta_E", worst(&|r| r.theta_e), TOL.flat_curvature),
        Check::at_most("wp", worst(&|r| r.wp), TOL.flat_curvature),
        Check::at_most("kodaira_spencer_norm", worst(&|r| r.kodaira_spencer_norm), TOL.flat_curvature),
        Check::at_most("dbar v", worst(&|r| r.dbarv_max), TOL.flat_curvature),
    ];
    if !fam.has_potential() {
        checks.push(Check::at_most("phi", worst(&|r| r.phi_sup), 1e-10));
    }
    Ok((checks, to_value(&reports)))
}

#[derive(Serialize)]
struct EpsilonTable {
    path: EpsilonPath,
    /// `(ε, |∫ (v φ_ε) ρ_εⁿ|)`.
    transport_integrals: Vec<(f64, f64)>,
}

fn epsilon(cfg: &RunConfig) -> Result<(Vec<Check>, Value), Failure> {
    let tr = transform(cfg)?;
    let fam = family(cfg, &tr)?;
    let s = fam.samples()[0];
    let schedule = &cfg.continuation.eps_schedule;
    let solver = cfg.solver.solver_config();
    let path = epsilon_continuation(&fam, &tr, s, schedule, &solver).map_err(classify)?;
    if let Some(f) = &path.failure {
        return Err(Failure::Numerical(format!("continuation stopped: {f}")));
    }
    let transport: Vec<(f64, f64)> = schedule
        .par_iter()
        .map(|&e| vphi_cross_check(&fam, &tr, s, e, cfg.stencil, &solver).map(|v| (e, v.integral)))
        .collect::<cyflab::Result<_>>()
        .map_err(classify)?;
    let mut checks = vec![];
    let moving = path.rows.iter().any(|r| r.epsilon > 0.0 && r.sup_diff > 1e-12);
    if moving {
        // leading exponent ≥ 1 within three standard errors
        checks.push(Check::at_least("order + 3 stderr", path.order + 3.0 * path.order_stderr, 1.0));
    } else {
        checks.push(Check::at_most("sup |phi_eps - phi_0| (static path)", path.rows.iter().map(|r| r.sup_diff).fold(0.0, f64::max), 1e-12));
    }
    let worst = transport.iter().map(|t| t.1).fold(0.0, f64::max);
    checks.push(Check::below("transport integral", worst, TOL.transport_integral));
    Ok((checks, to_value(&EpsilonTable { path, transport_integrals: transport })))
}

fn green(cfg: &RunConfig) -> Result<(Vec<Check>, Value), Failure> {
    let tr = transform(cfg)?;
    let fam = family(cfg, &tr)?;
    let row = green_row(cfg, &fam, &tr, fam.samples()[0]).map_err(classify)?;
    let mut checks = green_checks(std::slice::from_ref(&row));
    checks.push(Check::below("kernel symmetry", row.symmetry_defect, 1e-12));
    Ok((checks, to_value(&row)))
}

fn positivity(cfg: &RunConfig) -> Result<(Vec<Check>, Value), Failure> {
    let tr = transform(cfg)?;
    let fam = family(cfg, &tr)?;
    let solver = cfg.solver.solver_config();
    let t12 = theorem12_assemble(&fam, &tr, fam.samples(), cfg.stencil, &solver, TOL.positivity).map_err(classify)?;
    let rows = fam
        .samples()
        .par_iter()
        .map(|&s| family_row(cfg, &fam, &tr, s))
        .collect::<cyflab::Result<Vec<_>>>()
        .map_err(classify)?;
    let mut checks = positivity_checks(&rows);
    let failing = t12.iter().filter(|r| !r.pass).count();
    checks.push(Check::at_most("samples failing the Green positivity check", failing as f64, 0.0));
    Ok((checks, json!({ "rows": to_value(&rows), "theorem12": to_value(&t12) })))
}

#[derive(Serialize)]
struct ConvergenceRow {
    s: [f64; 2],
    pde_residual: f64,
    pde_residual_half_step: f64,
    volume_drift: f64,
}

fn convergence(cfg: &RunConfig) -> Result<(Vec<Check>, Value), Failure> {
    let tr = transform(cfg)?;
    let fam = family(cfg, &tr)?;
    let solver = cfg.solver.solver_config();
    let h = cfg.stencil.h_s;
    let half = StencilConfig { h_s: h / 2.0, ..cfg.stencil };
    let rows: Vec<ConvergenceRow> = fam
        .samples()
        .par_iter()
        .map(|&s| {
            let a = curvature_report(&fam, &tr, s, cfg.stencil, 0.0, &solver)?;
            let b = curvature_report(&fam, &tr, s, half, 0.0, &solver)?;
            Ok(ConvergenceRow {
                s: [s.re, s.im],
                pde_residual: a.report.pde_residual_sup,
                pde_residual_half_step: b.report.pde_residual_sup,
                volume_drift: volume_drift(&fam, &tr, s, cfg.stencil)?,
            })
        })
        .collect::<cyflab::Result<_>>()
        .map_err(classify)?;
    let sup_a = rows.iter().map(|r| r.pde_residual).fold(0.0, f64::max);
    let sup_b = rows.iter().map(|r| r.pde_residual_half_step).fold(0.0, f64::max);
    let mut checks = vec![Check::below("pde_residual_sup", sup_a, TOL.pde_residual)];
    // exact families sit at roundoff; there is no truncation error left to halve
    if sup_b > 1e-9 {
        checks.push(Check::at_least("pde_residual halving ratio", sup_a / sup_b, TOL.halving_ratio));
    }
    let drift = rows.iter().map(|r| r.volume_drift).fold(0.0, f64::max);
    checks.push(Check::below("volume drift", drift, 10.0 * h * h));
    Ok((checks, to_value(&rows)))
}

/// Runs `make_family` only to surface configuration errors before any work starts.
pub fn preflight(cfg: &RunConfig) -> Result<(), Failure> {
    let tr = transform(cfg)?;
    make_family(cfg.family.clone(), &tr).map(|_| ()).map_err(classify)
}
