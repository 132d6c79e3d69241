//! `solve-fiber`, `run-family` and `green`.

use std::f64::consts::PI;
use std::path::Path;

use cyflab::geometry::{curvature_report, theorem12_check, CurvatureReport};
use cyflab::green::{build_green, k_bound, KBound};
use cyflab::models::BaseSpec;
use cyflab::solver::Diagnostics;
use cyflab::{compute_eta, make_family, solve_ma, Family, FiberGrid, FiberMetric, MaProblem, Normalization, Transform};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::report::{classify, heatmap_svg, write_csv, write_json, Check, Failure, Provenance, TOL};

pub fn transform(cfg: &RunConfig) -> Result<Transform, Failure> {
    Ok(Transform::new(FiberGrid::new(cfg.family.n, cfg.solver.grid_n).map_err(classify)?))
}

pub fn family(cfg: &RunConfig, tr: &Transform) -> Result<Family, Failure> {
    make_family(cfg.family.clone(), tr).map_err(classify)
}

fn sup(v: impl Iterator<Item = f64>) -> f64 {
    v.map(f64::abs).fold(0.0, f64::max)
}

#[derive(Debug, Serialize)]
pub struct FiberReport {
    pub provenance: Provenance,
    pub s: [f64; 2],
    pub epsilon: f64,
    pub normalization: Normalization,
    pub newton_iters: usize,
    pub residual_sup: f64,
    pub phi_sup: f64,
    /// `sup |det h − mean| / mean`.
    pub det_h_variation: f64,
    pub diagnostics: Diagnostics,
    /// Sup-norm error against the manufactured solution (modulo constants at ε = 0).
    pub manufactured_error: Option<f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn solve_fiber(cfg: &RunConfig, out: &Path) -> Result<bool, Failure> {
    let tr = transform(cfg)?;
    let fam = family(cfg, &tr)?;
    let s = cfg.fiber.s.map(|p| Complex64::new(p[0], p[1])).unwrap_or(fam.samples()[0]);
    let omega = fam.omega(&tr, s).map_err(classify)?;
    let sp = &omega.spectral;
    let eta = compute_eta(&omega.g);
    let eps = cfg.fiber.epsilon;
    let dims = 2 * cfg.family.n;
    let mut problem = MaProblem::new(omega.g.clone(), eta.clone(), eps);
    let mut star = None;
    if let Some(m) = &cfg.fiber.manufactured {
        let phi = tr.grid().sample_real(|xi| {
            let arg: f64 = (0..dims).map(|d| m.k[d] as f64 * xi[d]).sum();
            m.amplitude * (2.0 * PI * arg).cos()
        });
        let hess = sp.ddbar_real(&phi).map_err(classify)?;
        let h = FiberMetric::new(omega.g.g().add(&hess))
            .map_err(|e| Failure::Config(format!("manufactured solution leaves the positive cone: {e}")))?;
        let f: Vec<f64> = (0..phi.len())
            .map(|i| h.det()[i].ln() - omega.g.det()[i].ln() - eps * phi[i] - eta[i])
            .collect();
        problem = problem.with_extra_f(f);
        star = Some(phi);
    }
    let normalization = if eps > 0.0 { Normalization::None } else { Normalization::KeVolume };
    let sol = solve_ma(sp, &problem, normalization, &cfg.solver.solver_config(), None)
        .map_err(|e| Failure::Numerical(format!("fiber solve at s = {s}: {e}")))?;

    let det = sol.h.det();
    let mean = det.iter().sum::<f64>() / det.len() as f64;
    let manufactured_error = star.as_ref().map(|phi| {
        let d: Vec<f64> = sol.phi.iter().zip(phi).map(|(a, b)| a - b).collect();
        let shift = if eps > 0.0 { 0.0 } else { d.iter().sum::<f64>() / d.len() as f64 };
        sup(d.iter().map(|v| v - shift))
    });
    let mut checks = vec![];
    if let (Some(err), Some(m)) = (manufactured_error, &cfg.fiber.manufactured) {
        checks.push(Check::below("manufactured_error", err, m.tolerance));
    }
    let pass = checks.iter().all(|c| c.pass);
    let report = FiberReport {
        provenance: Provenance::new(cfg),
        s: [s.re, s.im],
        epsilon: eps,
        normalization,
        newton_iters: sol.newton_iters,
        residual_sup: sol.residual_sup,
        phi_sup: sup(sol.phi.iter().copied()),
        det_h_variation: sup(det.iter().map(|d| d - mean)) / mean,
        diagnostics: sol.diagnostics.clone(),
        manufactured_error,
        checks,
        pass,
    };
    if cfg.outputs.formats.contains(&Format::Json) {
        write_json(&out.join("fiber.json"), &report)?;
    }
    if cfg.outputs.formats.contains(&Format::Csv) {
        let mut header: Vec<String> = (0..dims).map(|d| format!("xi_{d}")).collect();
        header.push("phi".into());
        let rows: Vec<Vec<f64>> = (0..sol.phi.len())
            .map(|i| {
                let mut r = tr.grid().coords(i)[..dims].to_vec();
                r.push(sol.phi[i]);
                r
            })
            .collect();
        write_csv(&out.join("phi.csv"), &header, &rows)?;
    }
    for c in &report.checks {
        println!("{}", c.line());
    }
    println!(
        "s = {s}: {} Newton steps, residual {:.3e}, sup phi {:.3e}",
        report.newton_iters, report.residual_sup, report.phi_sup
    );
    Ok(pass)
}

/// One row of `run-family`.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyRow {
    pub report: CurvatureReport,
    #[serde(rename = "K")]
    pub k: f64,
    pub combined_min_eig: f64,
    pub pointwise_margin: f64,
}

pub const FAMILY_COLUMNS: [&str; 11] = [
    "s_re",
    "s_im",
    "direct_image",
    "lower_bound",
    "theta_E",
    "wp",
    "c_min",
    "c_max",
    "pde_residual_sup",
    "K",
    "combined_min_eig",
];

impl FamilyRow {
    fn csv(&self) -> Vec<f64> {
        let r = &self.report;
        vec![
            r.s[0],
            r.s[1],
            r.direct_image,
            r.lower_bound,
            r.theta_e,
            r.wp,
            r.c_min,
            r.c_max,
            r.pde_residual_sup,
            self.k,
            self.combined_min_eig,
        ]
    }
}

#[derive(Debug, Serialize)]
pub struct SampleFailure {
    pub s: [f64; 2],
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct FamilyReport {
    pub provenance: Provenance,
    pub rows: Vec<FamilyRow>,
    pub failures: Vec<SampleFailure>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Curvature report, Green bound and positivity margins at `s` (ε = 0).
pub fn family_row(cfg: &RunConfig, fam: &Family, tr: &Transform, s: Complex64) -> cyflab::Result<FamilyRow> {
    let p = curvature_report(fam, tr, s, cfg.stencil, 0.0, &cfg.solver.solver_config())?;
    let green = build_green(&p.rho.spectral, &p.rho.fiber)?;
    let kb = k_bound(&green, 2 * cfg.solver.grid_n)?;
    let check = theorem12_check(&p.rho, p.report.wp, kb.k);
    Ok(FamilyRow {
        report: p.report,
        k: kb.k,
        combined_min_eig: check.combined_min_eig,
        pointwise_margin: check.pointwise_margin,
    })
}

pub fn positivity_checks(rows: &[FamilyRow]) -> Vec<Check> {
    let min = |f: &dyn Fn(&FamilyRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    vec![
        Check::at_least("min(direct_image - lower_bound)", min(&|r| r.report.direct_image - r.report.lower_bound), -TOL.positivity),
        Check::at_least("min combined_min_eig", min(&|r| r.combined_min_eig), -TOL.positivity),
        Check::at_least("min pointwise_margin", min(&|r| r.pointwise_margin), -TOL.positivity),
    ]
}

pub fn run_family(cfg: &RunConfig, out: &Path, plot: bool) -> Result<bool, Failure> {
    let tr = transform(cfg)?;
    let fam = family(cfg, &tr)?;
    let samples = fam.samples().to_vec();
    let results: Vec<cyflab::Result<FamilyRow>> = samples.par_iter().map(|&s| family_row(cfg, &fam, &tr, s)).collect();
    let mut rows = vec![];
    let mut failures = vec![];
    for (s, r) in samples.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(SampleFailure { s: [s.re, s.im], error: e.to_string() }),
        }
    }
    let checks = positivity_checks(&rows);
    let pass = failures.is_empty() && checks.iter().all(|c| c.pass);
    let report = FamilyReport { provenance: Provenance::new(cfg), rows, failures, checks, pass };

    if cfg.outputs.formats.contains(&Format::Csv) {
        let header: Vec<String> = FAMILY_COLUMNS.iter().map(|c| c.to_string()).collect();
        let data: Vec<Vec<f64>> = report.rows.iter().map(FamilyRow::csv).collect();
        write_csv(&out.join("family.csv"), &header, &data)?;
    }
    if cfg.outputs.formats.contains(&Format::Json) {
        write_json(&out.join("family.json"), &report)?;
    }
    if (plot || cfg.outputs.formats.contains(&Format::Svg)) && !report.rows.is_empty() {
        let pts: Vec<[f64; 2]> = report.rows.iter().map(|r| r.report.s).collect();
        let vals: Vec<f64> = report.rows.iter().map(|r| r.report.c_min).collect();
        let cell = match &cfg.family.base {
            BaseSpec::Rectangle(r) => [
                (r.re[1] - r.re[0]) / (r.nx.max(2) - 1) as f64,
                (r.im[1] - r.im[0]) / (r.ny.max(2) - 1) as f64,
            ],
            BaseSpec::Samples(_) => [0.1, 0.1],
        };
        let cell = cell.map(|c| if c > 0.0 { c } else { 0.1 });
        let svg = heatmap_svg("min over the fiber of c(rho)", &pts, &vals, cell);
        let path = out.join("c_rho.svg");
        std::fs::write(&path, svg).map_err(|e| crate::report::io_failure(&path, e))?;
    }
    for r in &report.rows {
        let rr = &r.report;
        println!(
            "s = {:+.4}{:+.4}i  direct {:.6e}  lower {:.6e}  c [{:.6e}, {:.6e}]  K {:.4e}  pde {:.2e}",
            rr.s[0], rr.s[1], rr.direct_image, rr.lower_bound, rr.c_min, rr.c_max, r.k, rr.pde_residual_sup
        );
    }
    for c in &report.checks {
        println!("{}", c.line());
    }
    if let Some(f) = report.failures.first() {
        return Err(Failure::Numerical(format!(
            "{} of {} samples failed; first at s = {:?}: {}",
            report.failures.len(),
            samples.len(),
            f.s,
            f.error
        )));
    }
    Ok(pass)
}

#[derive(Debug, Serialize)]
pub struct GreenRow {
    pub s: [f64; 2],
    pub bound: KBound,
    /// Skipped (null) above [`REPRODUCING_MAX_NODES`] fiber nodes.
    pub reproducing_residual: Option<f64>,
    pub mean_residual: f64,
    pub symmetry_defect: f64,
}

#[derive(Debug, Serialize)]
pub struct GreenReport {
    pub provenance: Provenance,
    pub rows: Vec<GreenRow>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// The reproducing check is a direct quadrature, quadratic in the node count.
pub const REPRODUCING_MAX_NODES: usize = 20736;

/// `f = 0.3 cos 2πξ₀ + sin 2π(ξ₀ + 2ξ_last)`.
pub fn test_function(tr: &Transform) -> Vec<f64> {
    let last = tr.grid().dims() - 1;
    tr.grid().sample_real(|xi| 0.3 * (2.0 * PI * xi[0]).cos() + (2.0 * PI * (xi[0] + 2.0 * xi[last])).sin())
}

pub fn green_row(cfg: &RunConfig, fam: &Family, tr: &Transform, s: Complex64) -> cyflab::Result<GreenRow> {
    let p = curvature_report(fam, tr, s, cfg.stencil, 0.0, &cfg.solver.solver_config())?;
    let g = build_green(&p.rho.spectral, &p.rho.fiber)?;
    let reproducing_residual = if tr.grid().len() <= REPRODUCING_MAX_NODES {
        Some(g.reproducing_residual(&test_function(tr))?)
    } else {
        None
    };
    Ok(GreenRow {
        s: [s.re, s.im],
        bound: k_bound(&g, 2 * cfg.solver.grid_n)?,
        reproducing_residual,
        mean_residual: g.mean_residual()?,
        symmetry_defect: g.symmetry_defect()?,
    })
}

pub fn green_checks(rows: &[GreenRow]) -> Vec<Check> {
    let mean = rows.iter().map(|r| r.mean_residual).fold(0.0, f64::max);
    let mut checks = vec![Check::below("kernel_mean", mean, TOL.kernel_mean)];
    let repro: Vec<f64> = rows.iter().filter_map(|r| r.reproducing_residual).collect();
    if !repro.is_empty() {
        checks.insert(0, Check::below("reproducing_residual", repro.iter().copied().fold(0.0, f64::max), TOL.reproducing));
    }
    checks
}

pub fn green(cfg: &RunConfig) -> Result<bool, Failure> {
    let tr = transform(cfg)?;
    let fam = family(cfg, &tr)?;
    let rows: Vec<GreenRow> = fam
        .samples()
        .par_iter()
        .map(|&s| green_row(cfg, &fam, &tr, s))
        .collect::<cyflab::Result<_>>()
        .map_err(classify)?;
    let checks = green_checks(&rows);
    let pass = checks.iter().all(|c| c.pass);
    let report = GreenReport { provenance: Provenance::new(cfg), rows, checks, pass };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Numerical(e.to_string()))?;
    println!("{text}");
    if cfg.outputs.formats.contains(&Format::Json) {
        write_json(&cfg.outputs.dir.join("green.json"), &report)?;
    }
    Ok(pass)
}
