//! Shared report pieces and file writers.

use std::fs;
use std::path::Path;

use cyflab::lattice::StencilConfig;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, SolverSection};

/// Why a command stopped short of an assertion verdict.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

/// Structural errors come from the configuration; everything else is numerical.
pub fn classify(e: cyflab::Error) -> Failure {
    use cyflab::Error::*;
    match e {
        InvalidFamily(_) | InvalidArgument(_) | InvalidGrid(_) | InvalidChart(_) | Stencil(_) => {
            Failure::Config(e.to_string())
        }
        _ => Failure::Numerical(e.to_string()),
    }
}

pub fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(format!("writing {}: {e}", path.display()))
}

/// Assertion tolerances applied by the commands and suites.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    pub positivity: f64,
    pub pde_residual: f64,
    pub halving_ratio: f64,
    pub identity: f64,
    pub determinant: f64,
    pub transport_integral: f64,
    pub flat_curvature: f64,
    pub reproducing: f64,
    pub kernel_mean: f64,
}

pub const TOL: Tolerances = Tolerances {
    positivity: 1e-6,
    pde_residual: 5e-5,
    halving_ratio: 3.0,
    identity: 1e-11,
    determinant: 1e-12,
    transport_integral: 1e-8,
    flat_curvature: 1e-8,
    reproducing: 1e-9,
    kernel_mean: 1e-12,
};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub schema: u32,
    pub config_sha256: String,
    pub n: usize,
    pub grid_n: usize,
    pub stencil: StencilConfig,
    pub solver: SolverSection,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Direct image and lower bound are densities against `i ds∧ds̄`, fiber volumes against `ωⁿ`.
    pub direct_image_convention: &'static str,
    pub direct_image_constant: f64,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            schema: cfg.schema,
            config_sha256: cfg.hash(),
            n: cfg.family.n,
            grid_n: cfg.solver.grid_n,
            stencil: cfg.stencil,
            solver: cfg.solver.clone(),
            seed: cfg.seed,
            tolerances: TOL,
            direct_image_convention: "density of p_*(rho^{n+1}) against i ds^ds-bar",
            direct_image_constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, relation: "<", pass: value < bound }
    }

    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, relation: "<=", pass: value <= bound }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, relation: ">=", pass: value >= bound }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6e} {} {:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.relation,
            self.bound
        )
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

/// Blue-white-red ramp on `t ∈ [0, 1]`.
fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (40.0 + 215.0 * u, 80.0 + 175.0 * u, 200.0 + 55.0 * u)
    } else {
        let u = (t - 0.5) / 0.5;
        (255.0, 255.0 - 175.0 * u, 255.0 - 215.0 * u)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Heatmap of `values` at base points `s`. Cells are `cell` wide in base units.
pub fn heatmap_svg(title: &str, points: &[[f64; 2]], values: &[f64], cell: [f64; 2]) -> String {
    let px = 48.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0] - cell[0] / 2.0);
        x1 = x1.max(p[0] + cell[0] / 2.0);
        y0 = y0.min(p[1] - cell[1] / 2.0);
        y1 = y1.max(p[1] + cell[1] / 2.0);
    }
    let sx = px / cell[0];
    let sy = px / cell[1];
    let width = ((x1 - x0) * sx).ceil() + 160.0;
    let height = ((y1 - y0) * sy).ceil() + 60.0;
    let lo = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"10\" y=\"18\" font-size=\"13\">{title}</text>\n"
    );
    for (p, v) in points.iter().zip(values) {
        let x = 10.0 + (p[0] - cell[0] / 2.0 - x0) * sx;
        // Im s grows upwards
        let y = 30.0 + (y1 - p[1] - cell[1] / 2.0) * sy;
        out += &format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{px:.1}\" height=\"{px:.1}\" fill=\"{}\" stroke=\"#888\"><title>s = {:.4}{:+.4}i: {v:.6e}</title></rect>\n",
            ramp((v - lo) / span),
            p[0],
            p[1]
        );
    }
    let lx = width - 140.0;
    out += &format!(
        "<text x=\"{lx}\" y=\"44\">max {hi:.4e}</text>\n<text x=\"{lx}\" y=\"{}\">min {lo:.4e}</text>\n",
        height - 20.0
    );
    for i in 0..10 {
        let y = 50.0 + i as f64 * (height - 90.0) / 10.0;
        out += &format!(
            "<rect x=\"{lx}\" y=\"{y:.1}\" width=\"16\" height=\"{:.1}\" fill=\"{}\"/>\n",
            (height - 90.0) / 10.0 + 0.5,
            ramp(1.0 - i as f64 / 9.0)
        );
    }
    out += "</svg>\n";
    out
}
