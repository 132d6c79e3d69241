//! Closed forms for the universal elliptic family `X_s = C / (Z + s Z)` with its invariant form
//! `ĥ = i∂∂̄(−log Im s + (Im z)²/Im s)` written in admissible coordinates `(z, s)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::CMat;
use crate::geometry::CurvatureReport;
use crate::grid::FiberGrid;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticOracle {
    pub s: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleQuantity {
    HZzbar,
    HSzbar,
    HSsbar,
    GeodesicCurvature,
    ThetaE,
    Lift,
    DbarV,
    DbarVNorm2,
    DirectImageDensity,
}

impl EllipticOracle {
    pub fn new(s: Complex64) -> Result<Self> {
        if !(s.im > 0.0) || !s.re.is_finite() {
            return Err(Error::InvalidArgument(format!("Im s must be positive, got s = {s}")));
        }
        Ok(Self { s })
    }

    fn im(&self) -> f64 {
        self.s.im
    }

    /// `z = x + s y` at a grid node.
    pub fn z(&self, xi: &[f64; 4]) -> Complex64 {
        xi[0] + self.s * xi[1]
    }

    /// `(z − z̄)/(s − s̄)`, the lift coefficient in admissible coordinates.
    pub fn lift(&self, z: Complex64) -> Complex64 {
        (z - z.conj()) / (self.s - self.s.conj())
    }

    /// Component matrix of `ĥ` at `z`, fiber index first: `[[h_zz̄, h_zs̄], [h_sz̄, h_ss̄]]`.
    pub fn h_matrix(&self, z: Complex64) -> CMat {
        let t = self.im();
        let a = self.lift(z);
        let mut m = CMat::zeros(2);
        m.a[0][0] = Complex64::new(1.0 / t, 0.0);
        m.a[1][0] = -a / t;
        m.a[0][1] = -a.conj() / t;
        m.a[1][1] = 1.0 / (t * t) + a * a.conj() / t;
        m
    }

    pub fn geodesic_curvature(&self) -> f64 {
        1.0 / (self.im() * self.im())
    }

    pub fn theta_e(&self) -> f64 {
        1.0 / (self.s - self.s.conj()).norm_sqr()
    }

    /// `A^z_z̄ = −1/(s − s̄)`.
    pub fn dbar_v(&self) -> Complex64 {
        -1.0 / (self.s - self.s.conj())
    }

    pub fn dbar_v_norm2(&self) -> f64 {
        self.dbar_v().norm_sqr()
    }

    /// Density of `p_* ρ²` against `i ds∧ds̄`.
    pub fn direct_image_density(&self) -> f64 {
        self.geodesic_curvature()
    }

    /// The quantity on every node of `grid` (constants are broadcast).
    pub fn evaluate(&self, q: OracleQuantity, grid: &FiberGrid) -> Result<Vec<Complex64>> {
        if grid.n() != 1 {
            return Err(Error::InvalidGrid("the elliptic oracle lives on n = 1 grids".into()));
        }
        let real = |v: f64| Complex64::new(v, 0.0);
        Ok(grid.sample(|xi| {
            let z = self.z(xi);
            match q {
                OracleQuantity::HZzbar => self.h_matrix(z).a[0][0],
                OracleQuantity::HSzbar => self.h_matrix(z).a[1][0],
                OracleQuantity::HSsbar => self.h_matrix(z).a[1][1],
                OracleQuantity::GeodesicCurvature => real(self.geodesic_curvature()),
                OracleQuantity::ThetaE => real(self.theta_e()),
                OracleQuantity::Lift => self.lift(z),
                OracleQuantity::DbarV => self.dbar_v(),
                OracleQuantity::DbarVNorm2 => real(self.dbar_v_norm2()),
                OracleQuantity::DirectImageDensity => real(self.direct_image_density()),
            }
        }))
    }

    /// `sup |F* ĥ − ĥ|` over `points` for the generators `(z, s) ↦ (z + 1, s)`, `(z + s, s)`,
    /// `(z, s + 1)` and `(z/s, −1/s)`.
    pub fn invariance_defect(points: &[(Complex64, Complex64)]) -> Result<f64> {
        type Map = fn(Complex64, Complex64) -> (Complex64, Complex64, [[Complex64; 2]; 2]);
        // image point and Jacobian J[i][k] = ∂w^i/∂u^k, coordinates ordered (z, s)
        let maps: [Map; 4] = [
            |z, s| (z + 1.0, s, [[ONE, ZERO], [ZERO, ONE]]),
            |z, s| (z + s, s, [[ONE, ONE], [ZERO, ONE]]),
            |z, s| (z, s + 1.0, [[ONE, ZERO], [ZERO, ONE]]),
            |z, s| (z / s, -1.0 / s, [[1.0 / s, -z / (s * s)], [ZERO, 1.0 / (s * s)]]),
        ];
        let mut worst: f64 = 0.0;
        for &(z, s) in points {
            let here = Self::new(s)?.h_matrix(z);
            for f in maps {
                let (w, t, j) = f(z, s);
                let there = Self::new(t)?.h_matrix(w);
                for k in 0..2 {
                    for l in 0..2 {
                        let mut v = Complex64::new(0.0, 0.0);
                        for a in 0..2 {
                            for b in 0..2 {
                                v += j[a][k] * j[b][l].conj() * there.a[a][b];
                            }
                        }
                        worst = worst.max((v - here.a[k][l]).norm());
                    }
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareTolerances {
    pub geodesic_curvature: f64,
    pub dbarv_norm2: f64,
    pub theta_e: f64,
    pub phi: f64,
    pub wp: f64,
    pub kodaira_spencer: f64,
    pub direct_image: f64,
}

impl Default for CompareTolerances {
    fn default() -> Self {
        Self {
            geodesic_curvature: 1e-8,
            dbarv_norm2: 1e-8,
            theta_e: 1e-5,
            phi: 1e-10,
            wp: 1e-5,
            kodaira_spencer: 1e-5,
            direct_image: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub quantity: String,
    pub computed: f64,
    pub expected: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tol: f64,
    /// `true` if the tolerance is relative.
    pub relative: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub s: [f64; 2],
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, quantity: &str) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }
}

fn row(quantity: &str, computed: f64, expected: f64, tol: f64, relative: bool) -> ErrorRow {
    let abs_err = (computed - expected).abs();
    let rel_err = if expected != 0.0 { abs_err / expected.abs() } else { abs_err };
    let pass = if relative { rel_err <= tol } else { abs_err <= tol };
    ErrorRow { quantity: quantity.into(), computed, expected, abs_err, rel_err, tol, relative, pass }
}

/// Per-quantity errors of a pipeline report against the oracle. Fiber fields contribute their
/// worst node; integrals are compared at the report's fiber volume.
pub fn compare(report: &CurvatureReport, oracle: &EllipticOracle, tol: &CompareTolerances) -> ErrorTable {
    let c = oracle.geodesic_curvature();
    let d = oracle.dbar_v_norm2();
    let worst = |lo: f64, hi: f64, e: f64| if (lo - e).abs() > (hi - e).abs() { lo } else { hi };
    let vol = report.fiber_volume;
    let rows = vec![
        row("geodesic_curvature", worst(report.c_min, report.c_max, c), c, tol.geodesic_curvature, true),
        row("dbarv_norm2", worst(report.dbarv_min, report.dbarv_max, d), d, tol.dbarv_norm2, true),
        row("theta_e", report.theta_e, oracle.theta_e(), tol.theta_e, false),
        row("phi", report.phi_sup, 0.0, tol.phi, false),
        row("wp", report.wp, d * vol, tol.wp, false),
        row("kodaira_spencer_norm", report.kodaira_spencer_norm, d, tol.kodaira_spencer, false),
        row("direct_image", report.direct_image, oracle.direct_image_density() * vol, tol.direct_image, true),
        row("lower_bound", report.lower_bound, oracle.direct_image_density() * vol, tol.direct_image, true),
    ];
    ErrorTable { s: [oracle.s.re, oracle.s.im], rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

    #[test]
    fn closed_forms() {
        let o = EllipticOracle::new(I).unwrap();
        assert!((o.geodesic_curvature() - 1.0).abs() < 1e-15);
        assert!((EllipticOracle::new(Complex64::new(0.5, 2.0)).unwrap().theta_e() - 1.0 / 16.0).abs() < 1e-15);
        let g = FiberGrid::new(1, 8).unwrap();
        let h = EllipticOracle::new(2.0 * I).unwrap().evaluate(OracleQuantity::HZzbar, &g).unwrap();
        assert!(h.iter().all(|v| (v - 0.5).norm() < 1e-15));
        assert!(EllipticOracle::new(Complex64::new(1.0, 0.0)).is_err());
        let pts = [(Complex64::new(0.3, 0.2), I), (Complex64::new(-0.7, 1.1), Complex64::new(0.4, 1.7))];
        let d = EllipticOracle::invariance_defect(&pts).unwrap();
        assert!(d < 1e-12, "{d}");
    }
}
