//! Flat torus charts `z = x + Ω y` and their chain-rule coefficients.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A flat complex torus `C^n / (Z^n + Ω Z^n)` with fiber coordinates `ξ = (x, y) ∈ [0,1)^{2n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberChart {
    n: usize,
    omega: [[Complex64; 2]; 2],
    /// `∂_{z_α} = Σ_d dz[α][d] ∂_{ξ_d}`
    dz: [[Complex64; 4]; 2],
    /// `∂_{z̄_α} = Σ_d dzb[α][d] ∂_{ξ_d}`
    dzb: [[Complex64; 4]; 2],
    jacobian: f64,
}

impl FiberChart {
    /// Elliptic curve chart `z = x + τ y`.
    pub fn elliptic(tau: Complex64) -> Result<Self> {
        if !(tau.re.is_finite() && tau.im.is_finite()) || tau.im <= 0.0 {
            return Err(Error::InvalidChart(format!("Im tau = {} must be positive", tau.im)));
        }
        Self::build(1, [[tau, ZERO], [ZERO, ZERO]])
    }

    /// Abelian surface chart `z_α = x_α + Σ_β Ω_{αβ} y_β`.
    pub fn abelian(omega: [[Complex64; 2]; 2]) -> Result<Self> {
        if (omega[0][1] - omega[1][0]).norm() > 1e-14 {
            return Err(Error::InvalidChart("period matrix must be symmetric".into()));
        }
        let y = [[omega[0][0].im, omega[0][1].im], [omega[1][0].im, omega[1][1].im]];
        if y[0][0] <= 0.0 || y[0][0] * y[1][1] - y[0][1] * y[1][0] <= 0.0 {
            return Err(Error::InvalidChart("Im of period matrix must be positive-definite".into()));
        }
        Self::build(2, omega)
    }

    fn build(n: usize, omega: [[Complex64; 2]; 2]) -> Result<Self> {
        // M = (Ω − Ω̄)^{-1}; y = M (z − z̄), x = z − Ω y.
        let mut d = [[ZERO; 2]; 2];
        for a in 0..n {
            for b in 0..n {
                d[a][b] = omega[a][b] - omega[a][b].conj();
            }
        }
        let m = invert_small(n, &d).ok_or_else(|| Error::InvalidChart("degenerate period matrix".into()))?;
        let mut om = [[ZERO; 2]; 2];
        for g in 0..n {
            for a in 0..n {
                for b in 0..n {
                    om[g][a] += omega[g][b] * m[b][a];
                }
            }
        }
        let mut dz = [[ZERO; 4]; 2];
        let mut dzb = [[ZERO; 4]; 2];
        for a in 0..n {
            for g in 0..n {
                let delta = if g == a { 1.0 } else { 0.0 };
                dz[a][g] = Complex64::new(delta, 0.0) - om[g][a];
                dzb[a][g] = om[g][a];
            }
            for b in 0..n {
                dz[a][n + b] = m[b][a];
                dzb[a][n + b] = -m[b][a];
            }
        }
        let jacobian = if n == 1 {
            omega[0][0].im
        } else {
            omega[0][0].im * omega[1][1].im - omega[0][1].im * omega[1][0].im
        };
        Ok(Self { n, omega, dz, dzb, jacobian })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `τ` for an elliptic chart (the `(0,0)` period entry in general).
    pub fn tau(&self) -> Complex64 {
        self.omega[0][0]
    }

    pub fn period(&self) -> [[Complex64; 2]; 2] {
        self.omega
    }

    /// Coefficients of `∂_{z_α}` in the real lattice derivatives.
    pub fn dz_coeffs(&self, alpha: usize) -> &[Complex64; 4] {
        &self.dz[alpha]
    }

    /// Coefficients of `∂_{z̄_α}` in the real lattice derivatives.
    pub fn dzb_coeffs(&self, alpha: usize) -> &[Complex64; 4] {
        &self.dzb[alpha]
    }

    /// Density of the Euclidean area `Π (i/2) dz_α∧dz̄_α` against `dξ`: `det Im Ω`.
    pub fn jacobian(&self) -> f64 {
        self.jacobian
    }

    /// Holomorphic coordinates of a lattice point.
    pub fn z(&self, xi: &[f64; 4]) -> [Complex64; 2] {
        let mut z = [ZERO; 2];
        for a in 0..self.n {
            z[a] = Complex64::new(xi[a], 0.0);
            for b in 0..self.n {
                z[a] += self.omega[a][b] * xi[self.n + b];
            }
        }
        z
    }
}

/// Inverse of a 1×1 or 2×2 complex matrix.
pub(crate) fn invert_small(n: usize, a: &[[Complex64; 2]; 2]) -> Option<[[Complex64; 2]; 2]> {
    let mut out = [[ZERO; 2]; 2];
    if n == 1 {
        if a[0][0].norm() == 0.0 {
            return None;
        }
        out[0][0] = a[0][0].inv();
        return Some(out);
    }
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.norm() == 0.0 {
        return None;
    }
    let inv = det.inv();
    out[0][0] = a[1][1] * inv;
    out[1][1] = a[0][0] * inv;
    out[0][1] = -a[0][1] * inv;
    out[1][0] = -a[1][0] * inv;
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // applies a first-order operator to the linear function ξ ↦ Σ_d w[d] ξ_d
    fn apply(coeffs: &[Complex64; 4], w: &[Complex64; 4]) -> Complex64 {
        coeffs.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn elliptic_chain_rule_on_coordinates() {
        let tau = c(0.3, 0.8);
        let ch = FiberChart::elliptic(tau).unwrap();
        // z = x + τ y, z̄ = x + τ̄ y
        let z = [c(1.0, 0.0), tau, c(0.0, 0.0), c(0.0, 0.0)];
        let zb = [c(1.0, 0.0), tau.conj(), c(0.0, 0.0), c(0.0, 0.0)];
        assert!((apply(ch.dz_coeffs(0), &z) - 1.0).norm() < 1e-14);
        assert!(apply(ch.dz_coeffs(0), &zb).norm() < 1e-14);
        assert!(apply(ch.dzb_coeffs(0), &z).norm() < 1e-14);
        assert!((apply(ch.dzb_coeffs(0), &zb) - 1.0).norm() < 1e-14);
        // (−τ̄ ∂_x + ∂_y)/(τ − τ̄)
        let den = tau - tau.conj();
        assert!((ch.dz_coeffs(0)[0] + tau.conj() / den).norm() < 1e-15);
        assert!((ch.dz_coeffs(0)[1] - 1.0 / den).norm() < 1e-15);
    }

    #[test]
    fn abelian_chain_rule_on_coordinates() {
        let om = [[c(0.1, 1.2), c(0.2, 0.3)], [c(0.2, 0.3), c(-0.4, 0.9)]];
        let ch = FiberChart::abelian(om).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                // z_b as a linear function of (x1, x2, y1, y2)
                let mut zl = [c(0.0, 0.0); 4];
                zl[b] = c(1.0, 0.0);
                zl[2] = om[b][0];
                zl[3] = om[b][1];
                let zbl: [Complex64; 4] = zl.map(|v| v.conj());
                let d = if a == b { 1.0 } else { 0.0 };
                assert!((apply(ch.dz_coeffs(a), &zl) - d).norm() < 1e-14);
                assert!(apply(ch.dz_coeffs(a), &zbl).norm() < 1e-14);
                assert!((apply(ch.dzb_coeffs(a), &zbl) - d).norm() < 1e-14);
                assert!(apply(ch.dzb_coeffs(a), &zl).norm() < 1e-14);
            }
        }
        assert!((ch.jacobian() - (1.2 * 0.9 - 0.09)).abs() < 1e-14);
    }

    #[test]
    fn rejects_lower_half_plane() {
        assert!(FiberChart::elliptic(c(0.0, -1.0)).is_err());
        assert!(FiberChart::abelian([[c(0.0, 1.0), c(0.0, 2.0)], [c(0.0, 2.0), c(0.0, 1.0)]]).is_err());
    }
}
