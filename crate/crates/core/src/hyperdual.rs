//! Truncated Wirtinger jets `f, ∂_s f, ∂_s̄ f, ∂_s∂_s̄ f`, treating `s` and `s̄` as independent.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: Complex64,
    pub ds: Complex64,
    pub dsb: Complex64,
    pub dssb: Complex64,
}

impl Jet {
    pub fn constant(v: Complex64) -> Self {
        Self { v, ds: ZERO, dsb: ZERO, dssb: ZERO }
    }

    pub fn real(v: f64) -> Self {
        Self::constant(Complex64::new(v, 0.0))
    }

    /// The coordinate `s`.
    pub fn s(s: Complex64) -> Self {
        Self { v: s, ds: Complex64::new(1.0, 0.0), dsb: ZERO, dssb: ZERO }
    }

    /// The coordinate `s̄`.
    pub fn sbar(s: Complex64) -> Self {
        Self { v: s.conj(), ds: ZERO, dsb: Complex64::new(1.0, 0.0), dssb: ZERO }
    }

    /// Holomorphic polynomial `Σ c_j s^j` (coefficients in increasing degree).
    pub fn poly(coeffs: &[Complex64], s: Complex64) -> Self {
        let x = Self::s(s);
        coeffs.iter().rev().fold(Self::real(0.0), |acc, &c| acc * x + Self::constant(c))
    }

    /// Complex conjugate: swaps the roles of `s` and `s̄`.
    pub fn conj(&self) -> Self {
        Self { v: self.v.conj(), ds: self.dsb.conj(), dsb: self.ds.conj(), dssb: self.dssb.conj() }
    }

    pub fn powi(&self, p: u32) -> Self {
        (0..p).fold(Self::real(1.0), |acc, _| acc * *self)
    }

    pub fn inv(&self) -> Self {
        let r = self.v.inv();
        let r2 = r * r;
        Self { v: r, ds: -self.ds * r2, dsb: -self.dsb * r2, dssb: -self.dssb * r2 + 2.0 * self.ds * self.dsb * r2 * r }
    }

    pub fn ln(&self) -> Self {
        let r = self.v.inv();
        Self { v: self.v.ln(), ds: self.ds * r, dsb: self.dsb * r, dssb: self.dssb * r - self.ds * self.dsb * r * r }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { v: self.v * c, ds: self.ds * c, dsb: self.dsb * c, dssb: self.dssb * c }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, ds: self.ds + o.ds, dsb: self.dsb + o.dsb, dssb: self.dssb + o.dssb }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, ds: self.ds - o.ds, dsb: self.dsb - o.dsb, dssb: self.dssb - o.dssb }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, ds: -self.ds, dsb: -self.dsb, dssb: -self.dssb }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            ds: self.ds * o.v + self.v * o.ds,
            dsb: self.dsb * o.v + self.v * o.dsb,
            dssb: self.dssb * o.v + self.ds * o.dsb + self.dsb * o.ds + self.v * o.dssb,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.inv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn log_imaginary_part_laplacian() {
        // ∂_s∂_s̄ log Im s = −1/(4 (Im s)²)
        let s = c(0.3, 1.7);
        let t = (Jet::s(s) - Jet::sbar(s)).scale(c(0.0, -0.5));
        let l = t.ln();
        assert!((l.v.re - 1.7f64.ln()).abs() < 1e-15);
        assert!((l.dssb - c(-1.0 / (4.0 * 1.7 * 1.7), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn quotient_rule_matches_finite_difference() {
        let f = |s: Complex64| {
            let a = Jet::s(s) * Jet::sbar(s) + Jet::real(2.0);
            let b = Jet::poly(&[c(1.0, 0.0), c(0.5, 0.1)], s);
            a / b
        };
        let s0 = c(0.2, 0.9);
        let h = 1e-5;
        let val = |s: Complex64| f(s).v;
        // ∂_s = (∂_a − i∂_b)/2
        let da = (val(s0 + h) - val(s0 - h)) / (2.0 * h);
        let db = (val(s0 + c(0.0, h)) - val(s0 - c(0.0, h))) / (2.0 * h);
        let ds = 0.5 * (da - c(0.0, 1.0) * db);
        assert!((f(s0).ds - ds).norm() < 1e-9);
        let lap = (val(s0 + h) + val(s0 - h) + val(s0 + c(0.0, h)) + val(s0 - c(0.0, h)) - 4.0 * val(s0)) / (h * h);
        assert!((f(s0).dssb - 0.25 * lap).norm() < 1e-4);
    }
}
