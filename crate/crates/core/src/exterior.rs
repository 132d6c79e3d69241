//! Exterior algebra over `(1,0)` and `(0,1)` covectors of `C^m`, used for top-degree identities.
//!
//! Generators `0..m` are `dw_a`, generators `m..2m` are `dw̄_a`. A basis monomial is a bitmask
//! with generators wedged in increasing order.

use num_complex::Complex64;

use crate::field::CMat;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    m: usize,
    c: Vec<Complex64>,
}

/// Sign of moving the generators of `b` past those of `a` into increasing order.
fn wedge_sign(a: u32, b: u32) -> f64 {
    let mut swaps = 0u32;
    let mut bits = b;
    while bits != 0 {
        let j = bits.trailing_zeros();
        // generators of a above j must pass j
        swaps += (a >> (j + 1)).count_ones();
        bits &= bits - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Form {
    pub fn zero(m: usize) -> Self {
        assert!(m >= 1 && m <= 4);
        Self { m, c: vec![ZERO; 1 << (2 * m)] }
    }

    pub fn one(m: usize) -> Self {
        let mut f = Self::zero(m);
        f.c[0] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn dw(m: usize, a: usize) -> Self {
        let mut f = Self::zero(m);
        f.c[1 << a] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn dwb(m: usize, a: usize) -> Self {
        let mut f = Self::zero(m);
        f.c[1 << (m + a)] = Complex64::new(1.0, 0.0);
        f
    }

    /// `i Σ_{a,b} M_{a b̄} dw_a ∧ dw̄_b`.
    pub fn from_hermitian(comps: &CMat) -> Self {
        let m = comps.d;
        let mut f = Self::zero(m);
        for a in 0..m {
            for b in 0..m {
                let mask = (1u32 << a) | (1u32 << (m + b));
                f.c[mask as usize] += I * comps.a[a][b] * wedge_sign(1 << a, 1 << (m + b));
            }
        }
        f
    }

    pub fn coeff(&self, mask: usize) -> Complex64 {
        self.c[mask]
    }

    /// Coefficient of `dw_0∧dw̄_0∧dw_1∧dw̄_1∧…` (the positively oriented volume up to `i^m`).
    pub fn top_coefficient(&self) -> Complex64 {
        let full = (1u32 << (2 * self.m)) - 1;
        // sign of the paired ordering relative to the increasing ordering
        let mut acc = 0u32;
        let mut sign = 1.0;
        for a in 0..self.m {
            let pair = (1u32 << a) | (1u32 << (self.m + a));
            sign *= wedge_sign(acc, 1 << a) * wedge_sign(acc | (1 << a), 1 << (self.m + a));
            acc |= pair;
        }
        self.c[full as usize] * sign
    }

    pub fn wedge(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m);
        let mut out = Self::zero(self.m);
        for (ma, ca) in self.c.iter().enumerate() {
            if *ca == ZERO {
                continue;
            }
            for (mb, cb) in other.c.iter().enumerate() {
                if *cb == ZERO || ma & mb != 0 {
                    continue;
                }
                out.c[ma | mb] += ca * cb * wedge_sign(ma as u32, mb as u32);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { m: self.m, c: self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { m: self.m, c: self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { m: self.m, c: self.c.iter().map(|a| a * s).collect() }
    }

    /// `τ^k / k!`.
    pub fn power(&self, k: usize) -> Self {
        let mut out = Self::one(self.m);
        for j in 1..=k {
            out = out.wedge(self).scale(Complex64::new(1.0 / j as f64, 0.0));
        }
        out
    }

    /// Interior product with the vector whose pairing with generator `g` is `v[g]`.
    pub fn interior(&self, v: &[Complex64]) -> Self {
        assert_eq!(v.len(), 2 * self.m);
        let mut out = Self::zero(self.m);
        for (mask, c) in self.c.iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            let mut pos = 0;
            let mut bits = mask;
            while bits != 0 {
                let g = bits.trailing_zeros() as usize;
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                out.c[mask & !(1 << g)] += c * v[g] * sign;
                pos += 1;
                bits &= bits - 1;
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.c.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.c
    }
}

/// Sup-norm of `τ^{n+1}/(n+1)! − c · τ^n/n! ∧ i ds∧ds̄` for the `(n+1)×(n+1)` component matrix
/// `full` (last index is the base direction) and a proposed geodesic curvature `c`.
pub fn semmes_defect(full: &CMat, c: f64) -> f64 {
    let m = full.d;
    let n = m - 1;
    let tau = Form::from_hermitian(full);
    let lhs = tau.power(m);
    let dsds = Form::dw(m, n).wedge(&Form::dwb(m, n)).scale(I);
    let rhs = tau.power(n).wedge(&dsds).scale(Complex64::new(c, 0.0));
    lhs.sub(&rhs).sup_norm()
}

/// Sup-norm of `i_v τ − i c ds̄` for `v = ∂_s + a^α ∂_α`.
pub fn contraction_defect(full: &CMat, a: &[Complex64], c: f64) -> f64 {
    let m = full.d;
    let n = m - 1;
    let tau = Form::from_hermitian(full);
    let mut v = vec![ZERO; 2 * m];
    v[..n].copy_from_slice(&a[..n]);
    v[n] = Complex64::new(1.0, 0.0);
    let lhs = tau.interior(&v);
    let rhs = Form::dwb(m, n).scale(I * c);
    lhs.sub(&rhs).sup_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anticommutation() {
        let a = Form::dw(2, 0);
        let b = Form::dwb(2, 1);
        assert_eq!(a.wedge(&b), b.wedge(&a).scale(Complex64::new(-1.0, 0.0)));
        assert_eq!(a.wedge(&a).sup_norm(), 0.0);
    }

    #[test]
    fn standard_volume_is_positive() {
        // (i dz∧dz̄)∧(i ds∧ds̄) = i² dz∧dz̄∧ds∧ds̄
        let v = Form::from_hermitian(&CMat::identity(2)).power(2);
        assert!((v.top_coefficient() - I * I).norm() < 1e-15);
    }

    #[test]
    fn interior_is_a_derivation() {
        let a = Form::dw(2, 0).add(&Form::dwb(2, 1).scale(Complex64::new(0.5, 0.2)));
        let b = Form::dw(2, 1).add(&Form::dwb(2, 0).scale(Complex64::new(-1.0, 0.3)));
        let v = [Complex64::new(1.0, 0.5), Complex64::new(-0.2, 0.0), ZERO, ZERO];
        let lhs = a.wedge(&b).interior(&v);
        let rhs = a.interior(&v).wedge(&b).sub(&a.wedge(&b.interior(&v)));
        assert!(lhs.sub(&rhs).sup_norm() < 1e-15);
    }
}
