//! Pointwise tensor fields on a fiber grid.

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Dense complex matrix of size at most 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat {
    pub d: usize,
    pub a: [[Complex64; 3]; 3],
}

impl CMat {
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1 && d <= 3);
        Self { d, a: [[ZERO; 3]; 3] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.a[i][i] = ONE;
        }
        m
    }

    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), rows.len());
            for (j, v) in r.iter().enumerate() {
                m.a[i][j] = *v;
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.a[i][j]
    }

    pub fn det(&self) -> Complex64 {
        let a = &self.a;
        match self.d {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = det.inv();
        let a = &self.a;
        let mut m = Self::zeros(self.d);
        match self.d {
            1 => m.a[0][0] = inv,
            2 => {
                m.a[0][0] = a[1][1] * inv;
                m.a[1][1] = a[0][0] * inv;
                m.a[0][1] = -a[0][1] * inv;
                m.a[1][0] = -a[1][0] * inv;
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                        let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                        m.a[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) * inv;
                    }
                }
            }
        }
        Some(m)
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let mut m = Self::zeros(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                let mut acc = ZERO;
                for k in 0..self.d {
                    acc += self.a[i][k] * other.a[k][j];
                }
                m.a[i][j] = acc;
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                m.a[i][j] = self.a[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.d).map(|i| self.a[i][i]).sum()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut m = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                m.a[i][j] *= c;
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                m.a[i][j] += other.a[i][j];
            }
        }
        m
    }

    /// `max |M − M^†|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut e: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                e = e.max((self.a[i][j] - self.a[j][i].conj()).norm());
            }
        }
        e
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = |i: usize, j: usize| 0.5 * (self.a[i][j] + self.a[j][i].conj());
        match self.d {
            1 => h(0, 0).re,
            2 => {
                let (p, q, b) = (h(0, 0).re, h(1, 1).re, h(0, 1));
                0.5 * (p + q) - (0.25 * (p - q) * (p - q) + b.norm_sqr()).sqrt()
            }
            _ => {
                let m = Matrix3::from_fn(|i, j| h(i, j));
                m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Field of `n×n` matrices on a grid: `data[node*n*n + a*n + b] = M_{a b̄}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    n: usize,
    data: Vec<Complex64>,
}

impl HermitianField {
    pub fn zeros(n: usize, nodes: usize) -> Self {
        Self { n, data: vec![ZERO; nodes * n * n] }
    }

    pub fn constant(n: usize, nodes: usize, m: &CMat) -> Self {
        assert_eq!(m.d, n);
        let mut f = Self::zeros(n, nodes);
        for i in 0..nodes {
            f.set(i, m);
        }
        f
    }

    /// Builds a field from component fields `comps[a][b]`.
    pub fn from_components(n: usize, comps: &[Vec<Vec<Complex64>>]) -> Self {
        let nodes = comps[0][0].len();
        let mut f = Self::zeros(n, nodes);
        for a in 0..n {
            for b in 0..n {
                for i in 0..nodes {
                    f.data[i * n * n + a * n + b] = comps[a][b][i];
                }
            }
        }
        f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn at(&self, i: usize) -> CMat {
        let n = self.n;
        let mut m = CMat::zeros(n);
        for a in 0..n {
            for b in 0..n {
                m.a[a][b] = self.data[i * n * n + a * n + b];
            }
        }
        m
    }

    pub fn set(&mut self, i: usize, m: &CMat) {
        let n = self.n;
        for a in 0..n {
            for b in 0..n {
                self.data[i * n * n + a * n + b] = m.a[a][b];
            }
        }
    }

    pub fn get(&self, i: usize, a: usize, b: usize) -> Complex64 {
        self.data[i * self.n * self.n + a * self.n + b]
    }

    pub fn component(&self, a: usize, b: usize) -> Vec<Complex64> {
        (0..self.nodes()).map(|i| self.get(i, a, b)).collect()
    }

    pub fn map<F: Fn(&CMat) -> CMat>(&self, f: F) -> Self {
        let mut out = Self::zeros(self.n, self.nodes());
        for i in 0..self.nodes() {
            out.set(i, &f(&self.at(i)));
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.data.len(), other.data.len());
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn det(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| self.at(i).det().re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.nodes()).map(|i| self.at(i).min_eigenvalue()).fold(f64::INFINITY, f64::min)
    }

    pub fn hermitian_defect(&self) -> f64 {
        (0..self.nodes()).map(|i| self.at(i).hermitian_defect()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> CMat {
        let mut m = CMat::zeros(self.n);
        let w = 1.0 / self.nodes() as f64;
        for i in 0..self.nodes() {
            m = m.add(&self.at(i).scale(Complex64::new(w, 0.0)));
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Positive-definite Hermitian fiber metric `g_{αβ̄}` with its inverse and determinant.
///
/// The inverse is stored as a matrix `G = g^{-1}`, so that `g^{β̄α} = G[β][α]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberMetric {
    g: HermitianField,
    inv: HermitianField,
    det: Vec<f64>,
    min_eig: f64,
}

impl FiberMetric {
    pub fn new(g: HermitianField) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::InvalidField("non-finite metric component".into()));
        }
        let defect = g.hermitian_defect();
        if defect > 1e-12 {
            return Err(Error::InvalidField(format!("metric not Hermitian (defect {defect:.3e})")));
        }
        let min_eig = g.min_eigenvalue();
        if !(min_eig > 0.0) {
            return Err(Error::Definiteness(format!("minimum eigenvalue {min_eig:.6e}")));
        }
        let n = g.n();
        let mut inv = HermitianField::zeros(n, g.nodes());
        let mut det = Vec::with_capacity(g.nodes());
        for i in 0..g.nodes() {
            let m = g.at(i);
            det.push(m.det().re);
            inv.set(i, &m.inverse().ok_or_else(|| Error::Definiteness("singular node".into()))?);
        }
        Ok(Self { g, inv, det, min_eig })
    }

    /// Constant metric on `nodes` grid nodes.
    pub fn constant(m: &CMat, nodes: usize) -> Result<Self> {
        Self::new(HermitianField::constant(m.d, nodes, m))
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn nodes(&self) -> usize {
        self.g.nodes()
    }

    pub fn g(&self) -> &HermitianField {
        &self.g
    }

    pub fn inv(&self) -> &HermitianField {
        &self.inv
    }

    pub fn det(&self) -> &[f64] {
        &self.det
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    /// `max_node max_{α,γ} |g_{αβ̄} g^{β̄γ} − δ_α^γ|`.
    pub fn inverse_defect(&self) -> f64 {
        let mut e: f64 = 0.0;
        for i in 0..self.nodes() {
            let p = self.g.at(i).mul(&self.inv.at(i));
            for a in 0..self.n() {
                for c in 0..self.n() {
                    let d = if a == c { 1.0 } else { 0.0 };
                    e = e.max((p.a[a][c] - d).norm());
                }
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diag_min_eigenvalue() {
        let m = CMat::from_rows(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(-1.0, 0.0)]]);
        assert_eq!(m.min_eigenvalue(), -1.0);
        assert_eq!(CMat::identity(3).min_eigenvalue(), 1.0);
    }

    #[test]
    fn three_by_three_inverse() {
        let m = CMat::from_rows(&[
            &[c(2.0, 0.0), c(0.3, 0.1), c(0.0, -0.2)],
            &[c(0.3, -0.1), c(1.5, 0.0), c(0.4, 0.0)],
            &[c(0.0, 0.2), c(0.4, 0.0), c(1.0, 0.0)],
        ]);
        let p = m.mul(&m.inverse().unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((p.a[i][j] - d).norm() < 1e-14);
            }
        }
        let eig = m.min_eigenvalue();
        let shifted = m.add(&CMat::identity(3).scale(c(-eig, 0.0)));
        assert!(shifted.det().norm() < 1e-12);
    }

    #[test]
    fn metric_rejects_indefinite() {
        let m = CMat::from_rows(&[&[c(1.0, 0.0), c(2.0, 0.0)], &[c(2.0, 0.0), c(1.0, 0.0)]]);
        assert!(matches!(FiberMetric::constant(&m, 4), Err(Error::Definiteness(_))));
    }
}
