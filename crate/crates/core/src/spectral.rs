//! Spectral calculus on a flat torus chart: derivatives, Laplacians, inverses, integrals.
//!
//! First derivatives drop the Nyquist bin. Pure second derivatives along one lattice axis keep
//! it, so that the constant-coefficient Laplacians are invertible on every nonzero bin.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::chart::FiberChart;
use crate::error::{Error, Result};
use crate::field::{CMat, FiberMetric, HermitianField};
use crate::grid::{FiberGrid, Transform};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Holomorphic or antiholomorphic coordinate derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    Z(usize),
    Zb(usize),
}

/// Volume used by [`Spectral::fiber_integral`].
#[derive(Debug, Clone, Copy)]
pub enum Volume<'a> {
    /// Euclidean area `Π (i/2) dz_α∧dz̄_α`.
    Flat,
    /// `det(h) · Π (i/2) dz_α∧dz̄_α`.
    Metric(&'a FiberMetric),
    /// Explicit density against the Euclidean area.
    Density(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct Spectral {
    transform: Transform,
    chart: FiberChart,
    d1: Vec<Complex64>,
    d2: Vec<f64>,
    ddbar_sym: OnceLock<Vec<Vec<Complex64>>>,
}

impl Spectral {
    pub fn new(transform: Transform, chart: FiberChart) -> Result<Self> {
        let grid = *transform.grid();
        if grid.n() != chart.n() {
            return Err(Error::InvalidChart(format!(
                "chart dimension {} does not match grid dimension {}",
                chart.n(),
                grid.n()
            )));
        }
        let size = grid.size();
        let mut d1 = vec![ZERO; size];
        let mut d2 = vec![0.0; size];
        for j in 0..size {
            let k = grid.frequency(j) as f64;
            d1[j] = if grid.is_nyquist(j) { ZERO } else { Complex64::new(0.0, 2.0 * PI * k) };
            d2[j] = -(2.0 * PI * k) * (2.0 * PI * k);
        }
        Ok(Self { transform, chart, d1, d2, ddbar_sym: OnceLock::new() })
    }

    pub fn grid(&self) -> &FiberGrid {
        self.transform.grid()
    }

    pub fn chart(&self) -> &FiberChart {
        &self.chart
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn n(&self) -> usize {
        self.chart.n()
    }

    pub fn nodes(&self) -> usize {
        self.grid().len()
    }

    fn coeffs(&self, op: Deriv) -> &[Complex64; 4] {
        match op {
            Deriv::Z(a) => self.chart.dz_coeffs(a),
            Deriv::Zb(a) => self.chart.dzb_coeffs(a),
        }
    }

    /// Fourier symbol of a first derivative at flat spectral index `idx`.
    pub fn symbol1(&self, op: Deriv, idx: usize) -> Complex64 {
        let m = self.grid().multi_index(idx);
        let c = self.coeffs(op);
        (0..self.grid().dims()).map(|d| c[d] * self.d1[m[d]]).sum()
    }

    /// Fourier symbol of the second derivative `a ∘ b` at flat spectral index `idx`.
    pub fn symbol2(&self, a: Deriv, b: Deriv, idx: usize) -> Complex64 {
        let m = self.grid().multi_index(idx);
        let (ca, cb) = (self.coeffs(a), self.coeffs(b));
        let dims = self.grid().dims();
        let mut sa = ZERO;
        let mut sb = ZERO;
        let mut diag = ZERO;
        for d in 0..dims {
            let p = self.d1[m[d]];
            sa += ca[d] * p;
            sb += cb[d] * p;
            diag += ca[d] * cb[d] * (self.d2[m[d]] - (p * p).re);
        }
        sa * sb + diag
    }

    /// Cached symbols of `∂_α∂_β̄`, indexed `[α*n + β][idx]`.
    fn ddbar_symbols(&self) -> &Vec<Vec<Complex64>> {
        self.ddbar_sym.get_or_init(|| {
            let n = self.n();
            let mut out = Vec::with_capacity(n * n);
            for a in 0..n {
                for b in 0..n {
                    out.push((0..self.nodes()).map(|i| self.symbol2(Deriv::Z(a), Deriv::Zb(b), i)).collect());
                }
            }
            out
        })
    }

    pub fn forward(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        check_finite(f)?;
        let mut buf = f.to_vec();
        self.transform.forward(&mut buf);
        Ok(buf)
    }

    fn apply_symbol<F: Fn(usize) -> Complex64>(&self, hat: &[Complex64], sym: F) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = hat.iter().enumerate().map(|(i, v)| v * sym(i)).collect();
        self.transform.inverse(&mut out);
        out
    }

    /// Spectral derivative of the trigonometric interpolant of `f`.
    pub fn derivative(&self, f: &[Complex64], op: Deriv) -> Result<Vec<Complex64>> {
        let hat = self.forward(f)?;
        Ok(self.apply_symbol(&hat, |i| self.symbol1(op, i)))
    }

    pub fn second(&self, f: &[Complex64], a: Deriv, b: Deriv) -> Result<Vec<Complex64>> {
        let hat = self.forward(f)?;
        Ok(self.apply_symbol(&hat, |i| self.symbol2(a, b, i)))
    }

    /// Several first derivatives sharing one forward transform.
    pub fn derivatives(&self, f: &[Complex64], ops: &[Deriv]) -> Result<Vec<Vec<Complex64>>> {
        let hat = self.forward(f)?;
        Ok(ops.iter().map(|&op| self.apply_symbol(&hat, |i| self.symbol1(op, i))).collect())
    }

    /// Several second derivatives sharing one forward transform.
    pub fn seconds(&self, f: &[Complex64], pairs: &[(Deriv, Deriv)]) -> Result<Vec<Vec<Complex64>>> {
        let hat = self.forward(f)?;
        Ok(pairs.iter().map(|&(a, b)| self.apply_symbol(&hat, |i| self.symbol2(a, b, i))).collect())
    }

    /// Component matrix `∂_α∂_β̄ f` of `i∂∂̄f`.
    pub fn ddbar(&self, f: &[Complex64]) -> Result<HermitianField> {
        let n = self.n();
        let hat = self.forward(f)?;
        let comps: Vec<Vec<Vec<Complex64>>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        let sym = &self.ddbar_symbols()[a * n + b];
                        self.apply_symbol(&hat, |i| sym[i])
                    })
                    .collect()
            })
            .collect();
        Ok(HermitianField::from_components(n, &comps))
    }

    pub fn ddbar_real(&self, f: &[f64]) -> Result<HermitianField> {
        self.ddbar(&to_complex(f))
    }

    /// `Δ_g f = g^{β̄α} ∂_α∂_β̄ f`.
    pub fn laplace_beltrami(&self, g: &FiberMetric, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let h = self.ddbar(f)?;
        Ok(trace_against(g.inv(), &h))
    }

    /// Symbol of the constant-coefficient operator `Δ_g` (`ginv = g^{-1}`).
    pub fn laplacian_symbol(&self, ginv: &CMat, idx: usize) -> Complex64 {
        let n = self.n();
        let sym = self.ddbar_symbols();
        let mut s = ZERO;
        for a in 0..n {
            for b in 0..n {
                s += ginv.a[b][a] * sym[a * n + b][idx];
            }
        }
        s
    }

    /// Solves `(Δ_g − ε) u = f` for a constant metric `g`. For `ε = 0` the mean of `f` must vanish
    /// and the mean-zero solution is returned.
    pub fn solve_constant(&self, g: &CMat, eps: f64, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let ginv = g.inverse().ok_or_else(|| Error::Definiteness("singular constant metric".into()))?;
        let hat = self.forward(f)?;
        if eps == 0.0 {
            let mean = hat[0] / f.len() as f64;
            if mean.norm() > 1e-10 {
                return Err(Error::Normalization(format!("right-hand side has mean {:.3e}", mean.norm())));
            }
        }
        Ok(self.apply_symbol(&hat, |i| {
            if i == 0 && eps == 0.0 {
                return ZERO;
            }
            let l = self.laplacian_symbol(&ginv, i) - eps;
            if l.norm() == 0.0 {
                ZERO
            } else {
                l.inv()
            }
        }))
    }

    /// Mean-zero `u` with `Σ_α ∂_α∂_ᾱ u = f`.
    pub fn invert_flat_laplacian(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        self.solve_constant(&CMat::identity(self.n()), 0.0, f)
    }

    /// Trapezoidal quadrature of a real density against the chosen volume.
    pub fn fiber_integral(&self, density: &[Complex64], volume: Volume<'_>) -> Result<f64> {
        check_finite(density)?;
        let imag = density.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        if imag > 1e-12 {
            return Err(Error::InvalidField(format!("density has imaginary part {imag:.3e}")));
        }
        let vals: Vec<f64> = density.iter().map(|v| v.re).collect();
        Ok(self.integrate(&vals, volume))
    }

    /// Quadrature of a real sample array; the summation order is fixed.
    pub fn integrate(&self, vals: &[f64], volume: Volume<'_>) -> f64 {
        let w = self.chart.jacobian() / vals.len() as f64;
        let sum: f64 = match volume {
            Volume::Flat => vals.iter().sum(),
            Volume::Metric(g) => vals.iter().zip(g.det()).map(|(a, b)| a * b).sum(),
            Volume::Density(d) => vals.iter().zip(d).map(|(a, b)| a * b).sum(),
        };
        sum * w
    }

    pub fn volume(&self, volume: Volume<'_>) -> f64 {
        self.integrate(&vec![1.0; self.nodes()], volume)
    }
}

/// `Σ_{α,β} G[β][α] H[α][β]` per node (`tr(g^{-1} h)`).
pub fn trace_against(ginv: &HermitianField, h: &HermitianField) -> Vec<Complex64> {
    let n = h.n();
    (0..h.nodes())
        .map(|i| {
            let mut s = ZERO;
            for a in 0..n {
                for b in 0..n {
                    s += ginv.get(i, b, a) * h.get(i, a, b);
                }
            }
            s
        })
        .collect()
}

pub fn to_complex(f: &[f64]) -> Vec<Complex64> {
    f.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

pub fn real_part(f: &[Complex64]) -> Vec<f64> {
    f.iter().map(|v| v.re).collect()
}

pub fn sup_norm(f: &[Complex64]) -> f64 {
    f.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn sup_norm_real(f: &[f64]) -> f64 {
    f.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

pub fn check_finite(f: &[Complex64]) -> Result<()> {
    if f.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidField("non-finite sample".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Spectral {
        let grid = FiberGrid::new(1, n).unwrap();
        Spectral::new(Transform::new(grid), FiberChart::elliptic(Complex64::new(0.0, 1.0)).unwrap()).unwrap()
    }

    #[test]
    fn real_coordinate_derivative_of_re_z() {
        // ∂_z = (∂_x − i∂_y)/2 on the square chart
        let sp = square(16);
        let f = sp.grid().sample(|xi| Complex64::new((2.0 * PI * xi[0]).sin(), 0.0));
        let d = sp.derivative(&f, Deriv::Z(0)).unwrap();
        for (i, v) in d.iter().enumerate() {
            let x = sp.grid().coords(i)[0];
            assert!((v - Complex64::new(PI * (2.0 * PI * x).cos(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let sp = square(8);
        let f = vec![Complex64::new(3.0, 0.0); sp.nodes()];
        assert!(sup_norm(&sp.derivative(&f, Deriv::Zb(0)).unwrap()) < 1e-14);
        assert!(sup_norm(&sp.second(&f, Deriv::Z(0), Deriv::Zb(0)).unwrap()) < 1e-14);
    }

    #[test]
    fn nonfinite_input_is_rejected() {
        let sp = square(8);
        let mut f = vec![Complex64::new(0.0, 0.0); sp.nodes()];
        f[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(sp.derivative(&f, Deriv::Z(0)), Err(Error::InvalidField(_))));
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let sp = square(8);
        let f = vec![Complex64::new(1.0, 0.0); sp.nodes()];
        assert!(matches!(sp.invert_flat_laplacian(&f), Err(Error::Normalization(_))));
    }
}
