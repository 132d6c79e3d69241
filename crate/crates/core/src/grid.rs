//! Uniform periodic lattices on `[0,1)^{2n}` and their discrete Fourier transforms.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform lattice with `size` nodes per real dimension over `2n` real dimensions.
///
/// Axis order is `(x_1, .., x_n, y_1, .., y_n)`; axis 0 is the slowest in the flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiberGrid {
    n: usize,
    size: usize,
}

impl FiberGrid {
    pub fn new(n: usize, size: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("fiber dimension {n} not in {{1, 2}}")));
        }
        if size < 8 || size % 2 != 0 {
            return Err(Error::InvalidGrid(format!("grid size {size} must be even and >= 8")));
        }
        Ok(Self { n, size })
    }

    /// Complex fiber dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nodes per real dimension.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dims(&self) -> usize {
        2 * self.n
    }

    pub fn len(&self) -> usize {
        self.size.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis lattice indices of a flat node index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 4] {
        let mut out = [0usize; 4];
        for d in (0..self.dims()).rev() {
            out[d] = idx % self.size;
            idx /= self.size;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.dims()].iter().fold(0, |acc, &j| acc * self.size + (j % self.size))
    }

    /// Real coordinates `ξ = (x, y)` of a node.
    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let m = self.multi_index(idx);
        let h = 1.0 / self.size as f64;
        let mut out = [0.0; 4];
        for d in 0..self.dims() {
            out[d] = m[d] as f64 * h;
        }
        out
    }

    /// Signed frequency of FFT bin `j`, in `[-N/2, N/2)`.
    pub fn frequency(&self, j: usize) -> i64 {
        let n = self.size as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.size / 2
    }

    /// Signed frequency vector of a flat spectral index.
    pub fn wavevector(&self, idx: usize) -> [i64; 4] {
        let m = self.multi_index(idx);
        let mut k = [0i64; 4];
        for d in 0..self.dims() {
            k[d] = self.frequency(m[d]);
        }
        k
    }

    /// Flat spectral index of a signed frequency vector (aliased into range).
    pub fn spectral_index(&self, k: &[i64]) -> usize {
        let n = self.size as i64;
        k[..self.dims()]
            .iter()
            .fold(0usize, |acc, &kd| acc * self.size + kd.rem_euclid(n) as usize)
    }

    /// Evaluates `f(ξ)` at every node.
    pub fn sample<F: Fn(&[f64; 4]) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        (0..self.len()).map(|i| f(&self.coords(i))).collect()
    }

    pub fn sample_real<F: Fn(&[f64; 4]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.coords(i))).collect()
    }
}

/// Planned multi-dimensional FFT for one grid. Cheap to clone.
#[derive(Clone)]
pub struct Transform {
    grid: FiberGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform").field("grid", &self.grid).finish()
    }
}

impl Transform {
    pub fn new(grid: FiberGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.size());
        let inverse = planner.plan_fft_inverse(grid.size());
        Self { grid, forward, inverse }
    }

    pub fn grid(&self) -> &FiberGrid {
        &self.grid
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform in place, normalized so that `inverse(forward(f)) = f`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.size();
        let dims = self.grid.dims();
        let len = data.len();
        assert_eq!(len, self.grid.len(), "field length does not match grid");
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for axis in 0..dims {
            let stride = n.pow((dims - 1 - axis) as u32);
            if stride == 1 {
                fft.process(data);
                continue;
            }
            let blocks = len / (n * stride);
            let mut line = 0;
            for b in 0..blocks {
                let base = b * n * stride;
                for inner in 0..stride {
                    for k in 0..n {
                        buf[line * n + k] = data[base + k * stride + inner];
                    }
                    line += 1;
                }
            }
            fft.process(&mut buf);
            line = 0;
            for b in 0..blocks {
                let base = b * n * stride;
                for inner in 0..stride {
                    for k in 0..n {
                        data[base + k * stride + inner] = buf[line * n + k];
                    }
                    line += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_small_grids() {
        assert!(FiberGrid::new(1, 7).is_err());
        assert!(FiberGrid::new(1, 6).is_err());
        assert!(FiberGrid::new(3, 8).is_err());
        assert!(FiberGrid::new(2, 8).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let g = FiberGrid::new(2, 8).unwrap();
        for idx in [0, 1, 17, 511, 4095] {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
            assert_eq!(g.spectral_index(&g.wavevector(idx)), idx);
        }
    }

    #[test]
    fn single_mode_lands_in_its_bin() {
        let g = FiberGrid::new(1, 16).unwrap();
        let t = Transform::new(g);
        let mut f = g.sample(|xi| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (3.0 * xi[0] - 2.0 * xi[1])));
        t.forward(&mut f);
        let peak = g.spectral_index(&[3, -2]);
        for (i, v) in f.iter().enumerate() {
            let expect = if i == peak { g.len() as f64 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-9 && v.im.abs() < 1e-9);
        }
    }
}
