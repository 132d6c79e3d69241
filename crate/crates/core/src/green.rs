//! Green kernel of `−Δ_h` on a flat torus fiber and its lower bound `K = −min G`.
//!
//! `G(ξ, ξ') = Σ_{k≠0} e^{2πi k·(ξ−ξ')} / (λ_k Vol_h)` with `λ_k` the symbol of `−Δ_h`, truncated to
//! the frequencies `|k_d| < N/2` of the fiber grid.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CMat, FiberMetric};
use crate::geometry::{constant_metric, curvature_report, theorem12_check, Theorem12Check};
use crate::grid::{FiberGrid, Transform};
use crate::lattice::StencilConfig;
use crate::models::Family;
use crate::solver::SolverConfig;
use crate::spectral::{Deriv, Spectral};

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GreenOperator {
    spectral: Spectral,
    h: CMat,
    hinv: CMat,
    volume: f64,
    /// `(k, 1/(λ_k Vol))` over the truncated nonzero frequencies.
    modes: Vec<(Vec<i64>, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBound {
    pub k: f64,
    /// Minimum of the kernel on the evaluation grid.
    pub grid_min: f64,
    /// Refined minimum of the truncated series.
    pub min: f64,
    /// Minimizer `ξ*` of `G(ξ, 0)`, so the pair is `(ξ*, 0)`.
    pub argmin: Vec<f64>,
    pub resolution: usize,
    pub newton_iters: usize,
}

/// Builds the operator for a fiber whose Ricci-flat metric `h` must be constant.
pub fn build_green(sp: &Spectral, h: &FiberMetric) -> Result<GreenOperator> {
    build_green_constant(sp, constant_metric(h)?)
}

pub fn build_green_constant(sp: &Spectral, h: CMat) -> Result<GreenOperator> {
    if h.d != sp.n() {
        return Err(Error::InvalidField("metric dimension does not match the chart".into()));
    }
    if h.hermitian_defect() > 1e-12 || h.min_eigenvalue() <= 0.0 {
        return Err(Error::Definiteness("Green kernel needs a positive-definite constant metric".into()));
    }
    let hinv = h.inverse().ok_or_else(|| Error::Definiteness("singular metric".into()))?;
    let volume = sp.chart().jacobian() * h.det().re;
    let mut op = GreenOperator { spectral: sp.clone(), h, hinv, volume, modes: vec![] };
    let grid = *sp.grid();
    let half = grid.size() as i64 / 2;
    let mut modes = vec![];
    for idx in 0..grid.len() {
        let k: Vec<i64> = grid.wavevector(idx)[..grid.dims()].to_vec();
        if k.iter().all(|v| *v == 0) || k.iter().any(|v| v.abs() >= half) {
            continue;
        }
        let lam = op.symbol(&k);
        if !(lam > 0.0) {
            return Err(Error::Definiteness(format!("symbol {lam:.3e} at k = {k:?}")));
        }
        modes.push((k, 1.0 / (lam * volume)));
    }
    op.modes = modes;
    Ok(op)
}

impl GreenOperator {
    pub fn metric(&self) -> &CMat {
        &self.h
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// `λ_k` of `−Δ_h = −h^{β̄α} ∂_α∂_β̄` at an integer wavevector.
    pub fn symbol(&self, k: &[i64]) -> f64 {
        let chart = self.spectral.chart();
        let n = chart.n();
        let sym = |c: &[Complex64; 4]| -> Complex64 {
            k.iter().enumerate().map(|(d, kd)| c[d] * Complex64::new(0.0, 2.0 * PI * *kd as f64)).sum()
        };
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                s += self.hinv.a[b][a] * sym(chart.dz_coeffs(a)) * sym(chart.dzb_coeffs(b));
            }
        }
        -s.re
    }

    /// `u(z) = ∫ G(z, w) f(w) dV_h(w)` on the fiber grid.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let sp = &self.spectral;
        if f.len() != sp.nodes() {
            return Err(Error::InvalidField("field does not match the grid".into()));
        }
        let mut hat = sp.transform().forward_real(f);
        for (i, v) in hat.iter_mut().enumerate() {
            let lam = -sp.laplacian_symbol(&self.hinv, i).re;
            *v = if i == 0 || lam == 0.0 { Complex64::new(0.0, 0.0) } else { *v / lam };
        }
        sp.transform().inverse(&mut hat);
        Ok(hat.iter().map(|v| v.re).collect())
    }

    /// `−Δ_h f`.
    pub fn minus_laplacian(&self, f: &[f64]) -> Result<Vec<f64>> {
        let h = FiberMetric::constant(&self.h, self.spectral.nodes())?;
        let lap = self.spectral.laplace_beltrami(&h, &crate::spectral::to_complex(f))?;
        Ok(lap.iter().map(|v| -v.re).collect())
    }

    /// `G(ξ, 0)` by direct summation.
    pub fn kernel_at(&self, xi: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|(k, c)| c * (2.0 * PI * k.iter().zip(xi).map(|(a, b)| *a as f64 * b).sum::<f64>()).cos())
            .sum()
    }

    /// `G(ξ, 0)` on a uniform grid of `resolution` nodes per axis.
    pub fn kernel_on_grid(&self, resolution: usize) -> Result<(FiberGrid, Vec<f64>)> {
        let grid = FiberGrid::new(self.spectral.n(), resolution)?;
        if resolution < self.spectral.grid().size() {
            return Err(Error::InvalidArgument(format!(
                "resolution {resolution} below the fiber grid size {}",
                self.spectral.grid().size()
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (k, c) in &self.modes {
            buf[grid.spectral_index(k)] += *c;
        }
        Transform::new(grid).inverse(&mut buf);
        let scale = grid.len() as f64;
        Ok((grid, buf.iter().map(|v| v.re * scale).collect()))
    }

    fn gradient_hessian(&self, xi: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = xi.len();
        let mut g = DVector::zeros(d);
        let mut hs = DMatrix::zeros(d, d);
        for (k, c) in &self.modes {
            let ph = 2.0 * PI * k.iter().zip(xi).map(|(a, b)| *a as f64 * b).sum::<f64>();
            let (s, co) = ph.sin_cos();
            for a in 0..d {
                let ka = 2.0 * PI * k[a] as f64;
                g[a] -= c * ka * s;
                for b in 0..d {
                    hs[(a, b)] -= c * ka * 2.0 * PI * k[b] as f64 * co;
                }
            }
        }
        (g, hs)
    }

    /// `sup_z |∫ G(z, w)(−Δf)(w) dV(w) − (f(z) − mean f)|` by quadrature against the sampled kernel.
    pub fn reproducing_residual(&self, f: &[f64]) -> Result<f64> {
        let sp = &self.spectral;
        let grid = *sp.grid();
        let lf = self.minus_laplacian(f)?;
        let (_, kern) = self.kernel_on_grid(grid.size())?;
        let w = sp.chart().jacobian() * self.h.det().re / grid.len() as f64;
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let size = grid.size();
        let dims = grid.dims();
        let multi: Vec<[usize; 4]> = (0..grid.len()).map(|j| grid.multi_index(j)).collect();
        let worst = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mi = multi[i];
                let mut acc = 0.0;
                for (mj, l) in multi.iter().zip(&lf) {
                    let mut idx = 0;
                    for d in 0..dims {
                        idx = idx * size + (mi[d] + size - mj[d]) % size;
                    }
                    acc += kern[idx] * l;
                }
                (acc * w - (f[i] - mean)).abs()
            })
            .reduce(|| 0.0, f64::max);
        Ok(worst)
    }

    /// `sup_w |∫ G(z, w) dV(z)|` on the grid.
    pub fn mean_residual(&self) -> Result<f64> {
        let (grid, kern) = self.kernel_on_grid(self.spectral.grid().size())?;
        let w = self.volume / grid.len() as f64;
        Ok((kern.iter().sum::<f64>() * w).abs())
    }

    /// `sup |G(ξ, 0) − G(−ξ, 0)|` on the grid.
    pub fn symmetry_defect(&self) -> Result<f64> {
        let (grid, kern) = self.kernel_on_grid(self.spectral.grid().size())?;
        let size = grid.size();
        Ok((0..grid.len())
            .map(|i| {
                let m = grid.multi_index(i);
                let neg: Vec<usize> = (0..grid.dims()).map(|d| (size - m[d]) % size).collect();
                (kern[i] - kern[grid.flat_index(&neg)]).abs()
            })
            .fold(0.0, f64::max))
    }
}

/// `K = max(0, −min G)` from the grid minimum at `resolution`, refined by Newton steps on the
/// truncated series.
pub fn k_bound(g: &GreenOperator, resolution: usize) -> Result<KBound> {
    let (grid, kern) = g.kernel_on_grid(resolution)?;
    let (imin, grid_min) = kern
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidGrid("empty kernel grid".into()))?;
    let dims = grid.dims();
    let start: Vec<f64> = grid.coords(imin)[..dims].to_vec();
    let cell = 1.0 / resolution as f64;
    let mut xi = start.clone();
    let mut val = grid_min;
    let mut iters = 0;
    for _ in 0..30 {
        let (gr, hs) = g.gradient_hessian(&xi);
        let Some(step) = hs.lu().solve(&(-gr)) else { break };
        let cand: Vec<f64> = xi.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        if cand.iter().zip(&start).any(|(a, b)| (a - b).abs() > cell) {
            break;
        }
        let v = g.kernel_at(&cand);
        if v > val + 1e-15 * val.abs().max(1.0) {
            break;
        }
        xi = cand;
        val = v;
        iters += 1;
        if step.norm() < 1e-14 {
            break;
        }
    }
    let argmin = xi
        .iter()
        .map(|v| {
            let r = v.rem_euclid(1.0);
            if r >= 1.0 {
                0.0
            } else {
                r
            }
        })
        .collect();
    Ok(KBound { k: (-val).max(0.0), grid_min, min: val, argmin, resolution, newton_iters: iters })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem12Row {
    pub s: [f64; 2],
    pub k: f64,
    pub wp: f64,
    pub direct_image: f64,
    pub check: Theorem12Check,
    pub pass: bool,
}

/// Per-sample positivity of `ρ + K(s) ω^WP` and the pointwise bound, with `K` from the Green
/// kernel of `ρ|_{X_s}` at twice the fiber resolution.
pub fn theorem12_assemble(
    family: &Family,
    transform: &Transform,
    samples: &[Complex64],
    stencil: StencilConfig,
    config: &SolverConfig,
    tol: f64,
) -> Result<Vec<Theorem12Row>> {
    samples
        .par_iter()
        .map(|&s| {
            let p = curvature_report(family, transform, s, stencil, 0.0, config)?;
            let green = build_green(&p.rho.spectral, &p.rho.fiber)?;
            let kb = k_bound(&green, 2 * transform.grid().size())?;
            let check = theorem12_check(&p.rho, p.report.wp, kb.k);
            Ok(Theorem12Row {
                s: [s.re, s.im],
                k: kb.k,
                wp: p.report.wp,
                direct_image: p.report.direct_image,
                pass: check.combined_min_eig > 0.0 && check.pointwise_margin >= -tol,
                check,
            })
        })
        .collect()
}

/// Symbol of `∂_α` used by [`GreenOperator`], exposed for cross-checks against [`Spectral`].
pub fn first_symbol(sp: &Spectral, op: Deriv, k: &[i64]) -> Complex64 {
    let c = match op {
        Deriv::Z(a) => sp.chart().dz_coeffs(a),
        Deriv::Zb(a) => sp.chart().dzb_coeffs(a),
    };
    k.iter().enumerate().map(|(d, kd)| c[d] * Complex64::new(0.0, 2.0 * PI * *kd as f64)).sum()
}
