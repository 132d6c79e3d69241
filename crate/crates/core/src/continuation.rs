//! ε-continuation `(ω + dd^c φ_ε)ⁿ = e^{εφ_ε + η} ωⁿ` down to ε = 0.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Transform;
use crate::models::Family;
use crate::solver::{compute_eta, solve_ma, MaProblem, MaSolution, Normalization, SolverConfig};
use crate::spectral::{sup_norm_real, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub epsilon: f64,
    /// `sup |φ_ε − φ_0|` against the KE-normalized ε = 0 solution.
    pub sup_diff: f64,
    /// `|∫ φ_ε e^η ωⁿ|`.
    pub ke_integral: f64,
    pub sup_phi: f64,
    pub sup_laplacian: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPath {
    pub s: [f64; 2],
    pub rows: Vec<PathRow>,
    /// Leading exponent `p` of `sup|φ_ε − φ_0| ≈ ε^p (c0 + c1 ε + c2 ε²)`.
    pub order: f64,
    /// Standard error of `order`.
    pub order_stderr: f64,
    /// Plain log-log slope over the positive entries.
    pub loglog_slope: f64,
    /// `max_ε |∫ φ_ε e^η ωⁿ| / ε` over the positive entries.
    pub c_fit: f64,
    /// `max_ε sup|φ_ε|` along the path.
    pub sup_phi_max: f64,
    /// Set when a solve failed; `rows` then holds the completed part.
    pub failure: Option<String>,
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty ε schedule".into()));
    }
    if schedule.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidArgument("ε schedule entries must be finite and >= 0".into()));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("ε schedule must be strictly decreasing".into()));
    }
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pts.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub order: f64,
    pub stderr: f64,
    /// Relative least-squares residual at the optimum.
    pub residual: f64,
}

/// Relative residual of the best `x^p Σ_{j≤k} c_j x^j` fit for fixed `p`.
fn profile_residual(pts: &[(f64, f64)], p: f64, k: usize) -> f64 {
    let a = DMatrix::from_fn(pts.len(), k + 1, |i, j| pts[i].0.powf(p + j as f64) / pts[i].1);
    let b = DVector::from_element(pts.len(), 1.0);
    match a.clone().svd(true, true).solve(&b, 1e-14) {
        Ok(c) => (a * c - b).norm_squared(),
        Err(_) => f64::INFINITY,
    }
}

/// Leading exponent of `y ≈ x^p (c_0 + … + c_k x^k)` by profiled least squares on `p ∈ [0, 4]`.
///
/// The standard error comes from the curvature of the profile at the optimum.
pub fn fit_order(pts: &[(f64, f64)], k: usize) -> OrderFit {
    let pts: Vec<(f64, f64)> = pts.iter().copied().filter(|(x, y)| *x > 0.0 && *y > 0.0).collect();
    if pts.len() < k + 2 {
        return OrderFit { order: loglog_slope(&pts), stderr: f64::INFINITY, residual: f64::NAN };
    }
    let f = |p: f64| profile_residual(&pts, p, k);
    // An exact fit at p also fits exactly at p − 1, …, with vanishing leading coefficients, so
    // every local minimum of the profile is refined and the largest near-optimal one wins.
    let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
    let vals: Vec<f64> = grid.iter().map(|p| f(*p)).collect();
    let refine = |c: f64| {
        let (mut lo, mut hi) = ((c - 0.01).max(0.0), (c + 0.01).min(4.0));
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let (m1, m2) = (hi - r * (hi - lo), lo + r * (hi - lo));
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let p = 0.5 * (lo + hi);
        (p, f(p))
    };
    let minima: Vec<(f64, f64)> = (0..grid.len())
        .filter(|&i| (i == 0 || vals[i] <= vals[i - 1]) && (i + 1 == grid.len() || vals[i] <= vals[i + 1]))
        .map(|i| refine(grid[i]))
        .collect();
    let best = minima.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let Some(&(p, s)) = minima.iter().filter(|m| m.1 <= 10.0 * best + 1e-24).max_by(|a, b| a.0.total_cmp(&b.0)) else {
        return OrderFit { order: loglog_slope(&pts), stderr: f64::INFINITY, residual: f64::NAN };
    };
    let dof = pts.len().saturating_sub(k + 2).max(1) as f64;
    let d = 1e-4;
    let curv = (f(p + d) - 2.0 * s + f(p - d)) / (d * d);
    let stderr = if curv > 0.0 { (2.0 * s / dof / curv).sqrt() } else { f64::INFINITY };
    OrderFit { order: p, stderr, residual: s }
}

/// Warm-started solves along a strictly decreasing schedule at base point `s`.
pub fn epsilon_continuation(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    schedule: &[f64],
    config: &SolverConfig,
) -> Result<EpsilonPath> {
    validate_schedule(schedule)?;
    let omega = family.omega(transform, s)?;
    let sp = &omega.spectral;
    let eta = compute_eta(&omega.g);
    let weight: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let solve = |eps: f64, init: Option<&[f64]>| -> Result<MaSolution> {
        let problem = MaProblem::new(omega.g.clone(), eta.clone(), eps);
        solve_ma(sp, &problem, Normalization::KeVolume, config, init)
    };
    let reference = solve(0.0, None)?;
    let mut rows = vec![];
    let mut failure = None;
    let mut prev: Option<Vec<f64>> = None;
    for &eps in schedule {
        let sol = match solve(eps, prev.as_deref()) {
            Ok(sol) => sol,
            Err(e) => {
                failure = Some(format!("ε = {eps}: {e}"));
                break;
            }
        };
        let diff: Vec<f64> = sol.phi.iter().zip(&reference.phi).map(|(a, b)| a - b).collect();
        let ke: Vec<f64> = sol.phi.iter().zip(&weight).map(|(p, w)| p * w).collect();
        rows.push(PathRow {
            epsilon: eps,
            sup_diff: sup_norm_real(&diff),
            ke_integral: sp.integrate(&ke, Volume::Metric(&omega.g)).abs(),
            sup_phi: sol.diagnostics.sup_phi,
            sup_laplacian: sol.diagnostics.sup_laplacian,
            newton_iters: sol.newton_iters,
            residual: sol.residual_sup,
        });
        prev = Some(sol.phi);
    }
    let positive: Vec<&PathRow> = rows.iter().filter(|r| r.epsilon > 0.0).collect();
    let pts: Vec<(f64, f64)> = positive.iter().map(|r| (r.epsilon, r.sup_diff)).collect();
    let fit = fit_order(&pts, 2);
    let c_fit = positive.iter().map(|r| r.ke_integral / r.epsilon).fold(0.0, f64::max);
    let sup_phi_max = rows.iter().map(|r| r.sup_phi).fold(0.0, f64::max);
    Ok(EpsilonPath {
        s: [s.re, s.im],
        rows,
        order: fit.order,
        order_stderr: fit.stderr,
        loglog_slope: loglog_slope(&pts),
        c_fit,
        sup_phi_max,
        failure,
    })
}
