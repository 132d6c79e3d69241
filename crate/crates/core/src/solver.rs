//! Fiberwise complex Monge-Ampère solves and the linearized elliptic solver.
//!
//! The equation on one fiber is `log det(g + ∂∂̄φ) − log det g = εφ + η + f`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CMat, FiberMetric, HermitianField};
use crate::gmres::{gmres, GmresConfig};
use crate::spectral::{sup_norm_real, to_complex, trace_against, Spectral, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub damping_floor: f64,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
    pub gmres_rel_tol: f64,
    /// Extra full Newton steps after convergence, kept while each halves the residual.
    pub polish_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iters: 50,
            damping_floor: 2f64.powi(-20),
            gmres_restart: 40,
            gmres_max_iters: 800,
            gmres_rel_tol: 1e-10,
            polish_steps: 3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(Error::InvalidArgument(format!("tol = {} must lie in (0, 1e-4]", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if !(self.damping_floor > 0.0 && self.damping_floor < 1.0) {
            return Err(Error::InvalidArgument("damping_floor must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn gmres(&self) -> GmresConfig {
        GmresConfig { restart: self.gmres_restart, max_iters: self.gmres_max_iters, rel_tol: self.gmres_rel_tol, abs_tol: 1e-300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `∫ φ e^η ωⁿ = 0`.
    KeVolume,
    /// `∫ φ ωⁿ = 0`.
    ReferenceVolume,
    /// No shift (ε > 0).
    None,
}

#[derive(Debug, Clone)]
pub struct MaProblem {
    pub g: FiberMetric,
    pub eta: Vec<f64>,
    pub epsilon: f64,
    pub extra_f: Vec<f64>,
}

impl MaProblem {
    pub fn new(g: FiberMetric, eta: Vec<f64>, epsilon: f64) -> Self {
        let nodes = g.nodes();
        Self { g, eta, epsilon, extra_f: vec![0.0; nodes] }
    }

    pub fn with_extra_f(mut self, f: Vec<f64>) -> Self {
        self.extra_f = f;
        self
    }

    /// `∫ e^{η+f} ωⁿ / ∫ ωⁿ − 1`.
    pub fn volume_defect(&self, sp: &Spectral) -> f64 {
        let w: Vec<f64> = self.eta.iter().zip(&self.extra_f).map(|(a, b)| (a + b).exp()).collect();
        sp.integrate(&w, Volume::Metric(&self.g)) / sp.volume(Volume::Metric(&self.g)) - 1.0
    }

    fn validate(&self, sp: &Spectral) -> Result<()> {
        let nodes = sp.nodes();
        if self.g.nodes() != nodes || self.eta.len() != nodes || self.extra_f.len() != nodes {
            return Err(Error::InvalidField("problem fields do not match the grid".into()));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon = {} must be >= 0", self.epsilon)));
        }
        if self.eta.iter().chain(&self.extra_f).any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite eta or extra_f".into()));
        }
        if self.epsilon == 0.0 {
            let defect = self.volume_defect(sp) * sp.volume(Volume::Metric(&self.g));
            if defect.abs() >= 1e-10 {
                return Err(Error::Normalization(format!("|∫e^(η+f)ωⁿ − ∫ωⁿ| = {:.3e}", defect.abs())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sup_phi: f64,
    /// `sup |Δ_g φ|`.
    pub sup_laplacian: f64,
    /// `min (n + Δ_g φ)`.
    pub min_trace: f64,
    /// `max (n + Δ_g φ)`.
    pub max_trace: f64,
    /// Constant absorbed into `η` to make the ε = 0 problem exactly solvable on the grid.
    pub compatibility_shift: f64,
    pub gmres_iters: usize,
}

#[derive(Debug, Clone)]
pub struct MaSolution {
    pub phi: Vec<f64>,
    pub residual_sup: f64,
    pub newton_iters: usize,
    pub normalization: Normalization,
    pub diagnostics: Diagnostics,
    /// `h = g + ∂∂̄φ`.
    pub h: FiberMetric,
}

/// `η = −log det g + log(mean det g)`, so that `∫ e^η ωⁿ = ∫ ωⁿ` and `e^η ωⁿ` is a flat volume.
pub fn compute_eta(g: &FiberMetric) -> Vec<f64> {
    let det = g.det();
    let mean = det.iter().sum::<f64>() / det.len() as f64;
    det.iter().map(|d| mean.ln() - d.ln()).collect()
}

struct Evaluation {
    h: FiberMetric,
    f: Vec<f64>,
}

fn evaluate(sp: &Spectral, problem: &MaProblem, eta_shift: f64, phi: &[f64]) -> Result<Option<Evaluation>> {
    let hess = sp.ddbar(&to_complex(phi))?;
    let raw = problem.g.g().add(&hess);
    let h = match FiberMetric::new(hermitize(&raw)) {
        Ok(h) => h,
        Err(Error::Definiteness(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let eps = problem.epsilon;
    let f = (0..phi.len())
        .map(|i| {
            h.det()[i].ln() - problem.g.det()[i].ln() - eps * phi[i] - problem.eta[i] - eta_shift - problem.extra_f[i]
        })
        .collect();
    Ok(Some(Evaluation { h, f }))
}

/// Restores exact Hermitian symmetry lost to roundoff in spectral second derivatives.
pub(crate) fn hermitize(f: &HermitianField) -> HermitianField {
    f.map(|m| {
        let mut out = *m;
        for a in 0..m.d {
            out.a[a][a] = Complex64::new(m.a[a][a].re, 0.0);
            for b in (a + 1)..m.d {
                let v = 0.5 * (m.a[a][b] + m.a[b][a].conj());
                out.a[a][b] = v;
                out.a[b][a] = v.conj();
            }
        }
        out
    })
}

fn l2(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Applies `Δ_h u − ε u`.
pub fn apply_operator(sp: &Spectral, h: &FiberMetric, eps: f64, u: &[f64]) -> Result<Vec<f64>> {
    let hess = sp.ddbar(&to_complex(u))?;
    Ok(trace_against(h.inv(), &hess).iter().zip(u).map(|(t, ui)| t.re - eps * ui).collect())
}

/// Solves `(Δ_h − ε) δ = r`. For ε = 0 the bordered system `Δ_h δ + λ = r`, `mean δ = 0` is solved
/// and `λ` is returned alongside.
fn solve_jacobian(sp: &Spectral, h: &FiberMetric, eps: f64, r: &[f64], cfg: &GmresConfig) -> Result<(Vec<f64>, f64, usize)> {
    let m = r.len();
    let hbar: CMat = h.g().mean();
    if eps > 0.0 {
        let apply = |x: &[f64]| apply_operator(sp, h, eps, x).expect("finite iterate");
        let pre = |v: &[f64]| {
            sp.solve_constant(&hbar, eps, &to_complex(v)).expect("constant solve").iter().map(|c| c.re).collect::<Vec<f64>>()
        };
        let (x, out) = gmres(apply, pre, r, None, cfg);
        if !out.residual.is_finite() {
            return Err(Error::LinearSolve("non-finite residual".into()));
        }
        return Ok((x, 0.0, out.iterations));
    }
    let apply = |x: &[f64]| {
        let mut out = apply_operator(sp, h, 0.0, &x[..m]).expect("finite iterate");
        for v in out.iter_mut() {
            *v += x[m];
        }
        out.push(x[..m].iter().sum::<f64>() / m as f64);
        out
    };
    let pre = |v: &[f64]| {
        let mean = v[..m].iter().sum::<f64>() / m as f64;
        let centered: Vec<Complex64> = v[..m].iter().map(|x| Complex64::new(x - mean, 0.0)).collect();
        let mut out: Vec<f64> =
            sp.solve_constant(&hbar, 0.0, &centered).expect("constant solve").iter().map(|c| c.re + v[m]).collect();
        out.push(mean);
        out
    };
    let mut rhs = r.to_vec();
    rhs.push(0.0);
    let (x, out) = gmres(apply, pre, &rhs, None, cfg);
    if !out.residual.is_finite() {
        return Err(Error::LinearSolve("non-finite residual".into()));
    }
    Ok((x[..m].to_vec(), x[m], out.iterations))
}

/// Newton solve of the fiber Monge-Ampère equation.
pub fn solve_ma(
    sp: &Spectral,
    problem: &MaProblem,
    normalization: Normalization,
    config: &SolverConfig,
    initial: Option<&[f64]>,
) -> Result<MaSolution> {
    config.validate()?;
    problem.validate(sp)?;
    let nodes = sp.nodes();
    let eps = problem.epsilon;
    let normalization = if eps > 0.0 { Normalization::None } else { normalization };
    let eta_shift = if eps == 0.0 { -problem.volume_defect(sp).ln_1p() } else { 0.0 };
    let gcfg = config.gmres();

    let mut phi = match initial {
        Some(p) if p.len() == nodes => p.to_vec(),
        Some(_) => return Err(Error::InvalidField("initial guess does not match the grid".into())),
        None => vec![0.0; nodes],
    };
    let mut ev = evaluate(sp, problem, eta_shift, &phi)?
        .ok_or_else(|| Error::Definiteness("initial guess is not admissible".into()))?;
    let mut iters = 0;
    let mut gmres_iters = 0;
    let mut res = sup_norm_real(&ev.f);
    while res >= config.tol {
        if iters >= config.max_iters {
            return Err(Error::Divergence { iters, residual: res });
        }
        let rhs: Vec<f64> = ev.f.iter().map(|v| -v).collect();
        let (delta, _, gi) = solve_jacobian(sp, &ev.h, eps, &rhs, &gcfg)?;
        gmres_iters += gi;
        let base = l2(&ev.f);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + alpha * d).collect();
            if let Some(next) = evaluate(sp, problem, eta_shift, &trial)? {
                if l2(&next.f) < (1.0 - 1e-4 * alpha) * base {
                    phi = trial;
                    ev = next;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < config.damping_floor {
                return Err(Error::DampingFloor { iters, residual: res });
            }
        }
        iters += 1;
        res = sup_norm_real(&ev.f);
        if !res.is_finite() {
            return Err(Error::Divergence { iters, residual: res });
        }
    }
    for _ in 0..config.polish_steps {
        if res == 0.0 {
            break;
        }
        let rhs: Vec<f64> = ev.f.iter().map(|v| -v).collect();
        let (delta, _, gi) = solve_jacobian(sp, &ev.h, eps, &rhs, &gcfg)?;
        gmres_iters += gi;
        let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + d).collect();
        match evaluate(sp, problem, eta_shift, &trial)? {
            Some(next) if sup_norm_real(&next.f) < 0.5 * res => {
                phi = trial;
                ev = next;
                res = sup_norm_real(&ev.f);
            }
            _ => break,
        }
    }

    let shift = match normalization {
        Normalization::None => 0.0,
        Normalization::KeVolume => sp.integrate(&phi, Volume::Metric(&ev.h)) / sp.volume(Volume::Metric(&ev.h)),
        Normalization::ReferenceVolume => {
            sp.integrate(&phi, Volume::Metric(&problem.g)) / sp.volume(Volume::Metric(&problem.g))
        }
    };
    for p in phi.iter_mut() {
        *p -= shift;
    }
    let lap: Vec<f64> = apply_operator(sp, &problem.g, 0.0, &phi)?;
    let n = sp.n() as f64;
    let diagnostics = Diagnostics {
        sup_phi: sup_norm_real(&phi),
        sup_laplacian: sup_norm_real(&lap),
        min_trace: lap.iter().map(|l| n + l).fold(f64::INFINITY, f64::min),
        max_trace: lap.iter().map(|l| n + l).fold(f64::NEG_INFINITY, f64::max),
        compatibility_shift: eta_shift,
        gmres_iters,
    };
    Ok(MaSolution { phi, residual_sup: res, newton_iters: iters, normalization, diagnostics, h: ev.h })
}

/// Solves `−Δ_h u + ε u = R`. For ε = 0, `R` must integrate to zero against `det h` and the
/// solution with `∫ u det h = 0` is returned.
pub fn linearized_solve(sp: &Spectral, h: &FiberMetric, eps: f64, r: &[f64], config: &SolverConfig) -> Result<Vec<f64>> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {eps} must be >= 0")));
    }
    if r.len() != sp.nodes() || r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidField("right-hand side does not match the grid".into()));
    }
    let vol = sp.volume(Volume::Metric(h));
    let mut target = r.to_vec();
    if eps == 0.0 {
        let total = sp.integrate(r, Volume::Metric(h));
        let scale = sp.integrate(&r.iter().map(|v| v.abs()).collect::<Vec<_>>(), Volume::Metric(h));
        if total.abs() > 1e-9 * (1.0 + scale) {
            return Err(Error::Solvability(format!("∫ R det h = {total:.3e}")));
        }
        let mean = total / vol;
        for v in target.iter_mut() {
            *v -= mean;
        }
    }
    let rhs: Vec<f64> = target.iter().map(|v| -v).collect();
    let mut gcfg = config.gmres();
    gcfg.rel_tol = gcfg.rel_tol.min(1e-13);
    let (mut u, _, _) = solve_jacobian(sp, h, eps, &rhs, &gcfg)?;
    if eps == 0.0 {
        let shift = sp.integrate(&u, Volume::Metric(h)) / vol;
        for v in u.iter_mut() {
            *v -= shift;
        }
    }
    let check = apply_operator(sp, h, eps, &u)?;
    let resid = check.iter().zip(&target).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    if resid > 1e-10 * (1.0 + sup_norm_real(&target)) {
        return Err(Error::LinearSolve(format!("residual {resid:.3e} after GMRES")));
    }
    Ok(u)
}
