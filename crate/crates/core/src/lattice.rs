//! Fiber solves on a small lattice of base points and assembly of `ρ = ω + dd^c φ`.
//!
//! Base derivatives are central differences at fixed lattice coordinate `ξ`, on the points
//! `s0 + h_s (j + i k)`. With Richardson refinement the `2h_s` points are used as well.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CMat, FiberMetric};
use crate::grid::Transform;
use crate::models::{full_matrix, Family, OmegaKind, OmegaSample};
use crate::solver::{compute_eta, solve_ma, MaProblem, MaSolution, Normalization, SolverConfig};
use crate::spectral::{sup_norm_real, Deriv, Spectral, Volume};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub type Offset = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StencilConfig {
    pub h_s: f64,
    pub richardson: bool,
}

impl Default for StencilConfig {
    fn default() -> Self {
        Self { h_s: 1e-3, richardson: false }
    }
}

impl StencilConfig {
    pub fn new(h_s: f64, richardson: bool) -> Self {
        Self { h_s, richardson }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_s > 0.0 && self.h_s < 0.1) {
            return Err(Error::InvalidArgument(format!("h_s = {} must lie in (0, 0.1)", self.h_s)));
        }
        Ok(())
    }

    /// Offsets needed to differentiate at each of `points`.
    pub fn offsets(&self, points: &[Offset]) -> Vec<Offset> {
        let reach = if self.richardson { 2 } else { 1 };
        let mut out = vec![];
        for &(j, k) in points {
            out.push((j, k));
            for r in 1..=reach {
                out.extend([(j + r, k), (j - r, k), (j, k + r), (j, k - r)]);
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

/// `∂_s f`, `∂_s̄ f`, `∂_s∂_s̄ f` at fixed `ξ`.
#[derive(Debug, Clone)]
pub struct BaseDerivs {
    pub ds: Vec<Complex64>,
    pub dsb: Vec<Complex64>,
    pub dssb: Vec<Complex64>,
}

fn combine(a: &[Complex64], b: &[Complex64], ca: f64, cb: f64) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| ca * x + cb * y).collect()
}

/// Central differences of a field sampled at `f(j, k) = F(s0 + h (j + i k))`.
pub fn stencil_derivatives<F>(h: f64, richardson: bool, f: F) -> Result<BaseDerivs>
where
    F: Fn(i32, i32) -> Result<Vec<Complex64>>,
{
    let f0 = f(0, 0)?;
    let axis = |r: i32| -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
        let hr = h * r as f64;
        let (ap, am, bp, bm) = (f(r, 0)?, f(-r, 0)?, f(0, r)?, f(0, -r)?);
        let da = combine(&ap, &am, 0.5 / hr, -0.5 / hr);
        let db = combine(&bp, &bm, 0.5 / hr, -0.5 / hr);
        let laa: Vec<Complex64> = (0..f0.len()).map(|i| (ap[i] - 2.0 * f0[i] + am[i]) / (hr * hr)).collect();
        let lbb: Vec<Complex64> = (0..f0.len()).map(|i| (bp[i] - 2.0 * f0[i] + bm[i]) / (hr * hr)).collect();
        Ok((da, db, laa, lbb))
    };
    let (mut da, mut db, mut laa, mut lbb) = axis(1)?;
    if richardson {
        let (da2, db2, laa2, lbb2) = axis(2)?;
        da = combine(&da, &da2, 4.0 / 3.0, -1.0 / 3.0);
        db = combine(&db, &db2, 4.0 / 3.0, -1.0 / 3.0);
        laa = combine(&laa, &laa2, 4.0 / 3.0, -1.0 / 3.0);
        lbb = combine(&lbb, &lbb2, 4.0 / 3.0, -1.0 / 3.0);
    }
    Ok(BaseDerivs {
        ds: da.iter().zip(&db).map(|(a, b)| 0.5 * (a - I * b)).collect(),
        dsb: da.iter().zip(&db).map(|(a, b)| 0.5 * (a + I * b)).collect(),
        dssb: laa.iter().zip(&lbb).map(|(a, b)| 0.25 * (a + b)).collect(),
    })
}

/// Scalar version of [`stencil_derivatives`].
pub fn scalar_derivatives<F>(h: f64, richardson: bool, f: F) -> Result<(Complex64, Complex64, Complex64)>
where
    F: Fn(Complex64) -> Result<f64>,
{
    let d = stencil_derivatives(h, richardson, |j, k| {
        Ok(vec![Complex64::new(f(Complex64::new(j as f64 * h, k as f64 * h))?, 0.0)])
    })?;
    Ok((d.ds[0], d.dsb[0], d.dssb[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    ModelPlusPotential,
    AssembledRho,
}

/// Components of a real (1,1)-form on one fiber, in the periodic frame.
#[derive(Debug, Clone)]
pub struct FamilyForm {
    pub s: Complex64,
    pub provenance: Provenance,
    pub spectral: Spectral,
    /// Fiber block, positive-definite.
    pub fiber: FiberMetric,
    /// `τ_{sβ̄}` per `β`.
    pub t_s: Vec<Vec<Complex64>>,
    /// `τ_{ss̄}`.
    pub t_ss: Vec<f64>,
    /// `τ'/(τ − τ̄)` of the chart (zero for constant moduli).
    pub kappa: Complex64,
    /// Base step used for mixed components, if any.
    pub h_s: Option<f64>,
}

impl FamilyForm {
    pub fn from_omega(o: &OmegaSample, kind: Option<OmegaKind>) -> Self {
        let provenance = match kind {
            Some(OmegaKind::ModelPlusPotential) => Provenance::ModelPlusPotential,
            _ => Provenance::Model,
        };
        Self {
            s: o.s,
            provenance,
            spectral: o.spectral.clone(),
            fiber: o.g.clone(),
            t_s: o.t_s.clone(),
            t_ss: o.t_ss.clone(),
            kappa: o.kappa,
            h_s: None,
        }
    }

    pub fn n(&self) -> usize {
        self.fiber.n()
    }

    pub fn nodes(&self) -> usize {
        self.fiber.nodes()
    }

    /// `(n+1)×(n+1)` component matrix at a node (base index last).
    pub fn full_matrix(&self, i: usize) -> CMat {
        full_matrix(self.fiber.g(), &self.t_s, &self.t_ss, i)
    }

    /// Minimum over nodes of the smallest eigenvalue of the full component matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.nodes()).map(|i| self.full_matrix(i).min_eigenvalue()).fold(f64::INFINITY, f64::min)
    }

    pub fn hermitian_defect(&self) -> f64 {
        (0..self.nodes()).map(|i| self.full_matrix(i).hermitian_defect()).fold(0.0, f64::max)
    }

    /// Adds `c · i ds∧ds̄`.
    pub fn add_base(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in out.t_ss.iter_mut() {
            *v += c;
        }
        out
    }
}

/// Minimum eigenvalue over nodes of a fiber metric.
pub fn min_eig_hermitian(g: &FiberMetric) -> f64 {
    g.min_eigenvalue()
}

/// One solved fiber of the lattice.
#[derive(Debug, Clone)]
pub struct FiberSolve {
    pub offset: Offset,
    pub omega: OmegaSample,
    pub eta: Vec<f64>,
    pub solution: MaSolution,
    /// Unnormalized spectrum of `φ` with roundoff-level modes removed, used for base differences.
    pub phi_hat: Vec<Complex64>,
}

impl FiberSolve {
    pub fn phi(&self) -> &[f64] {
        &self.solution.phi
    }

    pub fn h(&self) -> &FiberMetric {
        &self.solution.h
    }

    pub fn spectral(&self) -> &Spectral {
        &self.omega.spectral
    }

    /// Filtered spectrum of `op φ` (`None` is `φ` itself).
    pub fn phi_spectrum(&self, op: Option<Deriv>) -> Vec<Complex64> {
        match op {
            None => self.phi_hat.clone(),
            Some(d) => self.phi_hat.iter().enumerate().map(|(k, v)| v * self.spectral().symbol1(d, k)).collect(),
        }
    }
}

/// Relative amplitude below which a Fourier mode absent on every lattice fiber is dropped.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Spectra of the fields with the modes whose amplitude stays below [`ROUNDOFF_FLOOR`] (relative to
/// the largest amplitude) on every field set to zero. Base second differences divide by `h_s²`;
/// differencing masked spectra keeps rounding noise in absent modes out of the result.
pub fn masked_spectra(transform: &Transform, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
    let spectra: Vec<Vec<Complex64>> = fields.iter().map(|f| transform.forward_real(f)).collect();
    let len = transform.grid().len();
    let peak: Vec<f64> = (0..len).map(|k| spectra.iter().map(|s| s[k].norm()).fold(0.0, f64::max)).collect();
    let top = peak.iter().copied().fold(0.0, f64::max);
    spectra
        .into_iter()
        .map(|mut s| {
            for (v, p) in s.iter_mut().zip(&peak) {
                if *p <= ROUNDOFF_FLOOR * top {
                    *v = ZERO;
                }
            }
            s
        })
        .collect()
}

fn inverse_derivs(transform: &Transform, mut d: BaseDerivs) -> BaseDerivs {
    transform.inverse(&mut d.ds);
    transform.inverse(&mut d.dsb);
    transform.inverse(&mut d.dssb);
    d
}

/// Fiber solves at `s0 + h_s (j + i k)` for all offsets needed by the requested derivative points.
#[derive(Debug, Clone)]
pub struct BaseLattice {
    pub center: Complex64,
    pub stencil: StencilConfig,
    pub epsilon: f64,
    pub normalization: Normalization,
    omega_kind: Option<OmegaKind>,
    transform: Transform,
    fibers: BTreeMap<Offset, FiberSolve>,
}

fn solve_fiber(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    epsilon: f64,
    normalization: Normalization,
    config: &SolverConfig,
    initial: Option<&[f64]>,
) -> Result<(OmegaSample, Vec<f64>, MaSolution)> {
    let omega = family.omega(transform, s)?;
    let eta = compute_eta(&omega.g);
    let problem = MaProblem::new(omega.g.clone(), eta.clone(), epsilon);
    let sol = solve_ma(&omega.spectral, &problem, normalization, config, initial)?;
    Ok((omega, eta, sol))
}

impl BaseLattice {
    /// Solves the fiber equation at `center` and at every offset needed to differentiate at
    /// `points`. The center is solved first; the rest start from its solution.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        family: &Family,
        transform: &Transform,
        center: Complex64,
        stencil: StencilConfig,
        points: &[Offset],
        epsilon: f64,
        normalization: Normalization,
        config: &SolverConfig,
    ) -> Result<Self> {
        stencil.validate()?;
        let s_of = |o: Offset| center + stencil.h_s * Complex64::new(o.0 as f64, o.1 as f64);
        let (omega, eta, sol) = solve_fiber(family, transform, center, epsilon, normalization, config, None)?;
        let warm = sol.phi.clone();
        let mut fibers = BTreeMap::new();
        fibers.insert((0, 0), FiberSolve { offset: (0, 0), omega, eta, phi_hat: vec![], solution: sol });
        let rest: Vec<Offset> = stencil.offsets(points).into_iter().filter(|o| *o != (0, 0)).collect();
        let solved: Vec<Result<FiberSolve>> = rest
            .par_iter()
            .map(|&o| {
                let (omega, eta, solution) =
                    solve_fiber(family, transform, s_of(o), epsilon, normalization, config, Some(&warm))?;
                Ok(FiberSolve { offset: o, omega, eta, phi_hat: vec![], solution })
            })
            .collect();
        for f in solved {
            let f = f?;
            fibers.insert(f.offset, f);
        }
        let keys: Vec<Offset> = fibers.keys().copied().collect();
        let fields: Vec<&[f64]> = keys.iter().map(|k| fibers[k].phi()).collect();
        let masked = masked_spectra(transform, &fields);
        for (k, f) in keys.iter().zip(masked) {
            fibers.get_mut(k).expect("key").phi_hat = f;
        }
        Ok(Self {
            center,
            stencil,
            epsilon,
            normalization,
            omega_kind: family.spec().omega,
            transform: transform.clone(),
            fibers,
        })
    }

    pub fn s_of(&self, o: Offset) -> Complex64 {
        self.center + self.stencil.h_s * Complex64::new(o.0 as f64, o.1 as f64)
    }

    pub fn fiber(&self, o: Offset) -> Result<&FiberSolve> {
        self.fibers.get(&o).ok_or_else(|| Error::Stencil(format!("no fiber at offset {o:?}")))
    }

    pub fn fibers(&self) -> impl Iterator<Item = &FiberSolve> {
        self.fibers.values()
    }

    pub fn center_fiber(&self) -> &FiberSolve {
        &self.fibers[&(0, 0)]
    }

    /// Base derivatives at `p` of a field computed on each fiber.
    pub fn derivatives<F>(&self, p: Offset, f: F) -> Result<BaseDerivs>
    where
        F: Fn(&FiberSolve) -> Result<Vec<Complex64>>,
    {
        stencil_derivatives(self.stencil.h_s, self.stencil.richardson, |j, k| f(self.fiber((p.0 + j, p.1 + k))?))
    }

    /// Base derivatives at `p` of `op φ`, differenced on filtered spectra.
    pub fn phi_derivatives(&self, p: Offset, op: Option<Deriv>) -> Result<BaseDerivs> {
        let d = self.derivatives(p, |f| Ok(f.phi_spectrum(op)))?;
        Ok(inverse_derivs(&self.transform, d))
    }

    /// `ρ = ω + dd^c φ` at lattice point `p`.
    pub fn assemble(&self, p: Offset) -> Result<FamilyForm> {
        let fib = self.fiber(p)?;
        let n = fib.h().n();
        let phi_d = self.phi_derivatives(p, None)?;
        let mut t_s = fib.omega.t_s.clone();
        for (b, row) in t_s.iter_mut().enumerate() {
            let d = self.phi_derivatives(p, Some(Deriv::Zb(b)))?;
            for (v, e) in row.iter_mut().zip(&d.ds) {
                *v += e;
            }
        }
        let t_ss = fib.omega.t_ss.iter().zip(&phi_d.dssb).map(|(a, b)| a + b.re).collect();
        debug_assert_eq!(t_s.len(), n);
        Ok(FamilyForm {
            s: self.s_of(p),
            provenance: Provenance::AssembledRho,
            spectral: fib.omega.spectral.clone(),
            fiber: fib.h().clone(),
            t_s,
            t_ss,
            kappa: fib.omega.kappa,
            h_s: Some(self.stencil.h_s),
        })
    }

    /// The reference form `ω` at lattice point `p`.
    pub fn omega_form(&self, p: Offset) -> Result<FamilyForm> {
        Ok(FamilyForm::from_omega(&self.fiber(p)?.omega, self.omega_kind))
    }

    /// `sup_i |det h − mean det h| / mean det h` over all lattice fibers.
    pub fn ricci_residual(&self) -> f64 {
        self.fibers
            .values()
            .map(|f| {
                let det = f.h().det();
                let mean = det.iter().sum::<f64>() / det.len() as f64;
                det.iter().map(|d| (d - mean).abs() / mean).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Mixed second-derivative consistency of assembled `ρ` at `p`:
    /// `sup |e_s h_{αβ̄} − ∂_α ρ_{sβ̄} + κ h_{αβ̄}|`.
    pub fn closedness_residual(&self, p: Offset) -> Result<f64> {
        let rho = self.assemble(p)?;
        let n = rho.n();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let d = self.derivatives(p, |f| Ok(f.h().g().component(a, b)))?;
                let dz = rho.spectral.derivative(&rho.t_s[b], Deriv::Z(a))?;
                let hab = rho.fiber.g().component(a, b);
                let k = if n == 1 { rho.kappa } else { ZERO };
                for i in 0..rho.nodes() {
                    worst = worst.max((d.ds[i] - dz[i] + k * hab[i]).norm());
                }
            }
        }
        Ok(worst)
    }
}

/// Mixed second-derivative consistency of `ω` itself at `s`, with `e_s g` by central differences.
pub fn omega_closedness(family: &Family, transform: &Transform, s: Complex64, stencil: StencilConfig) -> Result<f64> {
    let o = family.omega(transform, s)?;
    let n = family.n();
    let samples: BTreeMap<Offset, OmegaSample> = stencil
        .offsets(&[(0, 0)])
        .into_iter()
        .map(|off| Ok((off, family.omega(transform, s + stencil.h_s * Complex64::new(off.0 as f64, off.1 as f64))?)))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let d = stencil_derivatives(stencil.h_s, stencil.richardson, |j, k| Ok(samples[&(j, k)].g.g().component(a, b)))?;
            let dz = o.spectral.derivative(&o.t_s[b], Deriv::Z(a))?;
            let g = o.g.g().component(a, b);
            let k = if n == 1 { o.kappa } else { ZERO };
            for i in 0..g.len() {
                worst = worst.max((d.ds[i] - dz[i] + k * g[i]).norm());
            }
        }
    }
    Ok(worst)
}

/// `|∂_s ∫ ωⁿ|` by central differences of fiber volumes.
pub fn volume_drift(family: &Family, transform: &Transform, s: Complex64, stencil: StencilConfig) -> Result<f64> {
    let (ds, _, _) = scalar_derivatives(stencil.h_s, stencil.richardson, |d| {
        let o = family.omega(transform, s + d)?;
        Ok(o.spectral.volume(Volume::Metric(&o.g)))
    })?;
    Ok(ds.norm())
}

/// Fiberwise Ricci-flat form at the center of a freshly solved ε = 0 lattice.
#[derive(Debug, Clone)]
pub struct RicciFlatFamily {
    pub lattice: BaseLattice,
    pub rho: FamilyForm,
    /// `sup |det h − mean| / mean` over the lattice.
    pub ricci_residual: f64,
}

pub fn fiberwise_ricci_flat(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    stencil: StencilConfig,
    normalization: Normalization,
    config: &SolverConfig,
) -> Result<RicciFlatFamily> {
    let lattice = BaseLattice::solve(family, transform, s, stencil, &[(0, 0)], 0.0, normalization, config)?;
    let rho = lattice.assemble((0, 0))?;
    let ricci_residual = lattice.ricci_residual();
    Ok(RicciFlatFamily { lattice, rho, ricci_residual })
}

/// Semi-flat normalization `ψ = φ − A`, `A = ∫ φ ωⁿ / ∫ ωⁿ`.
#[derive(Debug, Clone)]
pub struct SemiflatShift {
    pub a: BTreeMap<Offset, f64>,
    pub psi: BTreeMap<Offset, Vec<f64>>,
    /// `max |∫ ψ ωⁿ|` over the lattice.
    pub psi_integral: f64,
    /// `∂_s∂_s̄ A` at the center.
    pub ddbar_a: f64,
}

pub fn semiflat_shift(lattice: &BaseLattice) -> Result<SemiflatShift> {
    if lattice.normalization != Normalization::KeVolume || lattice.epsilon != 0.0 {
        return Err(Error::InvalidArgument("semi-flat shift needs an ε = 0 KE-normalized lattice".into()));
    }
    let mut a = BTreeMap::new();
    let mut psi = BTreeMap::new();
    let mut worst: f64 = 0.0;
    for f in lattice.fibers() {
        let sp = f.spectral();
        let vol = Volume::Metric(&f.omega.g);
        let av = sp.integrate(f.phi(), vol) / sp.volume(vol);
        let p: Vec<f64> = f.phi().iter().map(|v| v - av).collect();
        worst = worst.max(sp.integrate(&p, vol).abs());
        a.insert(f.offset, av);
        psi.insert(f.offset, p);
    }
    let d = stencil_derivatives(lattice.stencil.h_s, lattice.stencil.richardson, |j, k| {
        a.get(&(j, k)).map(|v| vec![Complex64::new(*v, 0.0)]).ok_or_else(|| Error::Stencil(format!("({j}, {k})")))
    })?;
    Ok(SemiflatShift { a, psi, psi_integral: worst, ddbar_a: d.dssb[0].re })
}

/// Sup-norm of a real field difference.
pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    sup_norm_real(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_matches_polynomial_derivatives() {
        // f = s² s̄ + 3 s̄: ∂_s f = 2 s s̄, ∂_s̄ f = s² + 3, ∂_s∂_s̄ f = 2 s
        let s0 = Complex64::new(0.3, -0.2);
        let h = 1e-3;
        let f = |s: Complex64| s * s * s.conj() + 3.0 * s.conj();
        let d = stencil_derivatives(h, true, |j, k| Ok(vec![f(s0 + h * Complex64::new(j as f64, k as f64))])).unwrap();
        assert!((d.ds[0] - 2.0 * s0 * s0.conj()).norm() < 1e-10);
        assert!((d.dsb[0] - (s0 * s0 + 3.0)).norm() < 1e-10);
        assert!((d.dssb[0] - 2.0 * s0).norm() < 1e-6);
    }

    #[test]
    fn offsets_cover_richardson_reach() {
        let st = StencilConfig::new(1e-3, true);
        let o = st.offsets(&[(0, 0)]);
        assert_eq!(o.len(), 9);
        assert!(o.contains(&(0, -2)));
        let st = StencilConfig::new(1e-3, false);
        assert_eq!(st.offsets(&[(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]).len(), 13);
    }
}
