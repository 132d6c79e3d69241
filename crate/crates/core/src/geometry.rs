//! Horizontal lifts, geodesic curvature, `∂̄v`, direct-image curvature and the fiber PDE.
//!
//! Forms are given in the periodic frame (see [`crate::models`]). The global lift is
//! `v = e_s + a^α e_α` with `a^α = −τ_{sβ̄} τ^{β̄α}`; in admissible coordinates the coefficient is
//! `a^α + τ' y` (n = 1).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{contraction_defect, semmes_defect};
use crate::field::{CMat, FiberMetric};
use crate::grid::Transform;
use crate::lattice::{scalar_derivatives, stencil_derivatives, BaseLattice, FamilyForm, StencilConfig};
use crate::models::Family;
use crate::solver::{Normalization, SolverConfig};
use crate::spectral::{sup_norm, sup_norm_real, Deriv, Spectral, Volume};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Global lift coefficients `a^α` per node.
#[derive(Debug, Clone)]
pub struct HorizontalLift {
    pub a: Vec<Vec<Complex64>>,
}

impl HorizontalLift {
    pub fn at(&self, i: usize) -> Vec<Complex64> {
        self.a.iter().map(|c| c[i]).collect()
    }

    /// Coefficients in admissible coordinates (fixed `z`): `a^α + τ' y`.
    pub fn admissible(&self, form: &FamilyForm) -> Vec<Vec<Complex64>> {
        let grid = form.spectral.grid();
        let tau = form.spectral.chart().tau();
        let tau_p = form.kappa * (tau - tau.conj());
        let mut out = self.a.clone();
        if form.n() == 1 {
            for (i, v) in out[0].iter_mut().enumerate() {
                *v += tau_p * grid.coords(i)[1];
            }
        }
        out
    }
}

pub fn horizontal_lift(form: &FamilyForm) -> HorizontalLift {
    let n = form.n();
    let ginv = form.fiber.inv();
    let a = (0..n)
        .map(|al| {
            (0..form.nodes())
                .map(|i| -(0..n).map(|b| form.t_s[b][i] * ginv.get(i, b, al)).sum::<Complex64>())
                .collect()
        })
        .collect();
    HorizontalLift { a }
}

/// `sup |τ(v, ∂̄_γ)| = sup |τ_{sγ̄} + a^α τ_{αγ̄}|`.
pub fn lift_orthogonality(form: &FamilyForm, lift: &HorizontalLift) -> f64 {
    let n = form.n();
    let g = form.fiber.g();
    let mut worst: f64 = 0.0;
    for i in 0..form.nodes() {
        for c in 0..n {
            let v = form.t_s[c][i] + (0..n).map(|a| lift.a[a][i] * g.get(i, a, c)).sum::<Complex64>();
            worst = worst.max(v.norm());
        }
    }
    worst
}

fn curvature_complex(form: &FamilyForm) -> Vec<Complex64> {
    let n = form.n();
    let ginv = form.fiber.inv();
    (0..form.nodes())
        .map(|i| {
            let mut c = Complex64::new(form.t_ss[i], 0.0);
            for a in 0..n {
                for b in 0..n {
                    c -= form.t_s[b][i] * ginv.get(i, b, a) * form.t_s[a][i].conj();
                }
            }
            c
        })
        .collect()
}

/// `c(τ) = τ_{ss̄} − τ_{sβ̄} τ^{β̄α} τ_{αs̄}`.
pub fn geodesic_curvature(form: &FamilyForm) -> Vec<f64> {
    curvature_complex(form).iter().map(|c| c.re).collect()
}

/// `sup |τ^{n+1}/(n+1)! − c · τⁿ/n! ∧ i ds∧ds̄|` over nodes.
pub fn semmes_residual(form: &FamilyForm) -> f64 {
    let c = geodesic_curvature(form);
    (0..form.nodes()).map(|i| semmes_defect(&form.full_matrix(i), c[i])).fold(0.0, f64::max)
}

/// `sup |i_v τ − i c ds̄|` over nodes.
pub fn contraction_residual(form: &FamilyForm) -> f64 {
    let c = geodesic_curvature(form);
    let lift = horizontal_lift(form);
    (0..form.nodes()).map(|i| contraction_defect(&form.full_matrix(i), &lift.at(i), c[i])).fold(0.0, f64::max)
}

/// `A^α_{β̄} = ∂_{β̄} a^α` of the admissible lift, stored as `a[α][β]` per node.
#[derive(Debug, Clone)]
pub struct DbarV {
    pub n: usize,
    pub a: Vec<Vec<Vec<Complex64>>>,
    /// `|A|²_h = A^α_{β̄} conj(A^γ_{δ̄}) h_{αγ̄} h^{δ̄β}`.
    pub norm2: Vec<f64>,
}

impl DbarV {
    pub fn at(&self, i: usize) -> CMat {
        let mut m = CMat::zeros(self.n);
        for a in 0..self.n {
            for b in 0..self.n {
                m.a[a][b] = self.a[a][b][i];
            }
        }
        m
    }

    /// Grid mean of `A` (its harmonic part on a flat torus).
    pub fn harmonic(&self) -> CMat {
        let mut m = CMat::zeros(self.n);
        for a in 0..self.n {
            for b in 0..self.n {
                let v = &self.a[a][b];
                m.a[a][b] = v.iter().sum::<Complex64>() / v.len() as f64;
            }
        }
        m
    }
}

/// `|A|²` for one node with `H[α][β] = h_{αβ̄}` and `G = H^{-1}`.
pub fn tensor_norm2(a: &CMat, h: &CMat, g: &CMat) -> Complex64 {
    let n = a.d;
    let mut s = ZERO;
    for al in 0..n {
        for be in 0..n {
            for ga in 0..n {
                for de in 0..n {
                    s += a.a[al][be] * a.a[ga][de].conj() * h.a[al][ga] * g.a[be][de];
                }
            }
        }
    }
    s
}

pub fn dbar_vertical(form: &FamilyForm) -> Result<DbarV> {
    let n = form.n();
    let lift = horizontal_lift(form);
    let sp = &form.spectral;
    let shift = if n == 1 { form.kappa } else { ZERO };
    let mut a = vec![vec![vec![]; n]; n];
    for al in 0..n {
        let d = sp.derivatives(&lift.a[al], &(0..n).map(Deriv::Zb).collect::<Vec<_>>())?;
        for (be, v) in d.into_iter().enumerate() {
            a[al][be] = v.into_iter().map(|x| x - shift).collect();
        }
    }
    let mut out = DbarV { n, a, norm2: vec![] };
    out.norm2 = (0..form.nodes())
        .map(|i| tensor_norm2(&out.at(i), &form.fiber.g().at(i), &form.fiber.inv().at(i)).re)
        .collect();
    Ok(out)
}

/// `sup |∂_δ̄ A^α_β̄ − ∂_β̄ A^α_δ̄|`.
pub fn dbar_closedness(form: &FamilyForm, dv: &DbarV) -> Result<f64> {
    let n = dv.n;
    let mut worst: f64 = 0.0;
    for al in 0..n {
        for b in 0..n {
            for d in (b + 1)..n {
                let x = form.spectral.derivative(&dv.a[al][b], Deriv::Zb(d))?;
                let y = form.spectral.derivative(&dv.a[al][d], Deriv::Zb(b))?;
                worst = worst.max(x.iter().zip(&y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max));
            }
        }
    }
    Ok(worst)
}

/// `sup |h^{β̄γ} A^α_{β̄;γ} − ε (g_{sδ̄} h^{δ̄α} − h_{sδ̄} g^{δ̄α})|` with `g^{δ̄α}` the `h`-raised `g`.
///
/// `rho` is `ω + dd^c φ_ε`, `omega` the reference form.
pub fn dbar_star_residual(rho: &FamilyForm, omega: &FamilyForm, eps: f64) -> Result<f64> {
    let n = rho.n();
    let sp = &rho.spectral;
    let dv = dbar_vertical(rho)?;
    let h = rho.fiber.g();
    let ginv = rho.fiber.inv();
    // ∂_γ A^α_β̄ and ∂_γ h_{λμ̄}
    let mut da = vec![vec![vec![vec![]; n]; n]; n];
    let mut dh = vec![vec![vec![vec![]; n]; n]; n];
    for gm in 0..n {
        for al in 0..n {
            for be in 0..n {
                da[gm][al][be] = sp.derivative(&dv.a[al][be], Deriv::Z(gm))?;
                dh[gm][al][be] = sp.derivative(&h.component(al, be), Deriv::Z(gm))?;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..rho.nodes() {
        let gi = ginv.at(i);
        let hg = omega.fiber.g().at(i);
        let raised = gi.mul(&hg).mul(&gi);
        for al in 0..n {
            let mut lhs = ZERO;
            for be in 0..n {
                for gm in 0..n {
                    let mut cov = da[gm][al][be][i];
                    for la in 0..n {
                        // Γ^α_{γλ} = (∂_γ h)_{λμ̄} h^{μ̄α}
                        let gamma: Complex64 = (0..n).map(|mu| dh[gm][la][mu][i] * gi.a[mu][al]).sum();
                        cov += gamma * dv.a[la][be][i];
                    }
                    lhs += gi.a[be][gm] * cov;
                }
            }
            let mut target = ZERO;
            for de in 0..n {
                target += omega.t_s[de][i] * gi.a[de][al] - rho.t_s[de][i] * raised.a[de][al];
            }
            worst = worst.max((lhs - eps * target).norm());
        }
    }
    Ok(worst)
}

/// `‖u‖² = ∫ c_n u∧ū` for `u = dz_1∧…∧dz_n`, equal to `2ⁿ` times the flat area.
pub fn section_norm(sp: &Spectral) -> f64 {
    2f64.powi(sp.n() as i32) * sp.volume(Volume::Flat)
}

/// `Θ_{ss̄}(E) = −∂_s∂_s̄ log ‖u‖²` by central differences over the base stencil.
pub fn theta_e(family: &Family, s: Complex64, stencil: StencilConfig) -> Result<f64> {
    stencil.validate()?;
    let (_, _, dssb) = scalar_derivatives(stencil.h_s, stencil.richardson, |d| {
        let chart = family.chart(s + d)?;
        Ok((2f64.powi(chart.n() as i32) * chart.jacobian()).ln())
    })?;
    Ok(-dssb.re)
}

/// `∫ |∂̄v|²_ρ dV_ρ`.
pub fn wp_norm(rho: &FamilyForm, dv: &DbarV) -> f64 {
    rho.spectral.integrate(&dv.norm2, Volume::Metric(&rho.fiber))
}

/// `‖K(v)·u‖² / ‖u‖²` for the harmonic part of `A`, averaged against `dV_ρ`.
///
/// `K(v)·u = Σ A^α_{β̄} dz̄^β ∧ i_{∂_α} u`, normed with the Gram matrix of `h`.
pub fn kodaira_spencer_norm(rho: &FamilyForm, dv: &DbarV) -> f64 {
    let n = rho.n();
    let harm = dv.harmonic();
    let ratio: Vec<f64> = (0..rho.nodes())
        .map(|i| {
            let g = rho.fiber.inv().at(i);
            // coefficients ψ_{γβ̄} of the (n−1,1) part: i_{∂_α}(dz_1∧dz_2) = ±dz_γ
            let mut psi = CMat::zeros(n);
            for al in 0..n {
                for be in 0..n {
                    if n == 1 {
                        psi.a[0][be] += harm.a[al][be];
                    } else {
                        let (gm, sign) = if al == 0 { (1, 1.0) } else { (0, -1.0) };
                        psi.a[gm][be] += sign * harm.a[al][be];
                    }
                }
            }
            // ⟨dz^γ, dz^μ⟩ = G[μ][γ], ⟨dz̄^β, dz̄^δ⟩ = G[β][δ]
            let mut num = ZERO;
            for gm in 0..n {
                for be in 0..n {
                    for mu in 0..n {
                        for de in 0..n {
                            let pair = if n == 1 { Complex64::new(1.0, 0.0) } else { g.a[mu][gm] };
                            num += psi.a[gm][be] * psi.a[mu][de].conj() * pair * g.a[be][de];
                        }
                    }
                }
            }
            // |dz_1∧…∧dz_n|² = det G
            let den = g.det();
            (num / den).re
        })
        .collect();
    let vol = Volume::Metric(&rho.fiber);
    rho.spectral.integrate(&ratio, vol) / rho.spectral.volume(vol)
}

/// `ω(v, v̄)` for the global lift `v = e_s + a^α e_α`.
pub fn omega_vv(omega: &FamilyForm, lift: &HorizontalLift) -> Vec<f64> {
    let n = omega.n();
    let g = omega.fiber.g();
    (0..omega.nodes())
        .map(|i| {
            let mut v = Complex64::new(omega.t_ss[i], 0.0);
            for a in 0..n {
                v += lift.a[a][i] * omega.t_s[a][i].conj() + lift.a[a][i].conj() * omega.t_s[a][i];
                for b in 0..n {
                    v += lift.a[a][i] * lift.a[b][i].conj() * g.get(i, a, b);
                }
            }
            v.re
        })
        .collect()
}

/// PDE residual field. ε = 0: `−Δ_ρ c − |∂̄v|² + Θ`. ε > 0:
/// `−Δ_ρ c + ε c − ε ω(v, v̄) − |∂̄v|² + Θ`, with `v` the lift of `rho`.
pub fn pde_residual(rho: &FamilyForm, omega: &FamilyForm, eps: f64, theta: f64) -> Result<Vec<f64>> {
    let c = curvature_complex(rho);
    let lap = rho.spectral.laplace_beltrami(&rho.fiber, &c)?;
    let dv = dbar_vertical(rho)?;
    let ovv = if eps > 0.0 { omega_vv(omega, &horizontal_lift(rho)) } else { vec![0.0; rho.nodes()] };
    Ok((0..rho.nodes())
        .map(|i| -lap[i].re + eps * c[i].re - eps * ovv[i] - dv.norm2[i] + theta)
        .collect())
}

/// `(∫ c(ρ) ρⁿ, ∫ ω(v_ρ, v̄_ρ) ρⁿ)`.
pub fn direct_image_report(rho: &FamilyForm, omega: &FamilyForm) -> (f64, f64) {
    let vol = Volume::Metric(&rho.fiber);
    let c = geodesic_curvature(rho);
    let lower = omega_vv(omega, &horizontal_lift(rho));
    (rho.spectral.integrate(&c, vol), rho.spectral.integrate(&lower, vol))
}

/// Positivity margins of `ρ + K ω^WP`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem12Check {
    /// `min (c(ρ) + K·wp) − ∫ c(ρ) ρⁿ`.
    pub pointwise_margin: f64,
    /// Minimum eigenvalue of `ρ + K·wp · i ds∧ds̄` over the fiber.
    pub combined_min_eig: f64,
}

pub fn theorem12_check(rho: &FamilyForm, wp: f64, k: f64) -> Theorem12Check {
    let c = geodesic_curvature(rho);
    let integral = rho.spectral.integrate(&c, Volume::Metric(&rho.fiber));
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    Theorem12Check {
        pointwise_margin: cmin + k * wp - integral,
        combined_min_eig: rho.add_base(k * wp).min_eigenvalue(),
    }
}

/// `(∂_s ∫ f τⁿ, ∫ (v_τ f) τⁿ)` for a closed form `τ = ω` of the family and a test function
/// given with its exact `e_s` derivative.
pub fn transport_identity<F>(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    stencil: StencilConfig,
    f: F,
) -> Result<(Complex64, Complex64)>
where
    F: Fn(&[f64; 4], Complex64) -> (Complex64, Complex64),
{
    let grid = *transform.grid();
    let integral = |s1: Complex64| -> Result<Vec<Complex64>> {
        let o = family.omega(transform, s1)?;
        let vals = grid.sample(|xi| f(xi, s1).0);
        let vol = Volume::Metric(&o.g);
        let re: Vec<f64> = vals.iter().map(|v| v.re).collect();
        let im: Vec<f64> = vals.iter().map(|v| v.im).collect();
        Ok(vec![Complex64::new(o.spectral.integrate(&re, vol), o.spectral.integrate(&im, vol))])
    };
    let lhs = stencil_derivatives(stencil.h_s, stencil.richardson, |j, k| {
        integral(s + stencil.h_s * Complex64::new(j as f64, k as f64))
    })?
    .ds[0];
    let o = family.omega(transform, s)?;
    let form = FamilyForm::from_omega(&o, family.spec().omega);
    let lift = horizontal_lift(&form);
    let vals = grid.sample(|xi| f(xi, s).0);
    let es = grid.sample(|xi| f(xi, s).1);
    let n = family.n();
    let mut vf = es;
    for a in 0..n {
        let d = o.spectral.derivative(&vals, Deriv::Z(a))?;
        for i in 0..vf.len() {
            vf[i] += lift.a[a][i] * d[i];
        }
    }
    let vol = Volume::Metric(&o.g);
    let re: Vec<f64> = vf.iter().map(|v| v.re).collect();
    let im: Vec<f64> = vf.iter().map(|v| v.im).collect();
    Ok((lhs, Complex64::new(o.spectral.integrate(&re, vol), o.spectral.integrate(&im, vol))))
}

/// Per-base-point curvature quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub s: [f64; 2],
    pub epsilon: f64,
    #[serde(skip)]
    pub c_rho: Vec<f64>,
    #[serde(skip)]
    pub dbarv_norm2: Vec<f64>,
    #[serde(skip)]
    pub pde_residual: Vec<f64>,
    #[serde(skip)]
    pub phi: Vec<f64>,
    pub c_min: f64,
    pub c_max: f64,
    pub dbarv_min: f64,
    pub dbarv_max: f64,
    pub theta_e: f64,
    pub wp: f64,
    pub section_norm: f64,
    pub direct_image: f64,
    pub lower_bound: f64,
    pub kodaira_spencer_norm: f64,
    pub pde_residual_sup: f64,
    pub semmes_residual: f64,
    pub contraction_residual: f64,
    pub lift_orthogonality: f64,
    pub dbar_star_residual: f64,
    pub dbar_closedness: f64,
    pub rho_min_eig: f64,
    pub fiber_volume: f64,
    pub phi_sup: f64,
    pub ricci_residual: f64,
    pub newton_iters: usize,
    /// Largest imaginary part dropped from a real field.
    pub imag_residue: f64,
}

/// Solved lattice together with the assembled forms at its center.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub lattice: BaseLattice,
    pub rho: FamilyForm,
    pub omega: FamilyForm,
    pub report: CurvatureReport,
}

/// Solves the fiber equation around `s` and evaluates every curvature quantity there.
pub fn curvature_report(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    stencil: StencilConfig,
    eps: f64,
    config: &SolverConfig,
) -> Result<Pipeline> {
    let norm = if eps > 0.0 { Normalization::None } else { Normalization::KeVolume };
    let lattice = BaseLattice::solve(family, transform, s, stencil, &[(0, 0)], eps, norm, config)?;
    report_from_lattice(family, lattice)
}

pub fn report_from_lattice(family: &Family, lattice: BaseLattice) -> Result<Pipeline> {
    let eps = lattice.epsilon;
    let s = lattice.center;
    let rho = lattice.assemble((0, 0))?;
    let omega = lattice.omega_form((0, 0))?;
    let theta = theta_e(family, s, lattice.stencil)?;
    let cc = curvature_complex(&rho);
    let imag = cc.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let c: Vec<f64> = cc.iter().map(|c| c.re).collect();
    let dv = dbar_vertical(&rho)?;
    let lift = horizontal_lift(&rho);
    let pde = pde_residual(&rho, &omega, eps, theta)?;
    let (direct_image, lower_bound) = direct_image_report(&rho, &omega);
    let fib = lattice.center_fiber();
    let report = CurvatureReport {
        s: [s.re, s.im],
        epsilon: eps,
        c_min: c.iter().copied().fold(f64::INFINITY, f64::min),
        c_max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        dbarv_min: dv.norm2.iter().copied().fold(f64::INFINITY, f64::min),
        dbarv_max: dv.norm2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        theta_e: theta,
        wp: wp_norm(&rho, &dv),
        section_norm: section_norm(&rho.spectral),
        direct_image,
        lower_bound,
        kodaira_spencer_norm: kodaira_spencer_norm(&rho, &dv),
        pde_residual_sup: sup_norm_real(&pde),
        semmes_residual: semmes_residual(&rho),
        contraction_residual: contraction_residual(&rho),
        lift_orthogonality: lift_orthogonality(&rho, &lift),
        dbar_star_residual: dbar_star_residual(&rho, &omega, eps)?,
        dbar_closedness: dbar_closedness(&rho, &dv)?,
        rho_min_eig: rho.min_eigenvalue(),
        fiber_volume: rho.spectral.volume(Volume::Metric(&rho.fiber)),
        phi_sup: sup_norm_real(fib.phi()),
        ricci_residual: lattice.ricci_residual(),
        newton_iters: fib.solution.newton_iters,
        imag_residue: imag,
        c_rho: c,
        dbarv_norm2: dv.norm2.clone(),
        pde_residual: pde,
        phi: fib.phi().to_vec(),
    };
    Ok(Pipeline { lattice, rho, omega, report })
}

/// Checks that a constant fiber metric really is constant.
pub fn constant_metric(h: &FiberMetric) -> Result<CMat> {
    let mean = h.g().mean();
    let dev = (0..h.nodes())
        .map(|i| {
            let m = h.g().at(i);
            let mut e: f64 = 0.0;
            for a in 0..m.d {
                for b in 0..m.d {
                    e = e.max((m.a[a][b] - mean.a[a][b]).norm());
                }
            }
            e
        })
        .fold(0.0, f64::max);
    let scale = (0..mean.d).map(|a| mean.a[a][a].norm()).fold(0.0, f64::max);
    if dev > 1e-8 * scale.max(1.0) {
        return Err(Error::UnsupportedMetric(format!("fiber metric varies by {dev:.3e}")));
    }
    Ok(mean)
}

/// Sup-norm of the imaginary parts of a complex field.
pub fn imag_sup(f: &[Complex64]) -> f64 {
    sup_norm(&f.iter().map(|v| Complex64::new(v.im, 0.0)).collect::<Vec<_>>())
}
