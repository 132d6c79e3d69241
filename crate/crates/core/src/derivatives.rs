//! `v_ρ φ_ε` and `v̄_ρ v_ρ φ_ε` two ways: base differences of the solved potentials, and the
//! linearized fiber equations they satisfy.
//!
//! `v_ρ = e_s + a^γ ∂_γ` is the global lift of the ε = 0 form `ρ`; `h = ω + dd^c φ_ε`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuation::{loglog_slope, validate_schedule};
use crate::error::{Error, Result};
use crate::field::CMat;
use crate::geometry::horizontal_lift;
use crate::grid::Transform;
use crate::lattice::{stencil_derivatives, BaseLattice, Offset, StencilConfig};
use crate::models::Family;
use crate::solver::{linearized_solve, Normalization, SolverConfig};
use crate::spectral::{sup_norm, to_complex, Deriv, Spectral, Volume};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VphiCheck {
    pub s: [f64; 2],
    pub epsilon: f64,
    /// `sup |u_a − u_b|`.
    pub route_difference: f64,
    /// `|∫ u_a ρ_εⁿ|` (route a, base differences).
    pub integral: f64,
    /// `|∫ R ρ_εⁿ| / ∫ |R| ρ_εⁿ` removed before the ε = 0 solve.
    pub solvability_defect: f64,
    pub sup_vphi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbarVphiCheck {
    pub s: [f64; 2],
    pub epsilon: f64,
    pub route_difference: f64,
    /// `|∫ W_a ρ_εⁿ|`.
    pub integral: f64,
    pub solvability_defect: f64,
    pub sup_vbarvphi: f64,
}

/// `sup |v̄vφ_ε − v̄vφ_0|` along a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbarVMonitor {
    pub s: [f64; 2],
    pub rows: Vec<(f64, f64)>,
    pub order: f64,
    pub decreasing: bool,
}

/// Lattices for `ρ` (ε = 0, KE normalization) and for `φ_ε`, solved at every offset needed to
/// differentiate at `points`.
struct Pair {
    rho: BaseLattice,
    eps: Option<BaseLattice>,
}

impl Pair {
    fn solve(
        family: &Family,
        transform: &Transform,
        s: Complex64,
        eps: f64,
        stencil: StencilConfig,
        points: &[Offset],
        config: &SolverConfig,
    ) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon = {eps} must be >= 0")));
        }
        let rho = BaseLattice::solve(family, transform, s, stencil, points, 0.0, Normalization::KeVolume, config)?;
        let eps = if eps > 0.0 {
            Some(BaseLattice::solve(family, transform, s, stencil, points, eps, Normalization::None, config)?)
        } else {
            None
        };
        Ok(Self { rho, eps })
    }

    fn phi(&self) -> &BaseLattice {
        self.eps.as_ref().unwrap_or(&self.rho)
    }

    fn epsilon(&self) -> f64 {
        self.phi().epsilon
    }
}

/// Everything route (b) needs at one lattice point.
struct PointData {
    sp: Spectral,
    /// global lift `a^γ`
    a: Vec<Vec<Complex64>>,
    h: crate::field::FiberMetric,
    /// `v_ρ φ_ε` by base differences
    u_a: Vec<Complex64>,
    /// right-hand side of the `v_ρ φ_ε` equation
    r: Vec<Complex64>,
}

fn mat_at(f: &[Vec<Vec<Complex64>>], i: usize) -> CMat {
    let n = f.len();
    let mut m = CMat::zeros(n);
    for a in 0..n {
        for b in 0..n {
            m.a[a][b] = f[a][b][i];
        }
    }
    m
}

fn trace_prod(x: &CMat, y: &CMat) -> Complex64 {
    x.mul(y).trace()
}

fn point_data(pair: &Pair, p: Offset) -> Result<PointData> {
    let lat = pair.phi();
    let rho = pair.rho.assemble(p)?;
    let lift = horizontal_lift(&rho);
    let fib = lat.fiber(p)?;
    let om = &fib.omega;
    let sp = om.spectral.clone();
    let n = sp.n();
    let nodes = sp.nodes();
    let phic = to_complex(fib.phi());
    let zs: Vec<Deriv> = (0..n).map(Deriv::Z).collect();
    let es_phi = lat.phi_derivatives(p, None)?.ds;
    let dphi = sp.derivatives(&phic, &zs)?;
    let u_a: Vec<Complex64> =
        (0..nodes).map(|i| es_phi[i] + (0..n).map(|g| lift.a[g][i] * dphi[g][i]).sum::<Complex64>()).collect();

    // derivatives of the admissible lift: ∂_α a^γ, ∂_β̄ a^γ, ∂_α∂_β̄ a^γ
    let k = if n == 1 { rho.kappa } else { ZERO };
    let mut da = vec![vec![vec![]; n]; n]; // [γ][α]
    let mut dba = vec![vec![vec![]; n]; n]; // [γ][β]
    let mut ddba = vec![vec![vec![vec![]; n]; n]; n]; // [γ][α][β]
    for g in 0..n {
        for a in 0..n {
            da[g][a] = sp.derivative(&lift.a[g], Deriv::Z(a))?.into_iter().map(|v| v + k).collect();
            dba[g][a] = sp.derivative(&lift.a[g], Deriv::Zb(a))?.into_iter().map(|v| v - k).collect();
            for b in 0..n {
                ddba[g][a][b] = sp.second(&lift.a[g], Deriv::Z(a), Deriv::Zb(b))?;
            }
        }
    }
    // φ_{αβ̄}, φ_{αγ}
    let mut pzb = vec![vec![vec![]; n]; n];
    let mut pzz = vec![vec![vec![]; n]; n];
    for a in 0..n {
        for b in 0..n {
            pzb[a][b] = sp.second(&phic, Deriv::Z(a), Deriv::Zb(b))?;
            pzz[a][b] = sp.second(&phic, Deriv::Z(a), Deriv::Z(b))?;
        }
    }
    // ∂_γ g
    let g = om.g.g();
    let mut dg = vec![vec![vec![vec![]; n]; n]; n]; // [γ][α][β]
    for gm in 0..n {
        for a in 0..n {
            for b in 0..n {
                dg[gm][a][b] = sp.derivative(&g.component(a, b), Deriv::Z(gm))?;
            }
        }
    }
    // η = −log det g + log mean det g
    let detg = om.g.det();
    let mean_det = detg.iter().sum::<f64>() / nodes as f64;
    let trs: Vec<Complex64> = (0..nodes).map(|i| trace_prod(&om.g.inv().at(i), &om.g_s.at(i))).collect();
    let des = trs.iter().zip(detg).map(|(t, d)| t * d).sum::<Complex64>() / nodes as f64 / mean_det;
    let eta: Vec<Complex64> = detg.iter().map(|d| Complex64::new(-d.ln() + mean_det.ln(), 0.0)).collect();
    let deta = sp.derivatives(&eta, &zs)?;

    let h = fib.h().clone();
    let r = (0..nodes)
        .map(|i| {
            let mut vg = om.g_s.at(i);
            let mut br = CMat::zeros(n);
            for a in 0..n {
                for b in 0..n {
                    for gm in 0..n {
                        vg.a[a][b] += lift.a[gm][i] * dg[gm][a][b][i];
                        br.a[a][b] -= ddba[gm][a][b][i] * dphi[gm][i]
                            + da[gm][a][i] * pzb[gm][b][i]
                            + dba[gm][b][i] * pzz[a][gm][i];
                    }
                }
            }
            let veta = des - trs[i] + (0..n).map(|gm| lift.a[gm][i] * deta[gm][i]).sum::<Complex64>();
            trace_prod(&h.inv().at(i), &vg.add(&br)) - trace_prod(&om.g.inv().at(i), &vg) - veta
        })
        .collect();
    Ok(PointData { sp, a: lift.a, h, u_a, r })
}

/// Solves `−Δ_h u + ε u = R` for complex `R`. At ε = 0 the component of `R` violating
/// solvability is removed and its relative size returned; beyond `budget` it is an error.
fn solve_complex(
    sp: &Spectral,
    h: &crate::field::FiberMetric,
    eps: f64,
    r: &[Complex64],
    config: &SolverConfig,
    budget: f64,
) -> Result<(Vec<Complex64>, f64)> {
    let vol = Volume::Metric(h);
    let mut defect: f64 = 0.0;
    let mut parts = vec![];
    for part in 0..2 {
        let mut f: Vec<f64> = r.iter().map(|c| if part == 0 { c.re } else { c.im }).collect();
        if eps == 0.0 {
            let total = sp.integrate(&f, vol);
            let scale = sp.integrate(&f.iter().map(|v| v.abs()).collect::<Vec<_>>(), vol);
            let rel = total.abs() / (1.0 + scale);
            if rel > budget {
                return Err(Error::Solvability(format!("∫ R det h = {total:.3e} exceeds the difference budget")));
            }
            defect = defect.max(rel);
            let mean = total / sp.volume(vol);
            f.iter_mut().for_each(|v| *v -= mean);
        }
        parts.push(linearized_solve(sp, h, eps, &f, config)?);
    }
    Ok(((0..r.len()).map(|i| Complex64::new(parts[0][i], parts[1][i])).collect(), defect))
}

fn complex_integral(sp: &Spectral, f: &[Complex64], vol: Volume<'_>) -> Complex64 {
    let re: Vec<f64> = f.iter().map(|v| v.re).collect();
    let im: Vec<f64> = f.iter().map(|v| v.im).collect();
    Complex64::new(sp.integrate(&re, vol), sp.integrate(&im, vol))
}

fn budget(stencil: &StencilConfig) -> f64 {
    (100.0 * stencil.h_s * stencil.h_s).max(1e-9)
}

/// `v_ρ φ_ε` by base differences (a) and by the linearized equation (b).
pub fn vphi_cross_check(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    eps: f64,
    stencil: StencilConfig,
    config: &SolverConfig,
) -> Result<VphiCheck> {
    let pair = Pair::solve(family, transform, s, eps, stencil, &[(0, 0)], config)?;
    vphi_from(&pair, stencil)
}

fn vphi_from(pair: &Pair, stencil: StencilConfig) -> Result<VphiCheck> {
    let d = point_data(pair, (0, 0))?;
    let eps = pair.epsilon();
    let (u_b, defect) = solve_complex(&d.sp, &d.h, eps, &d.r, &SolverConfig::default(), budget(&stencil))?;
    let diff: Vec<Complex64> = d.u_a.iter().zip(&u_b).map(|(a, b)| a - b).collect();
    let s = pair.rho.center;
    Ok(VphiCheck {
        s: [s.re, s.im],
        epsilon: eps,
        route_difference: sup_norm(&diff),
        integral: complex_integral(&d.sp, &d.u_a, Volume::Metric(&d.h)).norm(),
        solvability_defect: defect,
        sup_vphi: sup_norm(&d.u_a),
    })
}

/// `v̄_ρ v_ρ φ_ε` by base differences of `v_ρ φ_ε` (a) and by the linearized equation (b).
pub fn vbarvphi_cross_check(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    eps: f64,
    stencil: StencilConfig,
    config: &SolverConfig,
) -> Result<VbarVphiCheck> {
    let points = stencil.offsets(&[(0, 0)]);
    let pair = Pair::solve(family, transform, s, eps, stencil, &points, config)?;
    let (w_a, w_b, d, defect) = vbarv_routes(&pair, &points, stencil)?;
    let diff: Vec<Complex64> = w_a.iter().zip(&w_b).map(|(a, b)| a - b).collect();
    Ok(VbarVphiCheck {
        s: [s.re, s.im],
        epsilon: pair.epsilon(),
        route_difference: sup_norm(&diff),
        integral: complex_integral(&d.sp, &w_a, Volume::Metric(&d.h)).norm(),
        solvability_defect: defect,
        sup_vbarvphi: sup_norm(&w_a),
    })
}

#[allow(clippy::type_complexity)]
fn vbarv_routes(
    pair: &Pair,
    points: &[Offset],
    stencil: StencilConfig,
) -> Result<(Vec<Complex64>, Vec<Complex64>, PointData, f64)> {
    let mut data: BTreeMap<Offset, PointData> = BTreeMap::new();
    for &p in points {
        data.insert(p, point_data(pair, p)?);
    }
    let lat = pair.phi();
    let eps = pair.epsilon();
    let c = &data[&(0, 0)];
    let sp = &c.sp;
    let n = sp.n();
    let nodes = sp.nodes();
    let zbs: Vec<Deriv> = (0..n).map(Deriv::Zb).collect();
    let abar: Vec<Vec<Complex64>> = c.a.iter().map(|v| v.iter().map(|x| x.conj()).collect()).collect();
    let at = |p: Offset| data.get(&p).ok_or_else(|| Error::Stencil(format!("no point {p:?}")));
    let lattice_dsb = |f: &dyn Fn(&PointData) -> Vec<Complex64>| -> Result<Vec<Complex64>> {
        Ok(stencil_derivatives(stencil.h_s, stencil.richardson, |j, k| Ok(f(at((j, k))?)))?.dsb)
    };
    let vbar = |f: &dyn Fn(&PointData) -> Vec<Complex64>| -> Result<Vec<Complex64>> {
        let e = lattice_dsb(f)?;
        let d = sp.derivatives(&f(c), &zbs)?;
        Ok((0..nodes).map(|i| e[i] + (0..n).map(|g| abar[g][i] * d[g][i]).sum::<Complex64>()).collect())
    };

    // route (a)
    let w_a = vbar(&|d: &PointData| d.u_a.clone())?;

    // route (b): u from its own equation at the center
    let (u, d1) = solve_complex(sp, &c.h, eps, &c.r, &SolverConfig::default(), budget(&stencil))?;
    let vbar_r = vbar(&|d: &PointData| d.r.clone())?;
    let mut vbar_h = vec![vec![vec![]; n]; n];
    for a in 0..n {
        for b in 0..n {
            vbar_h[a][b] = vbar(&|d: &PointData| d.h.g().component(a, b))?;
        }
    }
    let kb = if n == 1 { pair.rho.assemble((0, 0))?.kappa.conj() } else { ZERO };
    let mut u_zb = vec![vec![]; n];
    let mut u_zbzb = vec![vec![vec![]; n]; n];
    let mut u_zzb = vec![vec![vec![]; n]; n];
    for g in 0..n {
        u_zb[g] = sp.derivative(&u, Deriv::Zb(g))?;
        for b in 0..n {
            u_zbzb[g][b] = sp.second(&u, Deriv::Zb(g), Deriv::Zb(b))?;
            u_zzb[b][g] = sp.second(&u, Deriv::Z(b), Deriv::Zb(g))?;
        }
    }
    let mut dab = vec![vec![vec![]; n]; n]; // ∂_α ā^γ  [γ][α]
    let mut dbab = vec![vec![vec![]; n]; n]; // ∂_β̄ ā^γ [γ][β]
    let mut ddab = vec![vec![vec![vec![]; n]; n]; n];
    for g in 0..n {
        for a in 0..n {
            dab[g][a] = sp.derivative(&abar[g], Deriv::Z(a))?.into_iter().map(|v| v - kb).collect();
            dbab[g][a] = sp.derivative(&abar[g], Deriv::Zb(a))?.into_iter().map(|v| v + kb).collect();
            for b in 0..n {
                ddab[g][a][b] = sp.second(&abar[g], Deriv::Z(a), Deriv::Zb(b))?;
            }
        }
    }
    let r2: Vec<Complex64> = (0..nodes)
        .map(|i| {
            let hi = c.h.inv().at(i);
            let vh = mat_at(&vbar_h, i);
            let uu = mat_at(&u_zzb, i);
            let mut br = CMat::zeros(n);
            for a in 0..n {
                for b in 0..n {
                    for g in 0..n {
                        br.a[a][b] -= ddab[g][a][b][i] * u_zb[g][i]
                            + dab[g][a][i] * u_zbzb[g][b][i]
                            + dbab[g][b][i] * u_zzb[a][g][i];
                    }
                }
            }
            vbar_r[i] - trace_prod(&hi.mul(&vh).mul(&hi), &uu) + trace_prod(&hi, &br)
        })
        .collect();
    let (w_b, d2) = solve_complex(sp, &c.h, eps, &r2, &SolverConfig::default(), budget(&stencil).max(10.0 * stencil.h_s))?;
    debug_assert_eq!(lat.center, pair.rho.center);
    let center = data.remove(&(0, 0)).expect("center");
    Ok((w_a, w_b, center, d1.max(d2)))
}

/// Route-(a) `v̄vφ_ε` along a schedule, against its ε = 0 value.
pub fn vbarv_monitor(
    family: &Family,
    transform: &Transform,
    s: Complex64,
    schedule: &[f64],
    stencil: StencilConfig,
    config: &SolverConfig,
) -> Result<VbarVMonitor> {
    validate_schedule(schedule)?;
    let points = stencil.offsets(&[(0, 0)]);
    let route_a = |eps: f64| -> Result<Vec<Complex64>> {
        let pair = Pair::solve(family, transform, s, eps, stencil, &points, config)?;
        let mut vals = BTreeMap::new();
        for &p in &points {
            let d = point_data(&pair, p)?;
            vals.insert(p, d);
        }
        let c = &vals[&(0, 0)];
        let n = c.sp.n();
        let e = stencil_derivatives(stencil.h_s, stencil.richardson, |j, k| {
            vals.get(&(j, k)).map(|d| d.u_a.clone()).ok_or_else(|| Error::Stencil(format!("({j}, {k})")))
        })?
        .dsb;
        let d = c.sp.derivatives(&c.u_a, &(0..n).map(Deriv::Zb).collect::<Vec<_>>())?;
        Ok((0..c.sp.nodes()).map(|i| e[i] + (0..n).map(|g| c.a[g][i].conj() * d[g][i]).sum::<Complex64>()).collect())
    };
    let w0 = route_a(0.0)?;
    let mut rows = vec![];
    for &eps in schedule.iter().filter(|e| **e > 0.0) {
        let w = route_a(eps)?;
        rows.push((eps, sup_norm(&w.iter().zip(&w0).map(|(a, b)| a - b).collect::<Vec<_>>())));
    }
    let decreasing = rows.windows(2).all(|w| w[1].1 <= w[0].1);
    let order = loglog_slope(&rows);
    Ok(VbarVMonitor { s: [s.re, s.im], rows, order, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FiberGrid;
    use crate::models::{make_family, FamilySpec};

    #[test]
    fn model_family_derivatives_vanish() {
        let tr = Transform::new(FiberGrid::new(1, 16).unwrap());
        let fam = make_family(FamilySpec::universal_elliptic(&[Complex64::new(0.0, 1.0)]), &tr).unwrap();
        let st = StencilConfig::default();
        let v = vphi_cross_check(&fam, &tr, Complex64::new(0.0, 1.0), 0.0, st, &SolverConfig::default()).unwrap();
        assert!(v.sup_vphi < 1e-12 && v.route_difference < 1e-12, "{v:?}");
    }
}
