//! Declarative torus families and their model Kähler forms.
//!
//! A family is a modulus map `s ↦ τ(s)` (n = 1) or a constant period matrix (n = 2) together with
//! a total-space form `ω = ω_model + i∂∂̄χ`. Components are expressed in the periodic frame
//! `{e_α = ∂_{z_α}|_s, e_s = ∂_s|_ξ}` with coframe `{dz − τ' y ds, ds}`: at fixed lattice
//! coordinate `ξ` every component is a periodic function.
//!
//! The model form is `i∂∂̄(2 y² Im τ(s) − 4 log Im τ(s) + κ|s|²)` for n = 1, giving
//! `ω_{zz̄} = 1/Im τ`, `ω_{sz̄} = 0`, `ω_{ss̄} = |τ'|²/(Im τ)² + κ`. For n = 2 it is the flat form
//! `(Im Ω)^{-1}` on the fiber plus `κ i ds∧ds̄`. Fibers of the model have unit volume.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::FiberChart;
use crate::error::{Error, Result};
use crate::field::{CMat, FiberMetric, HermitianField};
use crate::grid::Transform;
use crate::hyperdual::Jet;
use crate::solver::compute_eta;
use crate::spectral::Spectral;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Product,
    UniversalElliptic,
    ModulusMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaKind {
    Model,
    ModelPlusPotential,
}

/// One term `c · e^{2πi k·ξ} · s^p s̄^q` of the global potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTerm {
    pub k: Vec<i64>,
    pub p: u32,
    pub q: u32,
    pub c: [f64; 2],
}

impl PotentialTerm {
    pub fn coeff(&self) -> Complex64 {
        Complex64::new(self.c[0], self.c[1])
    }

    /// Terms of `cos(2π k·ξ) · B(s)` with `B = Σ c s^p s̄^q` real-valued.
    pub fn cosine(k: &[i64], base: &[(u32, u32, Complex64)]) -> Vec<PotentialTerm> {
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        let mut out = vec![];
        for &(p, q, c) in base {
            let half = 0.5 * c;
            out.push(PotentialTerm { k: k.to_vec(), p, q, c: [half.re, half.im] });
            out.push(PotentialTerm { k: neg.clone(), p, q, c: [half.re, half.im] });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSpec {
    Samples(Vec<[f64; 2]>),
    Rectangle(Rectangle),
}

/// Declarative description of a torus fibration over a base patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default = "one")]
    pub n: usize,
    /// Fixed `τ` (product, one entry) or polynomial coefficients of `τ(s)` in increasing degree.
    #[serde(default)]
    pub modulus: Option<Vec<[f64; 2]>>,
    /// Constant period matrix for n = 2 products.
    #[serde(default)]
    pub period_matrix: Option<[[[f64; 2]; 2]; 2]>,
    #[serde(default)]
    pub base_kappa: f64,
    #[serde(default)]
    pub omega: Option<OmegaKind>,
    #[serde(default)]
    pub potential: Vec<PotentialTerm>,
    pub base: BaseSpec,
}

fn one() -> usize {
    1
}

fn c2(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

impl FamilySpec {
    fn with_kind(kind: FamilyKind, samples: &[Complex64]) -> Self {
        Self {
            kind,
            n: 1,
            modulus: None,
            period_matrix: None,
            base_kappa: 0.0,
            omega: None,
            potential: vec![],
            base: BaseSpec::Samples(samples.iter().map(|s| [s.re, s.im]).collect()),
        }
    }

    /// `τ(s) = s`, the universal family of elliptic curves.
    pub fn universal_elliptic(samples: &[Complex64]) -> Self {
        Self::with_kind(FamilyKind::UniversalElliptic, samples)
    }

    /// Fixed modulus `τ0` with base term `κ i ds∧ds̄`.
    pub fn product(tau: Complex64, kappa: f64, samples: &[Complex64]) -> Self {
        let mut s = Self::with_kind(FamilyKind::Product, samples);
        s.modulus = Some(vec![[tau.re, tau.im]]);
        s.base_kappa = kappa;
        s
    }

    /// Product of a fixed abelian surface with the base.
    pub fn product_abelian(omega: [[Complex64; 2]; 2], kappa: f64, samples: &[Complex64]) -> Self {
        let mut s = Self::with_kind(FamilyKind::Product, samples);
        s.n = 2;
        s.period_matrix = Some(omega.map(|r| r.map(|v| [v.re, v.im])));
        s.base_kappa = kappa;
        s
    }

    /// Polynomial modulus map with coefficients in increasing degree.
    pub fn modulus_map(coeffs: &[Complex64], samples: &[Complex64]) -> Self {
        let mut s = Self::with_kind(FamilyKind::ModulusMap, samples);
        s.modulus = Some(coeffs.iter().map(|c| [c.re, c.im]).collect());
        s
    }

    pub fn with_potential(mut self, terms: Vec<PotentialTerm>) -> Self {
        self.potential = terms;
        self.omega = Some(OmegaKind::ModelPlusPotential);
        self
    }

    pub fn with_base(mut self, base: BaseSpec) -> Self {
        self.base = base;
        self
    }

    pub fn samples(&self) -> Vec<Complex64> {
        match &self.base {
            BaseSpec::Samples(v) => v.iter().map(|p| c2(*p)).collect(),
            BaseSpec::Rectangle(r) => {
                let lin = |lo: f64, hi: f64, m: usize, i: usize| {
                    if m <= 1 {
                        0.5 * (lo + hi)
                    } else {
                        lo + (hi - lo) * i as f64 / (m - 1) as f64
                    }
                };
                let mut out = vec![];
                for j in 0..r.ny {
                    for i in 0..r.nx {
                        out.push(Complex64::new(lin(r.re[0], r.re[1], r.nx, i), lin(r.im[0], r.im[1], r.ny, j)));
                    }
                }
                out
            }
        }
    }
}

/// Validated family with exact base derivatives of its model form.
#[derive(Debug, Clone)]
pub struct Family {
    spec: FamilySpec,
    n: usize,
    tau: Vec<Complex64>,
    period: [[Complex64; 2]; 2],
    kappa: f64,
    terms: Vec<PotentialTerm>,
    samples: Vec<Complex64>,
}

impl Family {
    /// Structural validation: modulus, potential reality, sample positions.
    pub fn new(spec: FamilySpec) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidFamily(m));
        let n = spec.n;
        if n != 1 && n != 2 {
            return bad(format!("n = {n} not in {{1, 2}}"));
        }
        let mut tau = vec![];
        let mut period = [[ZERO; 2]; 2];
        match (spec.kind, n) {
            (FamilyKind::UniversalElliptic, 1) => {
                if spec.modulus.is_some() {
                    return bad("universal_elliptic takes no modulus".into());
                }
                tau = vec![ZERO, Complex64::new(1.0, 0.0)];
            }
            (FamilyKind::ModulusMap, 1) => {
                let m = spec.modulus.as_ref().filter(|m| !m.is_empty());
                match m {
                    Some(m) => tau = m.iter().map(|v| c2(*v)).collect(),
                    None => return bad("modulus_map needs polynomial coefficients".into()),
                }
            }
            (FamilyKind::Product, 1) => match spec.modulus.as_deref() {
                Some([t]) => tau = vec![c2(*t)],
                _ => return bad("product family needs exactly one fixed modulus".into()),
            },
            (FamilyKind::Product, 2) => match spec.period_matrix {
                Some(p) => {
                    period = p.map(|r| r.map(c2));
                    FiberChart::abelian(period)?;
                }
                None => return bad("n = 2 product family needs period_matrix".into()),
            },
            (k, 2) => return bad(format!("{k:?} families are one-dimensional")),
            _ => unreachable!(),
        }
        if !spec.base_kappa.is_finite() {
            return bad("base_kappa must be finite".into());
        }
        if spec.omega == Some(OmegaKind::Model) && !spec.potential.is_empty() {
            return bad("omega = model but a potential was given".into());
        }
        let mut coeffs: BTreeMap<(Vec<i64>, u32, u32), Complex64> = BTreeMap::new();
        for t in &spec.potential {
            if t.k.len() != 2 * n {
                return bad(format!("potential frequency {:?} must have {} entries", t.k, 2 * n));
            }
            if !(t.c[0].is_finite() && t.c[1].is_finite()) {
                return bad("non-finite potential coefficient".into());
            }
            *coeffs.entry((t.k.clone(), t.p, t.q)).or_insert(ZERO) += t.coeff();
        }
        for ((k, p, q), c) in &coeffs {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            let partner = coeffs.get(&(neg, *q, *p)).copied().unwrap_or(ZERO);
            if (c - partner.conj()).norm() > 1e-14 * (1.0 + c.norm()) {
                return bad(format!("potential is not real: term k={k:?}, p={p}, q={q} lacks its conjugate"));
            }
        }
        let samples = spec.samples();
        if samples.is_empty() {
            return bad("no base samples".into());
        }
        let fam = Self { n, tau, period, kappa: spec.base_kappa, terms: spec.potential.clone(), samples, spec };
        for s in &fam.samples {
            fam.chart(*s).map_err(|e| Error::InvalidFamily(format!("at s = {s}: {e}")))?;
        }
        Ok(fam)
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn has_potential(&self) -> bool {
        !self.terms.is_empty()
    }

    /// Largest absolute lattice frequency in the potential.
    pub fn max_frequency(&self) -> i64 {
        self.terms.iter().flat_map(|t| t.k.iter().map(|v| v.abs())).max().unwrap_or(0)
    }

    fn tau_jet(&self, s: Complex64) -> Jet {
        Jet::poly(&self.tau, s)
    }

    pub fn tau(&self, s: Complex64) -> Complex64 {
        if self.n == 1 {
            self.tau_jet(s).v
        } else {
            self.period[0][0]
        }
    }

    /// `dτ/ds` (zero for n = 2).
    pub fn tau_prime(&self, s: Complex64) -> Complex64 {
        if self.n == 1 {
            self.tau_jet(s).ds
        } else {
            ZERO
        }
    }

    /// `κ = τ'/(τ − τ̄)`: `∂_z` and `∂_z̄` of the frame shift `τ' y` are `κ` and `−κ`.
    pub fn frame_kappa(&self, s: Complex64) -> Complex64 {
        if self.n == 1 {
            let t = self.tau(s);
            self.tau_prime(s) / (t - t.conj())
        } else {
            ZERO
        }
    }

    pub fn chart(&self, s: Complex64) -> Result<FiberChart> {
        if self.n == 1 {
            FiberChart::elliptic(self.tau(s))
        } else {
            FiberChart::abelian(self.period)
        }
    }

    pub fn spectral(&self, transform: &Transform, s: Complex64) -> Result<Spectral> {
        Spectral::new(transform.clone(), self.chart(s)?)
    }

    /// Symbol jets of `∂_{z_α}` and `∂_{z̄_α}` on the mode `e^{2πi k·ξ}`.
    fn symbol_jets(&self, s: Complex64, k: &[i64]) -> (Vec<Jet>, Vec<Jet>) {
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        if self.n == 1 {
            let t = self.tau_jet(s);
            let tb = t.conj();
            let d = (t - tb).inv();
            let (k1, k2) = (Jet::real(k[0] as f64), Jet::real(k[1] as f64));
            let sz = ((-tb) * k1 + k2) * d;
            let szb = (t * k1 - k2) * d;
            (vec![sz.scale(two_pi_i)], vec![szb.scale(two_pi_i)])
        } else {
            let chart = FiberChart::abelian(self.period).expect("validated period matrix");
            let sym = |c: &[Complex64; 4]| {
                Jet::constant(two_pi_i * (0..4).map(|d| c[d] * k[d] as f64).sum::<Complex64>())
            };
            ((0..2).map(|a| sym(chart.dz_coeffs(a))).collect(), (0..2).map(|a| sym(chart.dzb_coeffs(a))).collect())
        }
    }

    /// Components of ω at base point `s` in the periodic frame.
    pub fn omega(&self, transform: &Transform, s: Complex64) -> Result<OmegaSample> {
        let sp = self.spectral(transform, s)?;
        let grid = *sp.grid();
        let n = self.n;
        let nodes = grid.len();
        if 2 * self.max_frequency() >= grid.size() as i64 {
            return Err(Error::InvalidFamily(format!(
                "potential frequency {} is not resolved on a grid of size {}",
                self.max_frequency(),
                grid.size()
            )));
        }
        let mut g = vec![ZERO; nodes * n * n];
        let mut g_s = vec![ZERO; nodes * n * n];
        let mut t_s = vec![vec![ZERO; nodes]; n];
        let mut t_ss = vec![0.0; nodes];

        // model part
        let (fiber0, fiber0_s, base0) = if n == 1 {
            let t = self.tau_jet(s);
            let im = (t - t.conj()).scale(Complex64::new(0.0, -0.5));
            let inv = im.inv();
            let sj = Jet::s(s);
            let psi = im.ln().scale(Complex64::new(-4.0, 0.0)) + (sj * sj.conj()).scale(Complex64::new(self.kappa, 0.0));
            (CMat::from_rows(&[&[inv.v]]), CMat::from_rows(&[&[inv.ds]]), psi.dssb.re)
        } else {
            let y = CMat::from_rows(&[
                &[Complex64::new(self.period[0][0].im, 0.0), Complex64::new(self.period[0][1].im, 0.0)],
                &[Complex64::new(self.period[1][0].im, 0.0), Complex64::new(self.period[1][1].im, 0.0)],
            ]);
            (y.inverse().expect("validated period matrix"), CMat::zeros(2), self.kappa)
        };
        for i in 0..nodes {
            for a in 0..n {
                for b in 0..n {
                    g[i * n * n + a * n + b] = fiber0.a[a][b];
                    g_s[i * n * n + a * n + b] = fiber0_s.a[a][b];
                }
            }
            t_ss[i] = base0;
        }

        // potential part
        for term in &self.terms {
            let sj = Jet::s(s);
            let m = (sj.powi(term.p) * sj.conj().powi(term.q)).scale(term.coeff());
            let (sz, szb) = self.symbol_jets(s, &term.k);
            let mode = grid.sample(|xi| {
                let phase: f64 = (0..2 * n).map(|d| term.k[d] as f64 * xi[d]).sum();
                Complex64::from_polar(1.0, 2.0 * PI * phase)
            });
            let fib: Vec<Jet> = (0..n * n).map(|ab| sz[ab / n] * szb[ab % n] * m).collect();
            let mixed: Vec<Jet> = (0..n).map(|b| szb[b] * m).collect();
            for (i, e) in mode.iter().enumerate() {
                for ab in 0..n * n {
                    g[i * n * n + ab] += e * fib[ab].v;
                    g_s[i * n * n + ab] += e * fib[ab].ds;
                }
                for b in 0..n {
                    t_s[b][i] += e * mixed[b].ds;
                }
                t_ss[i] += (e * m.dssb).re;
            }
        }
        let mut gf = HermitianField::zeros(n, nodes);
        let mut gsf = HermitianField::zeros(n, nodes);
        for i in 0..nodes {
            let mut m = CMat::zeros(n);
            let mut ms = CMat::zeros(n);
            for a in 0..n {
                for b in 0..n {
                    m.a[a][b] = g[i * n * n + a * n + b];
                    ms.a[a][b] = g_s[i * n * n + a * n + b];
                }
            }
            gf.set(i, &m);
            gsf.set(i, &ms);
        }
        let gf = crate::solver::hermitize(&gf);
        let metric = FiberMetric::new(gf).map_err(|e| match e {
            Error::Definiteness(m) => Error::InvalidFamily(format!("ω is not fiberwise positive at s = {s}: {m}")),
            other => other,
        })?;
        Ok(OmegaSample {
            s,
            spectral: sp,
            g: metric,
            g_s: gsf,
            t_s,
            t_ss,
            kappa: self.frame_kappa(s),
            tau_prime: self.tau_prime(s),
        })
    }

    /// Checks fiberwise positivity of ω at every base sample.
    pub fn validate_positivity(&self, transform: &Transform) -> Result<()> {
        for s in &self.samples {
            self.omega(transform, *s)?;
        }
        Ok(())
    }

    /// `η` at base point `s`.
    pub fn eta(&self, transform: &Transform, s: Complex64) -> Result<Vec<f64>> {
        Ok(compute_eta(&self.omega(transform, s)?.g))
    }
}

/// Validates the spec and the fiberwise positivity of ω on `transform`'s grid.
pub fn make_family(spec: FamilySpec, transform: &Transform) -> Result<Family> {
    let fam = Family::new(spec)?;
    if fam.n() != transform.grid().n() {
        return Err(Error::InvalidFamily("grid dimension does not match the family".into()));
    }
    fam.validate_positivity(transform)?;
    Ok(fam)
}

/// Components of ω on one fiber in the periodic frame.
#[derive(Debug, Clone)]
pub struct OmegaSample {
    pub s: Complex64,
    pub spectral: Spectral,
    /// Fiber block `ω_{αβ̄}`.
    pub g: FiberMetric,
    /// `e_s ω_{αβ̄}` at fixed `ξ`.
    pub g_s: HermitianField,
    /// `ω_{sβ̄}`.
    pub t_s: Vec<Vec<Complex64>>,
    /// `ω_{ss̄}`.
    pub t_ss: Vec<f64>,
    /// `τ'/(τ − τ̄)`.
    pub kappa: Complex64,
    pub tau_prime: Complex64,
}

impl OmegaSample {
    /// Full `(n+1)×(n+1)` component matrix at a node (fiber indices first, base last).
    pub fn full_matrix(&self, i: usize) -> CMat {
        full_matrix(self.g.g(), &self.t_s, &self.t_ss, i)
    }
}

/// Assembles the `(n+1)×(n+1)` component matrix from blocks.
pub fn full_matrix(fiber: &HermitianField, t_s: &[Vec<Complex64>], t_ss: &[f64], i: usize) -> CMat {
    let n = fiber.n();
    let mut m = CMat::zeros(n + 1);
    for a in 0..n {
        for b in 0..n {
            m.a[a][b] = fiber.get(i, a, b);
        }
        // ω_{αs̄} = conj(ω_{sᾱ})
        m.a[a][n] = t_s[a][i].conj();
        m.a[n][a] = t_s[a][i];
    }
    m.a[n][n] = Complex64::new(t_ss[i], 0.0);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FiberGrid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn universal_model_matches_closed_form() {
        let tr = Transform::new(FiberGrid::new(1, 8).unwrap());
        let s = c(0.3, 0.8);
        let fam = Family::new(FamilySpec::universal_elliptic(&[s])).unwrap();
        let om = fam.omega(&tr, s).unwrap();
        assert!((om.g.g().get(0, 0, 0).re - 1.0 / 0.8).abs() < 1e-15);
        assert!((om.t_ss[3] - 1.0 / 0.64).abs() < 1e-14);
        assert!((om.g_s.get(0, 0, 0) - c(0.0, 0.5 / 0.64)).norm() < 1e-14);
        assert!((fam.frame_kappa(s) - c(0.0, -1.0 / 1.6)).norm() < 1e-15);
    }

    #[test]
    fn rejects_complex_potential() {
        let s = c(0.0, 1.0);
        let spec = FamilySpec::universal_elliptic(&[s])
            .with_potential(vec![PotentialTerm { k: vec![1, 0], p: 0, q: 0, c: [0.1, 0.0] }]);
        assert!(matches!(Family::new(spec), Err(Error::InvalidFamily(_))));
    }

    #[test]
    fn reports_offending_sample() {
        let tr = Transform::new(FiberGrid::new(1, 16).unwrap());
        let good = c(0.0, 1.0);
        let bad = c(0.0, 3.0);
        let spec = FamilySpec::universal_elliptic(&[good, bad])
            .with_potential(PotentialTerm::cosine(&[1, 0], &[(0, 0, c(0.1, 0.0))]));
        let err = make_family(spec, &tr).unwrap_err();
        assert!(format!("{err}").contains("s = 0+3i"), "{err}");
    }

    #[test]
    fn rectangle_samples_are_row_major() {
        let spec = FamilySpec::universal_elliptic(&[]).with_base(BaseSpec::Rectangle(Rectangle {
            re: [-1.0, 1.0],
            im: [1.0, 2.0],
            nx: 3,
            ny: 2,
        }));
        let s = spec.samples();
        assert_eq!(s.len(), 6);
        assert_eq!(s[1], c(0.0, 1.0));
        assert_eq!(s[5], c(1.0, 2.0));
    }
}
