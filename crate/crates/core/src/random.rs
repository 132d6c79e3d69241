//! Seeded random component matrices with positive-definite fiber block, and the pointwise
//! algebraic identities they must satisfy.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{contraction_defect, semmes_defect};
use crate::field::CMat;

/// `(n+1)×(n+1)` Hermitian component matrix, fiber indices first; the fiber block is
/// `B B* + δ I` and the base entries are unconstrained.
pub fn random_form<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let d = n + 1;
    let mut b = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            b.a[i][j] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let delta = rng.gen_range(0.1..1.0);
    let fiber = b.mul(&b.adjoint()).add(&CMat::identity(n).scale(Complex64::new(delta, 0.0)));
    let mut m = CMat::zeros(d);
    for i in 0..n {
        for j in 0..n {
            m.a[i][j] = fiber.a[i][j];
        }
        let t = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        m.a[n][i] = t;
        m.a[i][n] = t.conj();
    }
    m.a[n][n] = Complex64::new(rng.gen_range(-2.0..2.0), 0.0);
    m
}

pub fn random_forms(seed: u64, count: usize, n: usize) -> Vec<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_form(&mut rng, n)).collect()
}

fn fiber_inverse(full: &CMat) -> Result<CMat> {
    let n = full.d - 1;
    let mut f = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            f.a[i][j] = full.a[i][j];
        }
    }
    if f.min_eigenvalue() <= 0.0 {
        return Err(Error::Definiteness("fiber block is not positive-definite".into()));
    }
    f.inverse().ok_or_else(|| Error::Definiteness("singular fiber block".into()))
}

/// `c = τ_{ss̄} − τ_{sβ̄} τ^{β̄α} τ_{αs̄}` of one component matrix.
pub fn pointwise_curvature(full: &CMat) -> Result<f64> {
    let n = full.d - 1;
    let g = fiber_inverse(full)?;
    let mut c = full.a[n][n];
    for a in 0..n {
        for b in 0..n {
            c -= full.a[n][b] * g.a[b][a] * full.a[a][n];
        }
    }
    Ok(c.re)
}

/// `a^α = −τ_{sβ̄} τ^{β̄α}`.
pub fn pointwise_lift(full: &CMat) -> Result<Vec<Complex64>> {
    let n = full.d - 1;
    let g = fiber_inverse(full)?;
    Ok((0..n).map(|a| -(0..n).map(|b| full.a[n][b] * g.a[b][a]).sum::<Complex64>()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub n: usize,
    pub count: usize,
    pub semmes_max: f64,
    pub contraction_max: f64,
    /// `max |c · det(fiber block) − det(full)|`.
    pub det_oracle_max: f64,
}

/// Semmes, contraction and determinant identities on `count` seeded forms.
pub fn identity_suite(seed: u64, count: usize, n: usize) -> Result<IdentityReport> {
    let mut semmes: f64 = 0.0;
    let mut contraction: f64 = 0.0;
    let mut det: f64 = 0.0;
    for m in random_forms(seed, count, n) {
        let c = pointwise_curvature(&m)?;
        let a = pointwise_lift(&m)?;
        semmes = semmes.max(semmes_defect(&m, c));
        contraction = contraction.max(contraction_defect(&m, &a, c));
        let mut fiber = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                fiber.a[i][j] = m.a[i][j];
            }
        }
        det = det.max((c * fiber.det().re - m.det().re).abs());
    }
    Ok(IdentityReport {
        seed,
        n,
        count,
        semmes_max: semmes,
        contraction_max: contraction,
        det_oracle_max: det,
    })
}
