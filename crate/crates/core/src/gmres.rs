//! Restarted GMRES with right preconditioning for real linear systems.

#[derive(Debug, Clone, Copy)]
pub struct GmresConfig {
    pub restart: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { restart: 40, max_iters: 400, rel_tol: 1e-12, abs_tol: 1e-300 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` with `A` applied through `apply` and right preconditioner `precond ≈ A^{-1}`.
pub fn gmres<A, P>(mut apply: A, mut precond: P, b: &[f64], x0: Option<&[f64]>, cfg: &GmresConfig) -> (Vec<f64>, GmresOutcome)
where
    A: FnMut(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = norm(b);
    let target = (cfg.rel_tol * bnorm).max(cfg.abs_tol);
    let mut total = 0;
    let residual_of = |x: &[f64], apply: &mut A| -> Vec<f64> {
        let ax = apply(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut r = residual_of(&x, &mut apply);
    let mut rnorm = norm(&r);
    if bnorm == 0.0 {
        return (vec![0.0; n], GmresOutcome { iterations: 0, residual: 0.0, converged: true });
    }
    while rnorm > target && total < cfg.max_iters {
        let m = cfg.restart;
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = rnorm;
        v.push(r.iter().map(|ri| ri / rnorm).collect());
        let mut k_used = 0;
        for k in 0..m {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            // second orthogonalization pass for stability
            for (j, vj) in v.iter().enumerate() {
                let c = dot(&w, vj);
                h[j][k] += c;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= c * vi;
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= target || total >= cfg.max_iters || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] == 0.0 { 0.0 } else { s / h[i][i] };
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[j]) {
                *xi += yj * zi;
            }
        }
        r = residual_of(&x, &mut apply);
        let new_norm = norm(&r);
        if !(new_norm < rnorm) && new_norm > target {
            rnorm = new_norm;
            break;
        }
        rnorm = new_norm;
    }
    (x, GmresOutcome { iterations: total, residual: rnorm, converged: rnorm <= target })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [0.5, 3.0, -1.0], [0.0, 2.0, 5.0]];
        let b = [1.0, -2.0, 0.5];
        let apply = |x: &[f64]| (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect();
        let (x, out) = gmres(apply, |r: &[f64]| r.to_vec(), &b, None, &GmresConfig::default());
        assert!(out.converged);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let d = [2.0, 5.0, 0.25, 7.0];
        let b = [1.0, 1.0, 1.0, 1.0];
        let apply = |x: &[f64]| x.iter().zip(&d).map(|(xi, di)| xi * di).collect();
        let pre = |r: &[f64]| r.iter().zip(&d).map(|(ri, di)| ri / di).collect();
        let (_, out) = gmres(apply, pre, &b, None, &GmresConfig::default());
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }
}
