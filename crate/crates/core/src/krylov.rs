//! Restarted GMRES with right preconditioning on real vectors.

/// Stopping rules for [`gmres`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Target for `|b - A x| / |b|`.
    pub tol: f64,
    /// Total inner iterations across restarts.
    pub max_iters: usize,
    /// Krylov subspace dimension before a restart.
    pub restart: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            tol: 1e-10,
            max_iters: 400,
            restart: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// Final relative residual estimate.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solves `A x = b` starting from the contents of `x`, with the operator
/// applied as `A (M y)`; `x = M y` on return.
pub fn gmres<A, M>(mut apply: A, mut precond: M, b: &[f64], x: &mut [f64], opts: GmresOptions) -> GmresOutcome
where
    A: FnMut(&[f64]) -> Vec<f64>,
    M: FnMut(&[f64]) -> Vec<f64>,
{
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresOutcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let m = opts.restart.max(1);
    let mut total = 0;
    loop {
        let ax = apply(x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        drop(ax);
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= opts.tol || total >= opts.max_iters {
            return GmresOutcome {
                iterations: total,
                residual: rel,
                converged: rel <= opts.tol,
            };
        }
        r.iter_mut().for_each(|v| *v /= beta);
        let mut basis: Vec<Vec<f64>> = vec![r];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut rel_est = rel;
        while k < m && total < opts.max_iters {
            let mut w = apply(&precond(&basis[k]));
            for (j, v) in basis.iter().enumerate() {
                let hjk = dot(&w, v);
                h[j][k] = hjk;
                axpy(-hjk, v, &mut w);
            }
            // one reorthogonalization pass keeps the basis clean at tight tolerances
            for (j, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[j][k] += c;
                axpy(-c, v, &mut w);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / d;
                sn[k] = h[k + 1][k] / d;
            }
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            rel_est = g[k].abs() / bnorm;
            if rel_est <= opts.tol || wn == 0.0 {
                break;
            }
            w.iter_mut().for_each(|v| *v /= wn);
            basis.push(w);
        }
        // back substitution for y, then x += M (V y)
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; x.len()];
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut update);
        }
        drop(basis);
        let dx = precond(&update);
        axpy(1.0, &dx, x);
        if rel_est <= opts.tol && k < m {
            // verify with a true residual on the next pass
            continue;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 50;
        let apply = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = 4.0 * v[i];
                    if i > 0 {
                        s -= 1.5 * v[i - 1];
                    }
                    if i + 1 < n {
                        s -= 0.5 * v[i + 1];
                    }
                    s
                })
                .collect()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let out = gmres(
            apply,
            |v: &[f64]| v.iter().map(|x| x / 4.0).collect(),
            &b,
            &mut x,
            GmresOptions {
                tol: 1e-12,
                max_iters: 200,
                restart: 7,
            },
        );
        assert!(out.converged);
        let r: f64 = apply(&x).iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(r < 1e-11 * norm(&b));
    }
}
