//! Small dense Hermitian linear algebra used at every grid point.
//!
//! General routines go through `nalgebra`. The packed routines at the bottom
//! avoid heap allocation and are used by the hot solver kernels.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest complex dimension supported by the allocation-free kernels.
pub const MAX_DIM: usize = 6;

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(values[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Lower-triangular `L` with `a = L L^†`, or `None` when `a` is not positive definite.
pub fn cholesky(a: &CMatrix) -> Option<CMatrix> {
    // nalgebra's complex Cholesky does not reject negative pivots.
    let mut s = Small::from_matrix(&hermitian_part(a));
    s.cholesky_logdet()?;
    let n = a.nrows();
    Some(CMatrix::from_fn(n, n, |i, j| {
        if j <= i {
            s.a[i][j]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    a.clone().try_inverse().ok_or(Error::Singular)
}

pub fn det(a: &CMatrix) -> Complex64 {
    a.determinant()
}

/// Real part of the trace of `a^{-1} b`, i.e. the trace of `b` with respect to `a`.
pub fn trace_with_respect_to(a_inv: &CMatrix, b: &CMatrix) -> f64 {
    (a_inv * b).trace().re
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Maximum entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of the pencil `(g, alpha)`: eigenvalues of `alpha^{-1} g`
/// sorted in descending order, with `alpha`-orthonormal eigenvectors as columns.
pub fn generalized_eigen(g: &CMatrix, alpha: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let l = cholesky(alpha).ok_or(Error::Singular)?;
    let l_inv = l
        .clone()
        .solve_lower_triangular(&identity(alpha.nrows()))
        .ok_or(Error::Singular)?;
    let reduced = hermitian_part(&(&l_inv * g * l_inv.adjoint()));
    let eig = reduced.symmetric_eigen();
    let n = g.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let back = l_inv.adjoint();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let v = &back * eig.eigenvectors.column(k);
        vectors.set_column(col, &v);
    }
    Ok((values, vectors))
}

/// Eigenvalues of `alpha^{-1} g`, descending.
pub fn generalized_eigenvalues(g: &CMatrix, alpha: &CMatrix) -> Result<Vec<f64>> {
    generalized_eigen(g, alpha).map(|(values, _)| values)
}

/// `alpha`-orthonormal frame: returns `(L, L^{-1})` with `alpha = L L^†`.
pub fn orthonormal_frame(alpha: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let l = cholesky(alpha).ok_or(Error::Singular)?;
    let l_inv = l
        .clone()
        .solve_lower_triangular(&identity(alpha.nrows()))
        .ok_or(Error::Singular)?;
    Ok((l, l_inv))
}

// ---------------------------------------------------------------------------
// Packed Hermitian storage: `n*n` reals per matrix. The diagonal holds the real
// diagonal entries, position `(i, j)` with `i < j` the real part of entry
// `(i, j)` and position `(j, i)` its imaginary part.

#[inline]
pub fn packed_get(p: &[f64], n: usize, i: usize, j: usize) -> Complex64 {
    use std::cmp::Ordering::*;
    match i.cmp(&j) {
        Equal => Complex64::new(p[i * n + i], 0.0),
        Less => Complex64::new(p[i * n + j], p[j * n + i]),
        Greater => Complex64::new(p[j * n + i], -p[i * n + j]),
    }
}

/// Packs the Hermitian part of `m`.
pub fn pack_into(m: &CMatrix, out: &mut [f64]) {
    let n = m.nrows();
    for i in 0..n {
        out[i * n + i] = m[(i, i)].re;
        for j in (i + 1)..n {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[i * n + j] = z.re;
            out[j * n + i] = z.im;
        }
    }
}

/// `Re tr(A B)` for Hermitian `A`, `B` given in packed form.
#[inline]
pub fn packed_trace_product(a: &[f64], b: &[f64], n: usize) -> f64 {
    let mut t = 0.0;
    for i in 0..n {
        t += a[i * n + i] * b[i * n + i];
        for j in (i + 1)..n {
            t += 2.0 * (a[i * n + j] * b[i * n + j] + a[j * n + i] * b[j * n + i]);
        }
    }
    t
}

pub fn unpack(p: &[f64], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| packed_get(p, n, i, j))
}

/// Stack-allocated square complex matrix for the allocation-free kernels.
#[derive(Clone, Copy)]
pub struct Small {
    pub n: usize,
    pub a: [[Complex64; MAX_DIM]; MAX_DIM],
}

impl Small {
    pub fn zeros(n: usize) -> Self {
        debug_assert!(n <= MAX_DIM);
        Small {
            n,
            a: [[Complex64::new(0.0, 0.0); MAX_DIM]; MAX_DIM],
        }
    }

    pub fn from_packed(p: &[f64], n: usize) -> Self {
        let mut s = Small::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.a[i][j] = packed_get(p, n, i, j);
            }
        }
        s
    }

    pub fn write_packed(&self, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i * n + i] = self.a[i][i].re;
            for j in (i + 1)..n {
                let z = (self.a[i][j] + self.a[j][i].conj()) * 0.5;
                out[i * n + j] = z.re;
                out[j * n + i] = z.im;
            }
        }
    }

    /// In-place Cholesky factorization `A = L L^†`; returns `log det A` or
    /// `None` if a pivot is not strictly positive.
    pub fn cholesky_logdet(&mut self) -> Option<f64> {
        let n = self.n;
        let mut logdet = 0.0;
        for j in 0..n {
            let mut d = self.a[j][j].re;
            for k in 0..j {
                d -= self.a[j][k].norm_sqr();
            }
            if !(d > 0.0) {
                return None;
            }
            let ljj = d.sqrt();
            logdet += 2.0 * ljj.ln();
            self.a[j][j] = Complex64::new(ljj, 0.0);
            for i in (j + 1)..n {
                let mut s = self.a[i][j];
                for k in 0..j {
                    s -= self.a[i][k] * self.a[j][k].conj();
                }
                self.a[i][j] = s / ljj;
            }
        }
        Some(logdet)
    }

    /// Inverse of a Hermitian positive definite matrix via Cholesky.
    /// Returns `(inverse, log det)`.
    pub fn hpd_inverse(&self) -> Option<(Small, f64)> {
        let n = self.n;
        let mut l = *self;
        let logdet = l.cholesky_logdet()?;
        // Invert L (lower triangular) into m.
        let mut m = Small::zeros(n);
        for j in 0..n {
            m.a[j][j] = Complex64::new(1.0, 0.0) / l.a[j][j];
            for i in (j + 1)..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in j..i {
                    s -= l.a[i][k] * m.a[k][j];
                }
                m.a[i][j] = s / l.a[i][i];
            }
        }
        // A^{-1} = L^{-†} L^{-1}
        let mut inv = Small::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in i.max(j)..n {
                    s += m.a[k][i].conj() * m.a[k][j];
                }
                inv.a[i][j] = s;
            }
        }
        Some((inv, logdet))
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.a[i][j])
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut s = Small::zeros(m.nrows());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                s.a[i][j] = m[(i, j)];
            }
        }
        s
    }
}

/// Eigen-decomposition of a Hermitian `Small` by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and orthonormal eigenvectors as
/// the columns of the second matrix.
pub fn small_hermitian_eigen(a: &Small) -> ([f64; MAX_DIM], Small) {
    let n = a.n;
    let mut m = *a;
    let mut v = Small::zeros(n);
    for i in 0..n {
        v.a[i][i] = Complex64::new(1.0, 0.0);
        m.a[i][i].im = 0.0;
    }
    let scale: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a.a[i][j].norm_sqr()).sum::<f64>();
    for _sweep in 0..50 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.a[i][j].norm_sqr();
            }
        }
        if off <= 1e-32 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.a[p][q];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                // phase: make the (p, q) entry real and positive
                let ph = apq / r;
                for k in 0..n {
                    m.a[k][q] *= ph.conj();
                    v.a[k][q] *= ph.conj();
                }
                for k in 0..n {
                    m.a[q][k] *= ph;
                }
                // real rotation annihilating the (p, q) entry
                let theta = (m.a[q][q].re - m.a[p][p].re) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (m.a[k][p], m.a[k][q]);
                    m.a[k][p] = kp * c - kq * s;
                    m.a[k][q] = kp * s + kq * c;
                    let (vp, vq) = (v.a[k][p], v.a[k][q]);
                    v.a[k][p] = vp * c - vq * s;
                    v.a[k][q] = vp * s + vq * c;
                }
                for k in 0..n {
                    let (pk, qk) = (m.a[p][k], m.a[q][k]);
                    m.a[p][k] = pk * c - qk * s;
                    m.a[q][k] = pk * s + qk * c;
                }
                m.a[p][q] = Complex64::new(0.0, 0.0);
                m.a[q][p] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let mut order = [0usize; MAX_DIM];
    for (i, o) in order.iter_mut().enumerate().take(n) {
        *o = i;
    }
    order[..n].sort_by(|&x, &y| m.a[y][y].re.total_cmp(&m.a[x][x].re));
    let mut values = [0.0; MAX_DIM];
    let mut vectors = Small::zeros(n);
    for (col, &k) in order[..n].iter().enumerate() {
        values[col] = m.a[k][k].re;
        for r in 0..n {
            vectors.a[r][col] = v.a[r][k];
        }
    }
    (values, vectors)
}

/// Stack-allocated counterpart of [`generalized_eigen`]; `None` if `alpha`
/// is not positive definite.
pub fn small_generalized_eigen(g: &Small, alpha: &Small) -> Option<([f64; MAX_DIM], Small)> {
    let n = g.n;
    let mut l = *alpha;
    l.cholesky_logdet()?;
    // m = L^{-1} (lower triangular)
    let mut li = Small::zeros(n);
    for j in 0..n {
        li.a[j][j] = Complex64::new(1.0, 0.0) / l.a[j][j];
        for i in (j + 1)..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in j..i {
                s -= l.a[i][k] * li.a[k][j];
            }
            li.a[i][j] = s / l.a[i][i];
        }
    }
    // reduced = L^{-1} g L^{-dagger}
    let mut t = Small::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..=i {
                s += li.a[i][k] * g.a[k][j];
            }
            t.a[i][j] = s;
        }
    }
    let mut reduced = Small::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..=j {
                s += t.a[i][k] * li.a[j][k].conj();
            }
            reduced.a[i][j] = s;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let z = (reduced.a[i][j] + reduced.a[j][i].conj()) * 0.5;
            reduced.a[i][j] = z;
            reduced.a[j][i] = z.conj();
        }
    }
    let (values, w) = small_hermitian_eigen(&reduced);
    // eigenvectors of the pencil: L^{-dagger} w
    let mut vectors = Small::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in i..n {
                s += li.a[k][i].conj() * w.a[k][j];
            }
            vectors.a[i][j] = s;
        }
    }
    Some((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hpd() -> CMatrix {
        let b = CMatrix::from_fn(3, 3, |i, j| {
            Complex64::new((i + 2 * j) as f64 * 0.3 - 0.5, (i as f64 - j as f64) * 0.2)
        });
        &b * b.adjoint() + identity(3)
    }

    #[test]
    fn generalized_eigen_reconstructs() {
        let alpha = sample_hpd();
        let g = CMatrix::from_fn(3, 3, |i, j| Complex64::new(1.0 + (i * j) as f64, 0.0));
        let g = hermitian_part(&g);
        let (values, vectors) = generalized_eigen(&g, &alpha).unwrap();
        let a = inverse(&alpha).unwrap() * &g;
        for k in 0..3 {
            let v = vectors.column(k);
            let residual = &a * v - v * Complex64::new(values[k], 0.0);
            assert!(residual.norm() < 1e-10);
        }
        let gram = vectors.adjoint() * &alpha * &vectors;
        assert!((gram - identity(3)).norm() < 1e-10);
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn packed_roundtrip_and_small_inverse() {
        let a = sample_hpd();
        let mut p = vec![0.0; 9];
        pack_into(&a, &mut p);
        assert!((unpack(&p, 3) - &a).norm() < 1e-14);
        let (inv, logdet) = Small::from_packed(&p, 3).hpd_inverse().unwrap();
        assert!((inv.to_matrix() * &a - identity(3)).norm() < 1e-12);
        assert!((logdet - det(&a).re.ln()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = diag(&[1.0, -1.0]);
        assert!(Small::from_matrix(&m).cholesky_logdet().is_none());
        assert!(cholesky(&m).is_none());
    }

    #[test]
    fn small_eigen_matches_nalgebra() {
        for seed in 0..20 {
            let n = 2 + seed % 5;
            let b = CMatrix::from_fn(n, n, |i, j| {
                let x = ((i * 7 + j * 13 + seed * 3) as f64).sin();
                let y = ((i * 5 + j * 3 + seed * 11) as f64).cos();
                Complex64::new(x, y)
            });
            let alpha = &b * b.adjoint() + identity(n);
            let g = hermitian_part(&CMatrix::from_fn(n, n, |i, j| {
                Complex64::new(((i + 2 * j + seed) as f64).cos(), ((3 * i + j) as f64 * 0.7).sin())
            }));
            let (want, _) = generalized_eigen(&g, &alpha).unwrap();
            let (vals, vecs) = small_generalized_eigen(&Small::from_matrix(&g), &Small::from_matrix(&alpha)).unwrap();
            let v = vecs.to_matrix();
            for k in 0..n {
                assert!((vals[k] - want[k]).abs() < 1e-12 * (1.0 + want[k].abs()), "{vals:?} {want:?}");
            }
            // alpha-orthonormal eigenvectors: V^dagger alpha V = I and V^dagger g V = diag
            let gram = v.adjoint() * &alpha * &v;
            let proj = v.adjoint() * &g * &v;
            for i in 0..n {
                for j in 0..n {
                    let d = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - Complex64::new(d, 0.0)).norm() < 1e-12);
                    let e = if i == j { vals[i] } else { 0.0 };
                    assert!((proj[(i, j)] - Complex64::new(e, 0.0)).norm() < 1e-11);
                }
            }
        }
    }
}
