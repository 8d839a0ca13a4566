//! Dense pointwise exterior algebra over `C^n`.
//!
//! The `2n` basis 1-forms are numbered `2a -> dz^a` and `2a+1 -> dzbar^a`. A
//! monomial is a bitmask of basis indices, always read in increasing order,
//! so a form is a vector of `2^(2n)` complex coefficients. This is meant for
//! oracles and identity checks, not for the solver's hot loops.
//!
//! Forms of bidegree `(n-1, n-1)` are described by components `Theta_{i jbar}`
//! through
//!
//! ```text
//! Theta = i^(n-1) sum_{i,j} s(i,j) Theta_{i jbar} E_{ij}
//! ```
//!
//! where `E_{ij}` is the ordered monomial omitting `dz^i` and `dzbar^j`, and
//! `s(i,j) = 1` for `i <= j`, `-1` otherwise. With this choice
//! `dz^i ^ dzbar^j ^ s(i,j) E_{ij} = dz^1 ^ dzbar^1 ^ ... ^ dz^n ^ dzbar^n`,
//! the components of `omega^(n-1)` are `(n-1)!` times the cofactor matrix of
//! `omega`, and in an orthonormal frame the Hodge star of an `(n-1, n-1)`
//! form is the `(1,1)` form with components `Theta_{j ibar}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    n: usize,
    coeffs: Vec<Complex64>,
}

#[inline]
fn dz_bit(a: usize) -> usize {
    1 << (2 * a)
}

#[inline]
fn dzbar_bit(a: usize) -> usize {
    1 << (2 * a + 1)
}

/// Sign of `mono(s) ^ mono(t)` relative to `mono(s | t)`, or 0 if they overlap.
#[inline]
fn wedge_sign(s: usize, t: usize) -> f64 {
    if s & t != 0 {
        return 0.0;
    }
    // count pairs (a in s, b in t) with a > b
    let mut count = 0u32;
    let mut rest = t;
    while rest != 0 {
        let b = rest.trailing_zeros();
        rest &= rest - 1;
        count += (s >> (b + 1)).count_ones();
    }
    if count % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `s(i, j)` from the module docs.
#[inline]
pub fn component_sign(i: usize, j: usize) -> f64 {
    if i <= j {
        1.0
    } else {
        -1.0
    }
}

impl Form {
    pub fn zero(n: usize) -> Self {
        Form {
            n,
            coeffs: vec![ZERO; 1 << (2 * n)],
        }
    }

    pub fn scalar(n: usize, c: Complex64) -> Self {
        let mut f = Self::zero(n);
        f.coeffs[0] = c;
        f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn full_mask(&self) -> usize {
        (1 << (2 * self.n)) - 1
    }

    pub fn coeff(&self, mask: usize) -> Complex64 {
        self.coeffs[mask]
    }

    pub fn set_coeff(&mut self, mask: usize, c: Complex64) {
        self.coeffs[mask] = c;
    }

    /// `sum_a (p_a dz^a + q_a dzbar^a)`.
    pub fn one_form(p: &[Complex64], q: &[Complex64]) -> Self {
        let n = p.len();
        let mut f = Self::zero(n);
        for a in 0..n {
            f.coeffs[dz_bit(a)] = p[a];
            f.coeffs[dzbar_bit(a)] = q[a];
        }
        f
    }

    /// The real `(1,1)` form `i sum h_{i jbar} dz^i ^ dzbar^j`.
    pub fn from_hermitian(h: &CMatrix) -> Self {
        let n = h.nrows();
        let mut f = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                let mask = dz_bit(i) | dzbar_bit(j);
                f.coeffs[mask] += I * h[(i, j)] * wedge_sign(dz_bit(i), dzbar_bit(j));
            }
        }
        f
    }

    /// Components `h_{i jbar}` of a `(1,1)` form, i.e. the inverse of
    /// [`Self::from_hermitian`] (no Hermitian projection).
    pub fn one_one_components(&self) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(n, n, |i, j| {
            let mask = dz_bit(i) | dzbar_bit(j);
            self.coeffs[mask] * wedge_sign(dz_bit(i), dzbar_bit(j)) / I
        })
    }

    /// Builds an `(n-1, n-1)` form from components `Theta_{i jbar}`.
    pub fn from_codim_one_components(theta: &CMatrix) -> Self {
        let n = theta.nrows();
        let mut f = Self::zero(n);
        let full = f.full_mask();
        let scale = I.powu((n - 1) as u32);
        for i in 0..n {
            for j in 0..n {
                let mask = full & !dz_bit(i) & !dzbar_bit(j);
                f.coeffs[mask] += scale * component_sign(i, j) * theta[(i, j)];
            }
        }
        f
    }

    /// Components `Theta_{i jbar}` of the `(n-1, n-1)` part.
    pub fn codim_one_components(&self) -> CMatrix {
        let n = self.n;
        let full = self.full_mask();
        let scale = I.powu((n - 1) as u32);
        CMatrix::from_fn(n, n, |i, j| {
            let mask = full & !dz_bit(i) & !dzbar_bit(j);
            self.coeffs[mask] / (scale * component_sign(i, j))
        })
    }

    /// Coefficient of `dz^1 ^ dzbar^1 ^ ... ^ dz^n ^ dzbar^n`.
    pub fn top_coefficient(&self) -> Complex64 {
        self.coeffs[self.full_mask()]
    }

    pub fn wedge(&self, other: &Form) -> Form {
        assert_eq!(self.n, other.n);
        let mut out = Form::zero(self.n);
        for (s, &a) in self.coeffs.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            for (t, &b) in other.coeffs.iter().enumerate() {
                if b == ZERO || s & t != 0 {
                    continue;
                }
                out.coeffs[s | t] += a * b * wedge_sign(s, t);
            }
        }
        out
    }

    /// `self^k`, with `self^0 = 1`.
    pub fn power(&self, k: usize) -> Form {
        let mut out = Form::scalar(self.n, Complex64::new(1.0, 0.0));
        for _ in 0..k {
            out = out.wedge(self);
        }
        out
    }

    pub fn add(&self, other: &Form) -> Form {
        Form {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Form) -> Form {
        Form {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Form {
        Form {
            n: self.n,
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Complex conjugate form.
    pub fn conj(&self) -> Form {
        let mut out = Form::zero(self.n);
        for (s, &a) in self.coeffs.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            let mut t = 0;
            let mut sign = 1.0;
            for b in 0..self.n {
                let pair = (s >> (2 * b)) & 3;
                t |= match pair {
                    1 => 2,
                    2 => 1,
                    3 => {
                        sign = -sign;
                        3
                    }
                    _ => 0,
                } << (2 * b);
            }
            out.coeffs[t] += a.conj() * sign;
        }
        out
    }

    pub fn real_part(&self) -> Form {
        self.add(&self.conj()).scale(Complex64::new(0.5, 0.0))
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// Substitutes `dz^i = sum_k q_{ik} e^k` and `dzbar^i = sum_k conj(q_{ik}) ebar^k`,
    /// returning the coefficients with respect to the new frame `e`.
    pub fn in_frame(&self, q: &CMatrix) -> Form {
        let n = self.n;
        let images: Vec<Form> = (0..2 * n)
            .map(|s| {
                let a = s / 2;
                let mut img = Form::zero(n);
                for k in 0..n {
                    if s % 2 == 0 {
                        img.coeffs[dz_bit(k)] = q[(a, k)];
                    } else {
                        img.coeffs[dzbar_bit(k)] = q[(a, k)].conj();
                    }
                }
                img
            })
            .collect();
        let mut out = Form::zero(n);
        for (mask, &c) in self.coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let mut term = Form::scalar(n, c);
            let mut rest = mask;
            while rest != 0 {
                let s = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                term = term.wedge(&images[s]);
            }
            out = out.add(&term);
        }
        out
    }
}

/// Hodge star of an `(n-1, n-1)` form with respect to the metric `alpha`,
/// returned as the components of a `(1,1)` form.
pub fn star_codim_one(theta: &Form, alpha: &CMatrix) -> Result<CMatrix> {
    let (l, _) = linalg::orthonormal_frame(alpha)?;
    // alpha = L L^dagger, so e^k = sum_i L_{ik} dz^i is orthonormal and dz = (L^T)^{-1} e.
    let q = linalg::inverse(&l.transpose())?;
    let local = theta.in_frame(&q).codim_one_components();
    let starred = local.transpose();
    Ok(&l * starred * l.adjoint())
}

/// Components of `(1/(n-1)!) * (beta ^ alpha^(n-2))` for Hermitian `beta`, `alpha`.
pub fn star_of_wedge_with_power(beta: &CMatrix, alpha: &CMatrix) -> Result<CMatrix> {
    let n = alpha.nrows();
    if beta.nrows() != n {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    let form = Form::from_hermitian(beta).wedge(&Form::from_hermitian(alpha).power(n - 2));
    let s = star_codim_one(&form, alpha)?;
    Ok(s / Complex64::new(factorial(n - 1), 0.0))
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{det, hermitian_part, identity, inverse};

    fn sample(n: usize, seed: f64) -> CMatrix {
        let b = CMatrix::from_fn(n, n, |i, j| {
            Complex64::new(((i * 7 + j * 3) as f64 * seed).sin(), ((i + 2 * j) as f64 * seed).cos() * 0.5)
        });
        &b * b.adjoint() + identity(n)
    }

    #[test]
    fn anticommuting_one_forms() {
        let n = 3;
        let mut a = Form::zero(n);
        a.set_coeff(dz_bit(1), Complex64::new(1.0, 0.0));
        let mut b = Form::zero(n);
        b.set_coeff(dzbar_bit(0), Complex64::new(1.0, 0.0));
        assert_eq!(a.wedge(&b), b.wedge(&a).scale(Complex64::new(-1.0, 0.0)));
        assert_eq!(a.wedge(&a).max_abs(), 0.0);
    }

    #[test]
    fn one_one_components_roundtrip() {
        let h = sample(3, 0.7);
        let f = Form::from_hermitian(&h);
        assert!((f.one_one_components() - &h).norm() < 1e-14);
        // a real (1,1) form is fixed by conjugation
        assert!(f.sub(&f.conj()).max_abs() < 1e-14);
    }

    #[test]
    fn codim_one_power_is_cofactor() {
        for n in 2..=4 {
            let w = sample(n, 0.3 + n as f64);
            let theta = Form::from_hermitian(&w).power(n - 1).codim_one_components();
            let cof = inverse(&w).unwrap().transpose() * det(&w);
            let want = cof * Complex64::new(factorial(n - 1), 0.0);
            assert!((theta - want).norm() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn top_power_is_determinant() {
        for n in 2..=4 {
            let w = sample(n, 1.1);
            let top = Form::from_hermitian(&w).power(n).top_coefficient();
            let want = I.powu(n as u32) * det(&w) * factorial(n);
            assert!((top - want).norm() < 1e-9);
        }
    }

    #[test]
    fn star_in_two_dimensions() {
        let alpha = identity(2);
        let beta = hermitian_part(&sample(2, 0.4));
        let s = star_codim_one(&Form::from_hermitian(&beta), &alpha).unwrap();
        let want = identity(2) * beta.trace() - &beta;
        assert!((s - want).norm() < 1e-13);
    }

    #[test]
    fn star_of_metric_power_in_general_frame() {
        for n in 2..=4 {
            let alpha = sample(n, 0.9);
            let h = sample(n, 0.2);
            let form = Form::from_hermitian(&h).power(n - 1);
            let s = star_codim_one(&form, &alpha).unwrap() / Complex64::new(factorial(n - 1), 0.0);
            // det(h)/det(alpha) * alpha h^{-1} alpha
            let want = &alpha * inverse(&h).unwrap() * &alpha * (det(&h) / det(&alpha));
            assert!((&s - &want).norm() < 1e-9 * want.norm(), "n = {n}");
        }
    }
}
