use std::ops::Deref;

use num_complex::Complex64;

use super::{GridSpec, ScalarField};
use crate::error::{Error, Result, WorstPoint};
use crate::linalg::{self, packed_get, CMatrix, Small};

/// Field of `n x n` Hermitian matrices `h_{i jbar}`.
///
/// Each matrix is stored packed in `n*n` reals (see [`crate::linalg`]), so
/// Hermitian symmetry holds by construction. Spatially constant fields keep a
/// single copy.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianTensorField {
    grid: GridSpec,
    storage: Storage,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Uniform(Vec<f64>),
    Varying(Vec<f64>),
}

impl HermitianTensorField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n();
        HermitianTensorField {
            grid,
            storage: Storage::Uniform(vec![0.0; n * n]),
        }
    }

    /// The same matrix at every point; only its Hermitian part is kept.
    pub fn uniform(grid: GridSpec, m: &CMatrix) -> Self {
        let n = grid.n();
        assert_eq!(m.nrows(), n, "matrix dimension must match the grid");
        let mut p = vec![0.0; n * n];
        linalg::pack_into(m, &mut p);
        HermitianTensorField {
            grid,
            storage: Storage::Uniform(p),
        }
    }

    pub fn identity(grid: GridSpec) -> Self {
        Self::uniform(grid, &linalg::identity(grid.n()))
    }

    /// Samples a matrix-valued function of the real coordinates. Only the
    /// Hermitian part of each matrix is kept.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> CMatrix,
    {
        Self::from_point_fn(grid, |p| f(&grid.coordinates(p)))
    }

    /// Like [`Self::from_fn`] but the closure receives the point index.
    pub fn from_point_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(usize) -> CMatrix,
    {
        let n = grid.n();
        let mut data = vec![0.0; grid.len() * n * n];
        for (p, chunk) in data.chunks_exact_mut(n * n).enumerate() {
            linalg::pack_into(&f(p), chunk);
        }
        HermitianTensorField {
            grid,
            storage: Storage::Varying(data),
        }
    }

    /// Builds a field from its entry fields. `entry(i, j)` is consulted for
    /// `i <= j` only; diagonal entries must be real.
    pub fn from_entries<F>(grid: GridSpec, entry: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> ScalarField,
    {
        let n = grid.n();
        let mut data = vec![0.0; grid.len() * n * n];
        for i in 0..n {
            for j in i..n {
                let f = entry(i, j);
                if f.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                if i == j {
                    f.ensure_real()?;
                }
                for (p, z) in f.values().iter().enumerate() {
                    let base = p * n * n;
                    if i == j {
                        data[base + i * n + i] = z.re;
                    } else {
                        data[base + i * n + j] = z.re;
                        data[base + j * n + i] = z.im;
                    }
                }
            }
        }
        Ok(HermitianTensorField {
            grid,
            storage: Storage::Varying(data),
        })
    }

    /// Raw packed data, one block of `n*n` reals per point.
    pub(crate) fn from_packed_unchecked(grid: GridSpec, data: Vec<f64>) -> Self {
        let n = grid.n();
        let storage = if data.len() == n * n {
            Storage::Uniform(data)
        } else {
            debug_assert_eq!(data.len(), grid.len() * n * n);
            Storage::Varying(data)
        };
        HermitianTensorField { grid, storage }
    }

    /// Packed data expanded to one block per point.
    pub(crate) fn into_packed_varying(self) -> Vec<f64> {
        match self.storage {
            Storage::Varying(d) => d,
            Storage::Uniform(d) => d.repeat(self.grid.len()),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.storage, Storage::Uniform(_))
    }

    /// Packed matrix at a point.
    #[inline]
    pub fn packed_at(&self, p: usize) -> &[f64] {
        let nn = self.grid.n() * self.grid.n();
        match &self.storage {
            Storage::Uniform(d) => d,
            Storage::Varying(d) => &d[p * nn..(p + 1) * nn],
        }
    }

    pub fn get(&self, p: usize) -> CMatrix {
        linalg::unpack(self.packed_at(p), self.grid.n())
    }

    pub fn small_at(&self, p: usize) -> Small {
        Small::from_packed(self.packed_at(p), self.grid.n())
    }

    #[inline]
    pub fn entry(&self, p: usize, i: usize, j: usize) -> Complex64 {
        packed_get(self.packed_at(p), self.grid.n(), i, j)
    }

    pub fn entry_field(&self, i: usize, j: usize) -> ScalarField {
        let values = (0..self.grid.len()).map(|p| self.entry(p, i, j)).collect();
        ScalarField::from_values_unchecked(self.grid, values)
    }

    /// Pointwise map; uniform fields stay uniform.
    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&CMatrix) -> CMatrix,
    {
        match &self.storage {
            Storage::Uniform(d) => Self::uniform(self.grid, &f(&linalg::unpack(d, self.n()))),
            Storage::Varying(_) => Self::from_point_fn(self.grid, |p| f(&self.get(p))),
        }
    }

    pub fn zip_map<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(&CMatrix, &CMatrix) -> CMatrix,
    {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.is_uniform() && other.is_uniform() {
            return Ok(Self::uniform(self.grid, &f(&self.get(0), &other.get(0))));
        }
        Ok(Self::from_point_fn(self.grid, |p| f(&self.get(p), &other.get(p))))
    }

    /// Entrywise linear combination `a * self + b * other` on the packed data.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let nn = self.n() * self.n();
        if self.is_uniform() && other.is_uniform() {
            let d: Vec<f64> = self
                .packed_at(0)
                .iter()
                .zip(other.packed_at(0))
                .map(|(x, y)| a * x + b * y)
                .collect();
            return Ok(Self::from_packed_unchecked(self.grid, d));
        }
        let mut data = vec![0.0; self.grid.len() * nn];
        for (p, chunk) in data.chunks_exact_mut(nn).enumerate() {
            let (x, y) = (self.packed_at(p), other.packed_at(p));
            for k in 0..nn {
                chunk[k] = a * x[k] + b * y[k];
            }
        }
        Ok(HermitianTensorField {
            grid: self.grid,
            storage: Storage::Varying(data),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let data: Vec<f64> = match &self.storage {
            Storage::Uniform(d) | Storage::Varying(d) => d.iter().map(|x| s * x).collect(),
        };
        Self::from_packed_unchecked(self.grid, data)
    }

    /// Multiplies each matrix by the real part of a scalar field.
    pub fn scale_by(&self, f: &ScalarField) -> Result<Self> {
        if self.grid != f.grid() {
            return Err(Error::GridMismatch);
        }
        let nn = self.n() * self.n();
        let mut data = vec![0.0; self.grid.len() * nn];
        for (p, chunk) in data.chunks_exact_mut(nn).enumerate() {
            let s = f.values()[p].re;
            for (c, x) in chunk.iter_mut().zip(self.packed_at(p)) {
                *c = s * x;
            }
        }
        Ok(HermitianTensorField {
            grid: self.grid,
            storage: Storage::Varying(data),
        })
    }

    /// Largest entry modulus over the grid.
    pub fn sup_abs(&self) -> f64 {
        match &self.storage {
            Storage::Uniform(d) | Storage::Varying(d) => {
                let n = self.n();
                d.chunks_exact(n * n)
                    .map(|c| {
                        let mut m: f64 = 0.0;
                        for i in 0..n {
                            m = m.max(c[i * n + i].abs());
                            for j in (i + 1)..n {
                                m = m.max(c[i * n + j].hypot(c[j * n + i]));
                            }
                        }
                        m
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Smallest eigenvalue over the grid, with its location.
    pub fn min_eigenvalue(&self) -> WorstPoint {
        let points = if self.is_uniform() { 1 } else { self.grid.len() };
        let mut worst = WorstPoint {
            index: 0,
            value: f64::INFINITY,
        };
        for p in 0..points {
            let m = self.get(p);
            let v = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            if v < worst.value {
                worst = WorstPoint { index: p, value: v };
            }
        }
        worst
    }

    /// Expands to full row-major complex matrices, point-major.
    pub fn to_full(&self) -> Vec<Complex64> {
        let n = self.n();
        let mut out = Vec::with_capacity(self.grid.len() * n * n);
        for p in 0..self.grid.len() {
            for i in 0..n {
                for j in 0..n {
                    out.push(self.entry(p, i, j));
                }
            }
        }
        out
    }
}

/// A positive definite tensor field.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    field: HermitianTensorField,
}

impl Metric {
    /// Validates positive definiteness at every point. On failure the error
    /// reports the point with the most negative smallest eigenvalue.
    pub fn new(field: HermitianTensorField) -> Result<Self> {
        let n = field.n();
        let points = if field.is_uniform() { 1 } else { field.grid().len() };
        let mut worst: Option<WorstPoint> = None;
        for p in 0..points {
            let mut s = Small::from_packed(field.packed_at(p), n);
            if s.cholesky_logdet().is_none() {
                let v = field
                    .get(p)
                    .symmetric_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                if worst.is_none_or(|w| v < w.value) {
                    worst = Some(WorstPoint { index: p, value: v });
                }
            }
        }
        match worst {
            Some(w) => Err(Error::NotPositive(w)),
            None => Ok(Metric { field }),
        }
    }

    pub fn flat(grid: GridSpec) -> Self {
        Metric {
            field: HermitianTensorField::identity(grid),
        }
    }

    pub fn field(&self) -> &HermitianTensorField {
        &self.field
    }

    pub fn into_field(self) -> HermitianTensorField {
        self.field
    }

    /// `log det` at each point.
    pub fn log_det(&self) -> Vec<f64> {
        let n = self.n();
        (0..self.grid().len())
            .map(|p| {
                Small::from_packed(self.packed_at(p), n)
                    .cholesky_logdet()
                    .expect("metric is positive definite")
            })
            .collect()
    }

    /// Inverse matrix and `log det` at a point.
    pub fn inverse_at(&self, p: usize) -> (Small, f64) {
        self.small_at(p)
            .hpd_inverse()
            .expect("metric is positive definite")
    }
}

impl Deref for Metric {
    type Target = HermitianTensorField;
    fn deref(&self) -> &HermitianTensorField {
        &self.field
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_varying_agree() {
        let g = GridSpec::new(2, 8).unwrap();
        let m = CMatrix::from_fn(2, 2, |i, j| Complex64::new((i + j) as f64 + 1.0, i as f64 - j as f64));
        let u = HermitianTensorField::uniform(g, &m);
        let v = HermitianTensorField::from_point_fn(g, |_| m.clone());
        for p in [0, 17, 4095] {
            assert_eq!(u.get(p), v.get(p));
            assert!(linalg::hermitian_defect(&u.get(p)) == 0.0);
        }
        let s = u.combine(2.0, &v, -1.0).unwrap();
        assert!((s.get(5) - linalg::hermitian_part(&m)).norm() < 1e-15);
    }

    #[test]
    fn metric_rejects_indefinite_and_locates_worst() {
        let g = GridSpec::new(2, 8).unwrap();
        let f = HermitianTensorField::from_point_fn(g, |p| {
            let d = if p == 100 { -3.0 } else if p == 7 { -1.0 } else { 1.0 };
            linalg::diag(&[1.0, d])
        });
        match Metric::new(f) {
            Err(Error::NotPositive(w)) => {
                assert_eq!(w.index, 100);
                assert!((w.value + 3.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Metric::new(HermitianTensorField::identity(g)).is_ok());
    }
}
