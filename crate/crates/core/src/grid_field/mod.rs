//! Periodic grids over the square torus `C^n / (Z^n + i Z^n)`, fields sampled
//! on them, and spectral differentiation and quadrature.
//!
//! Grid points are stored point-major. Real axes are ordered
//! `(x_1, y_1, ..., x_n, y_n)` and the linear index of the point with axis
//! indices `(i_0, ..., i_{2n-1})` is `sum_a i_a N^(2n-1-a)`, so `x_1` varies
//! slowest and `y_n` fastest. Complex axes are indexed from 0.

mod gfld;
mod scalar;
pub mod spectral;
mod tensor;

pub use gfld::{read_gfld, write_gfld, FieldDump};
pub use scalar::ScalarField;
pub use spectral::{Mode, Spectrum};
pub use tensor::{HermitianTensorField, Metric};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Small, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
    points_per_axis: usize,
}

impl GridSpec {
    /// Grid with complex dimension `n` and `points_per_axis` samples on each
    /// of the `2n` real axes.
    pub fn new(n: usize, points_per_axis: usize) -> Result<Self> {
        if n < 2 || n > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "complex dimension must lie in 2..={MAX_DIM}, got {n}"
            )));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two and at least 8, got {points_per_axis}"
            )));
        }
        let total = (points_per_axis as u128).pow(2 * n as u32);
        if total > (u32::MAX as u128) {
            return Err(Error::InvalidGrid(format!("{total} grid points is too many")));
        }
        Ok(GridSpec { n, points_per_axis })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn real_axes(&self) -> usize {
        2 * self.n
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(2 * self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance in the linear index between neighbours along a real axis.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((2 * self.n - 1 - axis) as u32)
    }

    pub fn axis_index(&self, point: usize, axis: usize) -> usize {
        (point / self.stride(axis)) % self.points_per_axis
    }

    pub fn point_index(&self, axis_indices: &[usize]) -> usize {
        debug_assert_eq!(axis_indices.len(), self.real_axes());
        axis_indices
            .iter()
            .fold(0, |acc, &i| acc * self.points_per_axis + (i % self.points_per_axis))
    }

    /// Real coordinates `(x_1, y_1, ..., x_n, y_n)` of a point, each in `[0, 1)`.
    pub fn coordinates(&self, point: usize) -> Vec<f64> {
        let h = 1.0 / self.points_per_axis as f64;
        (0..self.real_axes())
            .map(|a| self.axis_index(point, a) as f64 * h)
            .collect()
    }

    pub(crate) fn check_axis(&self, j: usize) -> Result<()> {
        if j >= self.n {
            Err(Error::AxisOutOfRange { axis: j, n: self.n })
        } else {
            Ok(())
        }
    }
}

/// Spectral `d/dz_j` (axis `j` counted from 0).
pub fn d_z(f: &ScalarField, j: usize) -> Result<ScalarField> {
    f.grid().check_axis(j)?;
    Ok(Spectrum::of(f).synthesize(|m| m.dz(j)))
}

/// Spectral `d/dzbar_j` (axis `j` counted from 0).
pub fn d_zbar(f: &ScalarField, j: usize) -> Result<ScalarField> {
    f.grid().check_axis(j)?;
    Ok(Spectrum::of(f).synthesize(|m| m.dzbar(j)))
}

/// All first derivatives `d/dz_p` of a field, sharing one forward transform.
pub fn gradient(f: &ScalarField) -> Vec<ScalarField> {
    let spec = Spectrum::of(f);
    (0..f.grid().n()).map(|p| spec.synthesize(|m| m.dz(p))).collect()
}

/// Complex Hessian `u_{i jbar}` of a real field.
pub fn hessian(u: &ScalarField) -> Result<HermitianTensorField> {
    u.ensure_real()?;
    Ok(hessian_of_spectrum(&Spectrum::of(u)))
}

pub(crate) fn hessian_of_spectrum(spec: &Spectrum) -> HermitianTensorField {
    let grid = spec.grid();
    let n = grid.n();
    let len = grid.len();
    let mut packed = vec![0.0; len * n * n];

    // Diagonal entries are real: two per inverse transform.
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let (a, b) = spec.synthesize_real_pair(|m| m.hess(i, i), |m| m.hess(i + 1, i + 1));
            for p in 0..len {
                packed[p * n * n + i * n + i] = a[p];
                packed[p * n * n + (i + 1) * n + i + 1] = b[p];
            }
            i += 2;
        } else {
            let v = spec.synthesize_values(|m| m.hess(i, i));
            for p in 0..len {
                packed[p * n * n + i * n + i] = v[p].re;
            }
            i += 1;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = spec.synthesize_values(|m| m.hess(i, j));
            for p in 0..len {
                packed[p * n * n + i * n + j] = v[p].re;
                packed[p * n * n + j * n + i] = v[p].im;
            }
        }
    }
    HermitianTensorField::from_packed_unchecked(grid, packed)
}

/// Flat Laplacian `sum_j u_{j jbar}`.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    Spectrum::of(u).synthesize(|m| Complex64::new(m.laplacian(), 0.0))
}

/// Integral of `f` against the volume form `vol^n`, normalized so that the
/// flat metric gives the torus unit volume. Returns the real part.
pub fn integrate(f: &ScalarField, vol: &Metric) -> Result<f64> {
    if f.grid() != vol.grid() {
        return Err(Error::GridMismatch);
    }
    let n = vol.grid().n();
    let mut sum = 0.0;
    for (p, z) in f.values().iter().enumerate() {
        let mut s = Small::from_packed(vol.packed_at(p), n);
        let logdet = s.cholesky_logdet().ok_or(Error::Singular)?;
        sum += z.re * logdet.exp();
    }
    Ok(sum / f.len() as f64)
}

/// Supremum norms of a real potential with respect to a metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupNorms {
    /// `sup |u|`
    pub value: f64,
    /// `sup alpha^{p qbar} u_p u_qbar`
    pub gradient_sq: f64,
    /// Largest absolute eigenvalue of `u_{i jbar}` relative to the metric.
    pub hessian: f64,
}

pub fn sup_norms(u: &ScalarField, alpha: &Metric) -> Result<SupNorms> {
    u.ensure_real()?;
    if u.grid() != alpha.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid();
    let n = grid.n();
    let spec = Spectrum::of(u);
    let grads: Vec<Vec<Complex64>> = (0..n).map(|p| spec.synthesize_values(|m| m.dz(p))).collect();
    let hess = hessian_of_spectrum(&spec);

    let mut norms = SupNorms {
        value: u.values().iter().fold(0.0_f64, |m, z| m.max(z.re.abs())),
        gradient_sq: 0.0,
        hessian: 0.0,
    };
    for p in 0..grid.len() {
        let (ainv, _) = Small::from_packed(alpha.packed_at(p), n)
            .hpd_inverse()
            .ok_or(Error::Singular)?;
        let mut g = 0.0;
        for a in 0..n {
            for b in 0..n {
                // alpha^{a bbar} = (alpha^{-1})_{b a}
                g += (ainv.a[b][a] * grads[a][p] * grads[b][p].conj()).re;
            }
        }
        norms.gradient_sq = norms.gradient_sq.max(g);
        let (eig, _) = linalg::small_generalized_eigen(&Small::from_packed(hess.packed_at(p), n), &Small::from_packed(alpha.packed_at(p), n))
            .ok_or(Error::Singular)?;
        let eig = &eig[..n];
        let top = eig.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        norms.hessian = norms.hessian.max(top);
    }
    Ok(norms)
}
