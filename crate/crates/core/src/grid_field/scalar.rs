use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::spectral::Spectrum;
use super::GridSpec;
use crate::error::{Error, Result};

/// Relative tolerance on imaginary parts for a field to count as real.
pub const REAL_TOLERANCE: f64 = 1e-12;

/// Complex-valued function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, Complex64::new(0.0, 0.0))
    }

    pub fn constant(grid: GridSpec, c: Complex64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at the real coordinates `(x_1, y_1, ..., x_n, y_n)` of each point.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let values = (0..grid.len()).map(|p| f(&grid.coordinates(p))).collect();
        ScalarField { grid, values }
    }

    pub fn from_real_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn from_values(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_real_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::from_values(grid, values.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
    }

    pub(crate) fn from_values_unchecked(grid: GridSpec, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    /// Largest imaginary part relative to the largest modulus.
    pub fn imaginary_ratio(&self) -> f64 {
        let sup = self.sup_abs();
        if sup == 0.0 {
            return 0.0;
        }
        self.values.iter().fold(0.0_f64, |m, z| m.max(z.im.abs())) / sup
    }

    pub fn is_real(&self) -> bool {
        self.imaginary_ratio() <= REAL_TOLERANCE
    }

    pub fn ensure_real(&self) -> Result<()> {
        let r = self.imaginary_ratio();
        if r <= REAL_TOLERANCE {
            Ok(())
        } else {
            Err(Error::NotReal { imag: r })
        }
    }

    /// Copy with imaginary parts dropped.
    pub fn real_part(&self) -> Self {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.len() as f64
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// `(min, max)` of the real parts.
    pub fn real_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z.re), hi.max(z.re)))
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64,
    {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map<F>(&self, other: &ScalarField, f: F) -> Result<Self>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|z| z + c)
    }

    /// Spectral interpolation onto another grid of the same dimension.
    /// Modes at or above the Nyquist wavenumber of the coarser grid are dropped.
    pub fn resample(&self, target: GridSpec) -> Result<Self> {
        if target.n() != self.grid.n() {
            return Err(Error::GridMismatch);
        }
        if target == self.grid {
            return Ok(self.clone());
        }
        let src = Spectrum::of(self);
        let limit = (self.grid.points_per_axis().min(target.points_per_axis()) / 2) as i64;
        let axes = self.grid.real_axes();
        let wavenumber = |idx: usize, len: usize| -> i64 {
            if idx <= len / 2 {
                idx as i64
            } else {
                idx as i64 - len as i64
            }
        };
        let mut coeffs = vec![Complex64::new(0.0, 0.0); target.len()];
        let ratio = target.len() as f64 / self.grid.len() as f64;
        let src_len = self.grid.points_per_axis();
        let dst_len = target.points_per_axis();
        'modes: for (k, &c) in src.coeffs().iter().enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut dst = 0usize;
            for a in 0..axes {
                let w = wavenumber(self.grid.axis_index(k, a), src_len);
                if w.abs() >= limit {
                    continue 'modes;
                }
                dst = dst * dst_len + w.rem_euclid(dst_len as i64) as usize;
            }
            coeffs[dst] = c * ratio;
        }
        super::spectral::fft_in_place(target, &mut coeffs, true);
        Ok(ScalarField {
            grid: target,
            values: coeffs,
        })
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b).expect("grid mismatch in field addition")
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b).expect("grid mismatch in field subtraction")
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b).expect("grid mismatch in field product")
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|z| -z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn realness_flag() {
        let g = GridSpec::new(2, 8).unwrap();
        let u = ScalarField::from_real_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert!(u.is_real());
        let v = u.map(|z| z + Complex64::new(0.0, 1e-6));
        assert!(v.ensure_real().is_err());
        assert!(ScalarField::zeros(g).is_real());
    }

    #[test]
    fn resample_roundtrip_on_band_limited_data() {
        let coarse = GridSpec::new(2, 8).unwrap();
        let fine = GridSpec::new(2, 16).unwrap();
        let f = |x: &[f64]| (2.0 * PI * (x[0] + 2.0 * x[3])).cos() + 0.5 * (2.0 * PI * 3.0 * x[1]).sin();
        let u = ScalarField::from_real_fn(coarse, f);
        let up = u.resample(fine).unwrap();
        let exact = ScalarField::from_real_fn(fine, f);
        assert!((&up - &exact).sup_abs() < 1e-12);
        let down = up.resample(coarse).unwrap();
        assert!((&down - &u).sup_abs() < 1e-12);
    }
}
