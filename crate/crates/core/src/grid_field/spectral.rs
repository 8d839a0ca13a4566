//! Fourier machinery on the periodic grid.
//!
//! Fields are expanded as `f(x) = sum_k c_k exp(2 pi i k.x)`. Complex
//! derivatives use `d/dz = (d/dx - i d/dy) / 2`, so the symbol of `d/dz_j`
//! is `pi (i k_x + k_y)` and that of `d/dzbar_j` is `pi (i k_x - k_y)`.
//!
//! First-derivative symbols vanish on the Nyquist wavenumber so that real
//! fields stay real and `d/dzbar (conj f) = conj (d/dz f)` holds exactly.
//! The diagonal Hessian entries `d^2/dz_j dzbar_j` use the full second-order
//! symbol `-pi^2 (k_x^2 + k_y^2)` instead of the composition of two truncated
//! first derivatives; otherwise every mode built from `0` and Nyquist
//! wavenumbers would be annihilated and the linearized equation would be
//! singular on those modes.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{GridSpec, ScalarField};
use crate::linalg::MAX_DIM;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(len: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(len)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(len),
                inverse: planner.plan_fft_inverse(len),
            })
        })
        .clone()
}

/// In-place multidimensional FFT over all `2n` real axes. The inverse
/// transform is normalized by the total point count.
pub(crate) fn fft_in_place(grid: GridSpec, data: &mut [Complex64], inverse: bool) {
    let len = grid.points_per_axis();
    let total = grid.len();
    assert_eq!(data.len(), total);
    let p = plans(len);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    const BATCH: usize = 512;
    let mut buffer = Vec::new();
    for axis in 0..grid.real_axes() {
        let stride = grid.stride(axis);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let block = len * stride;
        for start in (0..total).step_by(block) {
            let mut r0 = 0;
            while r0 < stride {
                let lines = BATCH.min(stride - r0);
                buffer.resize(lines * len, Complex64::new(0.0, 0.0));
                for r in 0..lines {
                    for k in 0..len {
                        buffer[r * len + k] = data[start + k * stride + r0 + r];
                    }
                }
                fft.process_with_scratch(&mut buffer[..lines * len], &mut scratch);
                for r in 0..lines {
                    for k in 0..len {
                        data[start + k * stride + r0 + r] = buffer[r * len + k];
                    }
                }
                r0 += lines;
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

/// Wavenumber of one Fourier mode, queried per axis.
pub struct Mode {
    full: [f64; 2 * MAX_DIM],
    truncated: [f64; 2 * MAX_DIM],
    axes: usize,
}

impl Mode {
    fn new(grid: GridSpec, index: usize) -> Self {
        let len = grid.points_per_axis();
        let half = len / 2;
        let mut full = [0.0; 2 * MAX_DIM];
        let mut truncated = [0.0; 2 * MAX_DIM];
        for axis in 0..grid.real_axes() {
            let i = (index / grid.stride(axis)) % len;
            let k = if i <= half { i as f64 } else { i as f64 - len as f64 };
            full[axis] = k;
            truncated[axis] = if i == half { 0.0 } else { k };
        }
        Mode {
            full,
            truncated,
            axes: grid.real_axes(),
        }
    }

    /// Symbol of `d/dz_j`.
    #[inline]
    pub fn dz(&self, j: usize) -> Complex64 {
        Complex64::new(PI * self.truncated[2 * j + 1], PI * self.truncated[2 * j])
    }

    /// Symbol of `d/dzbar_j`.
    #[inline]
    pub fn dzbar(&self, j: usize) -> Complex64 {
        Complex64::new(-PI * self.truncated[2 * j + 1], PI * self.truncated[2 * j])
    }

    /// Symbol of `d^2/dz_i dzbar_j`.
    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            let kx = self.full[2 * i];
            let ky = self.full[2 * i + 1];
            Complex64::new(-PI * PI * (kx * kx + ky * ky), 0.0)
        } else {
            self.dz(i) * self.dzbar(j)
        }
    }

    /// Symbol of the flat Laplacian `sum_j d^2/dz_j dzbar_j`.
    #[inline]
    pub fn laplacian(&self) -> f64 {
        -PI * PI * self.full[..self.axes].iter().map(|k| k * k).sum::<f64>()
    }

    /// Largest absolute wavenumber over the axes.
    pub fn max_wavenumber(&self) -> f64 {
        self.full[..self.axes].iter().fold(0.0, |m, k| m.max(k.abs()))
    }
}

/// Visits the modes in storage order, updating one `Mode` incrementally.
fn for_each_mode<V: FnMut(usize, &Mode)>(grid: GridSpec, mut visit: V) {
    let len = grid.points_per_axis();
    let half = len / 2;
    let axes = grid.real_axes();
    let mut digits = [0usize; 2 * MAX_DIM];
    let mut m = Mode::new(grid, 0);
    for k in 0..grid.len() {
        visit(k, &m);
        // last axis varies fastest
        let mut axis = axes;
        while axis > 0 {
            axis -= 1;
            digits[axis] += 1;
            if digits[axis] < len {
                let i = digits[axis];
                let w = if i <= half { i as f64 } else { i as f64 - len as f64 };
                m.full[axis] = w;
                m.truncated[axis] = if i == half { 0.0 } else { w };
                break;
            }
            digits[axis] = 0;
            m.full[axis] = 0.0;
            m.truncated[axis] = 0.0;
        }
    }
}

/// Wavenumbers of the mode stored at linear index `index` of a spectrum.
pub fn mode(grid: GridSpec, index: usize) -> Mode {
    Mode::new(grid, index)
}

/// Fourier coefficients of a field (unnormalized forward transform).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(field: &ScalarField) -> Self {
        Self::of_values(field.grid(), field.values())
    }

    pub fn of_values(grid: GridSpec, values: &[Complex64]) -> Self {
        let mut coeffs = values.to_vec();
        fft_in_place(grid, &mut coeffs, false);
        Spectrum { grid, coeffs }
    }

    pub fn of_real(grid: GridSpec, values: &[f64]) -> Self {
        let mut coeffs: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft_in_place(grid, &mut coeffs, false);
        Spectrum { grid, coeffs }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Applies a Fourier multiplier and transforms back to grid values.
    pub fn synthesize<S>(&self, symbol: S) -> ScalarField
    where
        S: Fn(&Mode) -> Complex64,
    {
        let values = self.synthesize_values(symbol);
        ScalarField::from_values_unchecked(self.grid, values)
    }

    pub fn synthesize_values<S>(&self, symbol: S) -> Vec<Complex64>
    where
        S: Fn(&Mode) -> Complex64,
    {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for_each_mode(self.grid, |k, m| out[k] = self.coeffs[k] * symbol(m));
        fft_in_place(self.grid, &mut out, true);
        out
    }

    /// Synthesizes two multipliers whose outputs are both known to be real,
    /// packing them into a single inverse transform.
    pub fn synthesize_real_pair<S1, S2>(&self, first: S1, second: S2) -> (Vec<f64>, Vec<f64>)
    where
        S1: Fn(&Mode) -> Complex64,
        S2: Fn(&Mode) -> Complex64,
    {
        let i = Complex64::new(0.0, 1.0);
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for_each_mode(self.grid, |k, m| out[k] = self.coeffs[k] * (first(m) + i * second(m)));
        fft_in_place(self.grid, &mut out, true);
        (
            out.iter().map(|z| z.re).collect(),
            out.iter().map(|z| z.im).collect(),
        )
    }

    /// Value of the multiplied field at a single grid point, by direct
    /// summation of the series.
    pub fn eval_at<S>(&self, point: usize, symbol: S) -> Complex64
    where
        S: Fn(&Mode) -> Complex64,
    {
        let mut sum = Complex64::new(0.0, 0.0);
        self.visit_at(point, |m, w| sum += w * symbol(m));
        sum
    }

    /// Calls `visit(mode, c_k exp(2 pi i k.x) / len)` for every nonzero
    /// coefficient, so that several multipliers can be evaluated at `point`
    /// in one pass.
    pub fn visit_at<V>(&self, point: usize, mut visit: V)
    where
        V: FnMut(&Mode, Complex64),
    {
        let grid = self.grid;
        let len = grid.points_per_axis();
        let axes = grid.real_axes();
        let wavenumber = |i: usize| if i <= len / 2 { i as f64 } else { i as f64 - len as f64 };
        // phase tables exp(2 pi i k x_a) per axis, indexed by the raw wavenumber slot
        let tables: Vec<Vec<Complex64>> = (0..axes)
            .map(|a| {
                let x = grid.axis_index(point, a) as f64 / len as f64;
                (0..len)
                    .map(|i| Complex64::from_polar(1.0, 2.0 * PI * wavenumber(i) * x))
                    .collect()
            })
            .collect();
        let norm = 1.0 / grid.len() as f64;
        let mut digits = [0usize; 2 * MAX_DIM];
        let mut mode = Mode {
            full: [0.0; 2 * MAX_DIM],
            truncated: [0.0; 2 * MAX_DIM],
            axes,
        };
        for &c in &self.coeffs {
            if c != Complex64::new(0.0, 0.0) {
                let mut phase = Complex64::new(norm, 0.0);
                for a in 0..axes {
                    let i = digits[a];
                    phase *= tables[a][i];
                    mode.full[a] = wavenumber(i);
                    mode.truncated[a] = if i == len / 2 { 0.0 } else { wavenumber(i) };
                }
                visit(&mode, c * phase);
            }
            // the last axis varies fastest
            for a in (0..axes).rev() {
                digits[a] += 1;
                if digits[a] < len {
                    break;
                }
                digits[a] = 0;
            }
        }
    }
}
