//! Chern connection and torsion, the operators `P_alpha` and `*(h^(n-1))`,
//! Chern-Ricci forms, and the Gauduchon condition `ddbar(omega^(n-1)) = 0`.
//!
//! Index conventions: a Hermitian field `h` stores `h_{i jbar}` as matrix
//! entry `(i, j)`. Raised indices use `alpha^{k lbar} = (alpha^{-1})_{l k}`.

use num_complex::Complex64;

use crate::error::{Error, Result, WorstPoint};
use crate::grid_field::{
    hessian_of_spectrum, spectral::fft_in_place, GridSpec, HermitianTensorField, Metric, ScalarField, Spectrum,
};
use crate::krylov::{gmres, GmresOptions};
use crate::linalg::{self, CMatrix, Small};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// First derivatives `d_a h_{j lbar}` of a tensor field, point-major.
#[derive(Debug, Clone)]
pub struct TensorDerivatives {
    n: usize,
    data: Option<Vec<Complex64>>,
}

impl TensorDerivatives {
    pub fn of(field: &HermitianTensorField) -> Self {
        let n = field.n();
        if field.is_uniform() {
            return TensorDerivatives { n, data: None };
        }
        let grid = field.grid();
        let n3 = n * n * n;
        let mut data = vec![ZERO; grid.len() * n3];
        for j in 0..n {
            for l in j..n {
                let spec = Spectrum::of(&field.entry_field(j, l));
                for a in 0..n {
                    let d = spec.synthesize_values(|m| m.dz(a));
                    for (p, z) in d.iter().enumerate() {
                        data[p * n3 + (a * n + j) * n + l] = *z;
                    }
                    if j != l {
                        // d_a h_{l jbar} = conj(d_abar h_{j lbar})
                        let d = spec.synthesize_values(|m| m.dzbar(a));
                        for (p, z) in d.iter().enumerate() {
                            data[p * n3 + (a * n + l) * n + j] = z.conj();
                        }
                    }
                }
            }
        }
        TensorDerivatives { n, data: Some(data) }
    }

    pub fn is_zero(&self) -> bool {
        self.data.is_none()
    }

    /// `d_a h_{j lbar}` at point `p`.
    #[inline]
    pub fn at(&self, p: usize, a: usize, j: usize, l: usize) -> Complex64 {
        match &self.data {
            None => ZERO,
            Some(d) => {
                let n = self.n;
                d[p * n * n * n + (a * n + j) * n + l]
            }
        }
    }
}

/// Christoffel symbols `Gamma^k_{ij} = alpha^{k lbar} d_i alpha_{j lbar}` of the
/// Chern connection.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    grid: GridSpec,
    data: Option<Vec<Complex64>>,
}

impl ChristoffelField {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `Gamma^k_{ij}` at point `p`.
    #[inline]
    pub fn at(&self, p: usize, k: usize, i: usize, j: usize) -> Complex64 {
        match &self.data {
            None => ZERO,
            Some(d) => {
                let n = self.grid.n();
                d[p * n * n * n + (k * n + i) * n + j]
            }
        }
    }

    /// Largest `|d_i alpha_{j lbar} - Gamma^m_{ij} alpha_{m lbar}|` over the grid.
    pub fn parallel_defect(&self, alpha: &Metric) -> f64 {
        let n = self.grid.n();
        let d = TensorDerivatives::of(alpha);
        let mut worst: f64 = 0.0;
        for p in 0..self.grid.len() {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let mut s = d.at(p, i, j, l);
                        for m in 0..n {
                            s -= self.at(p, m, i, j) * alpha.entry(p, m, l);
                        }
                        worst = worst.max(s.norm());
                    }
                }
            }
        }
        worst
    }
}

pub fn chern_connection(alpha: &Metric) -> ChristoffelField {
    let grid = alpha.grid();
    let n = grid.n();
    let d = TensorDerivatives::of(alpha);
    if d.is_zero() {
        return ChristoffelField { grid, data: None };
    }
    let n3 = n * n * n;
    let mut data = vec![ZERO; grid.len() * n3];
    for p in 0..grid.len() {
        let (ainv, _) = alpha.inverse_at(p);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = ZERO;
                    for l in 0..n {
                        s += ainv.a[l][k] * d.at(p, i, j, l);
                    }
                    data[p * n3 + (k * n + i) * n + j] = s;
                }
            }
        }
    }
    ChristoffelField { grid, data: Some(data) }
}

#[inline]
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Torsion of the Chern connection. Only components with `i < j` are stored,
/// so antisymmetry in the lower pair holds exactly.
#[derive(Debug, Clone)]
pub struct TorsionField {
    grid: GridSpec,
    /// `[p][pair][k]` for `T^k_{ij}` and `T_{ij kbar}`.
    upper: Option<Vec<Complex64>>,
    lowered: Option<Vec<Complex64>>,
}

impl TorsionField {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn lookup(data: &Option<Vec<Complex64>>, n: usize, p: usize, i: usize, j: usize, k: usize) -> Complex64 {
        let Some(d) = data else { return ZERO };
        if i == j {
            return ZERO;
        }
        let pairs = n * (n - 1) / 2;
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        d[(p * pairs + pair_index(n, a, b)) * n + k] * sign
    }

    /// `T^k_{ij}`.
    #[inline]
    pub fn upper(&self, p: usize, k: usize, i: usize, j: usize) -> Complex64 {
        Self::lookup(&self.upper, self.grid.n(), p, i, j, k)
    }

    /// `T_{ij lbar}`.
    #[inline]
    pub fn lowered(&self, p: usize, i: usize, j: usize, l: usize) -> Complex64 {
        Self::lookup(&self.lowered, self.grid.n(), p, i, j, l)
    }

    pub fn sup_abs(&self) -> f64 {
        self.lowered
            .as_ref()
            .map_or(0.0, |d| d.iter().fold(0.0_f64, |m, z| m.max(z.norm())))
    }

    /// Largest `|T_{ij lbar} - T^k_{ij} alpha_{k lbar}|`.
    pub fn consistency_defect(&self, alpha: &Metric) -> f64 {
        let n = self.grid.n();
        let mut worst: f64 = 0.0;
        if self.upper.is_none() {
            return 0.0;
        }
        for p in 0..self.grid.len() {
            for i in 0..n {
                for j in (i + 1)..n {
                    for l in 0..n {
                        let mut s = self.lowered(p, i, j, l);
                        for k in 0..n {
                            s -= self.upper(p, k, i, j) * alpha.entry(p, k, l);
                        }
                        worst = worst.max(s.norm());
                    }
                }
            }
        }
        worst
    }
}

pub fn torsion(alpha: &Metric) -> TorsionField {
    let grid = alpha.grid();
    let n = grid.n();
    let d = TensorDerivatives::of(alpha);
    if d.is_zero() {
        return TorsionField {
            grid,
            upper: None,
            lowered: None,
        };
    }
    let pairs = n * (n - 1) / 2;
    let mut upper = vec![ZERO; grid.len() * pairs * n];
    let mut lowered = vec![ZERO; grid.len() * pairs * n];
    for p in 0..grid.len() {
        let (ainv, _) = alpha.inverse_at(p);
        for i in 0..n {
            for j in (i + 1)..n {
                let base = (p * pairs + pair_index(n, i, j)) * n;
                for l in 0..n {
                    lowered[base + l] = d.at(p, i, j, l) - d.at(p, j, i, l);
                }
                for k in 0..n {
                    let mut s = ZERO;
                    for l in 0..n {
                        s += ainv.a[l][k] * lowered[base + l];
                    }
                    upper[base + k] = s;
                }
            }
        }
    }
    TorsionField {
        grid,
        upper: Some(upper),
        lowered: Some(lowered),
    }
}

fn check_grids(a: &HermitianTensorField, b: &HermitianTensorField) -> Result<()> {
    if a.grid() != b.grid() {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Pointwise kernel over two tensor fields using stack matrices. The result
/// is uniform when both inputs are.
fn pointwise<F>(a: &HermitianTensorField, b: &HermitianTensorField, f: F) -> Result<HermitianTensorField>
where
    F: Fn(&Small, &Small) -> Result<Small>,
{
    check_grids(a, b)?;
    let grid = a.grid();
    let n = grid.n();
    let nn = n * n;
    let points = if a.is_uniform() && b.is_uniform() { 1 } else { grid.len() };
    let mut data = vec![0.0; points * nn];
    for p in 0..points {
        let r = f(&a.small_at(p), &b.small_at(p)).map_err(|e| relocate(e, p))?;
        r.write_packed(&mut data[p * nn..(p + 1) * nn]);
    }
    Ok(HermitianTensorField::from_packed_unchecked(grid, data))
}

fn relocate(e: Error, p: usize) -> Error {
    match e {
        Error::NotPositive(w) => Error::NotPositive(WorstPoint { index: p, value: w.value }),
        Error::ConeViolation(w) => Error::ConeViolation(WorstPoint { index: p, value: w.value }),
        other => other,
    }
}

fn trace_rel(ainv: &Small, b: &Small) -> f64 {
    let n = ainv.n;
    let mut t = 0.0;
    for i in 0..n {
        for k in 0..n {
            t += (ainv.a[i][k] * b.a[k][i]).re;
        }
    }
    t
}

fn alpha_inverse(alpha: &Small) -> Result<(Small, f64)> {
    alpha.hpd_inverse().ok_or(Error::Singular)
}

/// `P_alpha(beta) = ((tr_alpha beta) alpha - beta) / (n - 1)`.
pub fn p_alpha(beta: &HermitianTensorField, alpha: &Metric) -> Result<HermitianTensorField> {
    pointwise(beta, alpha, |b, a| {
        let n = a.n;
        let (ainv, _) = alpha_inverse(a)?;
        let tr = trace_rel(&ainv, b);
        let mut r = Small::zeros(n);
        for i in 0..n {
            for j in 0..n {
                r.a[i][j] = (a.a[i][j] * tr - b.a[i][j]) / (n - 1) as f64;
            }
        }
        Ok(r)
    })
}

/// Inverse of [`p_alpha`]: `(tr_alpha B) alpha - (n - 1) B`.
pub fn p_alpha_inverse(b: &HermitianTensorField, alpha: &Metric) -> Result<HermitianTensorField> {
    pointwise(b, alpha, |b, a| {
        let n = a.n;
        let (ainv, _) = alpha_inverse(a)?;
        let tr = trace_rel(&ainv, b);
        let mut r = Small::zeros(n);
        for i in 0..n {
            for j in 0..n {
                r.a[i][j] = a.a[i][j] * tr - b.a[i][j] * (n - 1) as f64;
            }
        }
        Ok(r)
    })
}

fn sandwich(a: &Small, m: &Small, scale: f64) -> Small {
    let n = a.n;
    let mut t = Small::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for k in 0..n {
                s += a.a[i][k] * m.a[k][j];
            }
            t.a[i][j] = s;
        }
    }
    let mut r = Small::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for k in 0..n {
                s += t.a[i][k] * a.a[k][j];
            }
            r.a[i][j] = s * scale;
        }
    }
    r
}

fn min_relative_eigenvalue(g: &Small, alpha: &Small) -> f64 {
    linalg::generalized_eigenvalues(&g.to_matrix(), &alpha.to_matrix())
        .map(|v| v.last().copied().unwrap_or(f64::NAN))
        .unwrap_or(f64::NAN)
}

/// `(1/(n-1)!) * (h^(n-1))` as a `(1,1)` tensor, which equals
/// `(det h / det alpha) alpha h^{-1} alpha`.
pub fn star_power(h: &HermitianTensorField, alpha: &Metric) -> Result<HermitianTensorField> {
    pointwise(h, alpha, |h, a| {
        let (hinv, logdet_h) = h.hpd_inverse().ok_or_else(|| {
            let v = h.to_matrix().symmetric_eigenvalues().min();
            Error::NotPositive(WorstPoint { index: 0, value: v })
        })?;
        let (_, logdet_a) = alpha_inverse(a)?;
        Ok(sandwich(a, &hinv, (logdet_h - logdet_a).exp()))
    })
}

/// Inverse of [`star_power`]: returns `omega` with `star_power(omega) = g`,
/// namely `(det g / det alpha)^(1/(n-1)) alpha g^{-1} alpha`.
pub fn star_power_inverse(g: &HermitianTensorField, alpha: &Metric) -> Result<HermitianTensorField> {
    let worst = std::cell::Cell::new(None::<WorstPoint>);
    let result = pointwise(g, alpha, |g, a| {
        let n = a.n;
        let Some((ginv, logdet_g)) = g.hpd_inverse() else {
            return Err(Error::ConeViolation(WorstPoint {
                index: 0,
                value: min_relative_eigenvalue(g, a),
            }));
        };
        let (_, logdet_a) = alpha_inverse(a)?;
        Ok(sandwich(a, &ginv, ((logdet_g - logdet_a) / (n - 1) as f64).exp()))
    });
    if let Err(Error::ConeViolation(_)) = &result {
        // report the worst point of the whole field, not the first one found
        let n = g.n();
        for p in 0..g.grid().len() {
            let v = min_relative_eigenvalue(&Small::from_packed(g.packed_at(p), n), &alpha.small_at(p));
            if worst.get().is_none_or(|w: WorstPoint| v < w.value) {
                worst.set(Some(WorstPoint { index: p, value: v }));
            }
        }
        return Err(Error::ConeViolation(worst.get().unwrap()));
    }
    result
}

/// `Ric(omega) = -i ddbar log det omega`, as the Hermitian field of its components.
pub fn chern_ricci(omega: &Metric) -> HermitianTensorField {
    let log_det = omega.log_det();
    let spec = Spectrum::of_real(omega.grid(), &log_det);
    hessian_of_spectrum(&spec).scale(-1.0)
}

/// Cofactor field `det(h) (h^{-1})_{ji}`, i.e. the components of
/// `h^(n-1) / (n-1)!`.
pub fn cofactor(h: &Metric) -> HermitianTensorField {
    let grid = h.grid();
    let n = grid.n();
    let nn = n * n;
    let points = if h.is_uniform() { 1 } else { grid.len() };
    let mut data = vec![0.0; points * nn];
    for p in 0..points {
        let (inv, logdet) = h.inverse_at(p);
        let det = logdet.exp();
        let mut c = Small::zeros(n);
        for i in 0..n {
            for j in 0..n {
                c.a[i][j] = inv.a[j][i] * det;
            }
        }
        c.write_packed(&mut data[p * nn..(p + 1) * nn]);
    }
    HermitianTensorField::from_packed_unchecked(grid, data)
}

/// Index of the mode `-k`.
fn negated_mode(grid: GridSpec, k: usize) -> usize {
    let len = grid.points_per_axis();
    let mut out = 0;
    for a in 0..grid.real_axes() {
        let i = grid.axis_index(k, a);
        out = out * len + (len - i) % len;
    }
    out
}

/// `sum_{i,j} d_i d_jbar T_{i jbar}` for a Hermitian field `T`; real valued.
pub fn ddbar_contraction(t: &HermitianTensorField) -> Vec<f64> {
    let grid = t.grid();
    let n = grid.n();
    if t.is_uniform() {
        return vec![0.0; grid.len()];
    }
    let mut acc = vec![ZERO; grid.len()];
    for i in 0..n {
        for j in i..n {
            let spec = Spectrum::of(&t.entry_field(i, j));
            let c = spec.coeffs();
            for (k, slot) in acc.iter_mut().enumerate() {
                let m = crate::grid_field::spectral::mode(grid, k);
                if i == j {
                    *slot += m.hess(i, i) * c[k];
                } else {
                    let neg = negated_mode(grid, k);
                    *slot += m.hess(i, j) * c[k] + m.hess(j, i) * c[neg].conj();
                }
            }
        }
    }
    fft_in_place(grid, &mut acc, true);
    acc.iter().map(|z| z.re).collect()
}

/// Pointwise `d` with `i ddbar(omega^(n-1)) = d alpha^n`.
pub fn gauduchon_defect_field(omega: &Metric, alpha: &Metric) -> Result<ScalarField> {
    check_grids(omega, alpha)?;
    let n = omega.n() as f64;
    let contraction = ddbar_contraction(&cofactor(omega));
    let log_det = alpha.log_det();
    let values = contraction
        .iter()
        .zip(&log_det)
        .map(|(c, l)| c / (n * l.exp()))
        .collect();
    ScalarField::from_real_values(omega.grid(), values)
}

/// `sup |d|` with `i ddbar(omega^(n-1)) = d alpha^n`.
pub fn gauduchon_defect(omega: &Metric, alpha: &Metric) -> Result<f64> {
    Ok(gauduchon_defect_field(omega, alpha)?
        .values()
        .iter()
        .fold(0.0_f64, |m, z| m.max(z.re.abs())))
}

/// Parameters for [`gauduchon_conformal_factor_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalFactorOptions {
    /// Number of correction passes, each solving the bordered system once.
    pub max_passes: usize,
    /// Stop once `sup |L v|` falls below this.
    pub tol: f64,
    pub krylov: GmresOptions,
}

impl Default for ConformalFactorOptions {
    fn default() -> Self {
        ConformalFactorOptions {
            max_passes: 4,
            tol: 1e-12,
            krylov: GmresOptions {
                tol: 1e-12,
                max_iters: 300,
                restart: 40,
            },
        }
    }
}

/// Positive `v` with mean 1 and `ddbar(v alpha^(n-1)) = 0`; the Gauduchon
/// metric in the conformal class of `alpha` is `v^(1/(n-1)) alpha`.
pub fn gauduchon_conformal_factor(alpha: &Metric) -> Result<ScalarField> {
    let ones = ScalarField::constant(alpha.grid(), Complex64::new(1.0, 0.0));
    gauduchon_conformal_factor_with(alpha, &ones, ConformalFactorOptions::default())
}

/// Kernel of `L v = sum d_i d_jbar (v cof(alpha)_{ij})`, normalized to mean 1.
///
/// `L` annihilates constants from the left (its range is the mean-zero
/// fields), so the bordered system `L v + mu = 0, mean(v) = 1` is
/// nonsingular and its solution has `mu = 0`. It is solved by GMRES with the
/// flat Laplacian, scaled by the average of `tr cof(alpha) / n`, as the
/// preconditioner. `init` only seeds the iteration.
pub fn gauduchon_conformal_factor_with(
    alpha: &Metric,
    init: &ScalarField,
    opts: ConformalFactorOptions,
) -> Result<ScalarField> {
    let grid = alpha.grid();
    if init.grid() != grid {
        return Err(Error::GridMismatch);
    }
    init.ensure_real()?;
    let cof = cofactor(alpha);
    if cof.is_uniform() {
        return Ok(ScalarField::constant(grid, Complex64::new(1.0, 0.0)));
    }
    let n = grid.n();
    let points = grid.len();
    let scale = (0..points)
        .map(|p| (0..n).map(|i| cof.entry(p, i, i).re).sum::<f64>() / n as f64)
        .sum::<f64>()
        / points as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let operator = |v: &[f64]| -> Vec<f64> {
        let vf = ScalarField::from_real_values(grid, v.to_vec()).expect("length matches grid");
        ddbar_contraction(&cof.scale_by(&vf).expect("same grid"))
    };
    // unknowns (v, mu); equations (L v + mu, mean v)
    let apply = |x: &[f64]| -> Vec<f64> {
        let (v, mu) = x.split_at(points);
        let mut out = operator(v);
        out.iter_mut().for_each(|o| *o += mu[0]);
        out.push(mean(v));
        out
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        let (r, s) = r.split_at(points);
        let mr = mean(r);
        let spec = Spectrum::of_real(grid, r);
        let mut out: Vec<f64> = spec
            .synthesize_values(|m| {
                let l = m.laplacian();
                Complex64::new(if l == 0.0 { 0.0 } else { 1.0 / (scale * l) }, 0.0)
            })
            .iter()
            .map(|z| z.re + s[0])
            .collect();
        out.push(mr);
        out
    };

    let m0 = mean(&init.real_parts());
    if m0 == 0.0 {
        return Err(Error::InvalidArgument("initial guess has zero mean".into()));
    }
    let mut x: Vec<f64> = init.real_parts().iter().map(|v| v / m0).collect();
    x.push(0.0);
    for _ in 0..opts.max_passes {
        let ax = apply(&x);
        let mut rhs: Vec<f64> = ax[..points].iter().map(|v| -v).collect();
        rhs.push(1.0 - ax[points]);
        let defect = rhs[..points].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if defect <= opts.tol {
            break;
        }
        let mut dx = vec![0.0; points + 1];
        gmres(apply, precond, &rhs, &mut dx, opts.krylov);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
    }
    x.truncate(points);
    let (index, value) = x
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    if !(value > 0.0) {
        return Err(Error::NonPositiveFactor(WorstPoint { index, value }));
    }
    ScalarField::from_real_values(grid, x)
}

/// `v^(1/(n-1)) alpha` for a positive conformal factor `v`.
pub fn conformal_rescale(alpha: &Metric, v: &ScalarField) -> Result<Metric> {
    let n = alpha.n();
    let factor = v.map(|z| Complex64::new(z.re.powf(1.0 / (n - 1) as f64), 0.0));
    Metric::new(alpha.scale_by(&factor)?)
}

/// Values, first and second derivatives of a metric at single points,
/// evaluated from its Fourier series.
pub struct MetricSpectra {
    n: usize,
    entries: Vec<Spectrum>,
}

/// Local expansion of a metric at a point.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub alpha: CMatrix,
    /// `d[a][(j, l)] = d_a alpha_{j lbar}`
    pub d: Vec<CMatrix>,
    /// `dbar[a][(j, l)] = d_abar alpha_{j lbar}`
    pub dbar: Vec<CMatrix>,
    /// `dd[a * n + b][(j, l)] = d_a d_b alpha_{j lbar}`
    pub dd: Vec<CMatrix>,
    /// `ddbar[a * n + b][(j, l)] = d_a d_bbar alpha_{j lbar}`
    pub ddbar: Vec<CMatrix>,
    /// `dbardbar[a * n + b][(j, l)] = d_abar d_bbar alpha_{j lbar}`
    pub dbardbar: Vec<CMatrix>,
}

impl MetricSpectra {
    pub fn of(alpha: &HermitianTensorField) -> Self {
        let n = alpha.n();
        let mut entries = Vec::new();
        for j in 0..n {
            for l in j..n {
                entries.push(Spectrum::of(&alpha.entry_field(j, l)));
            }
        }
        MetricSpectra { n, entries }
    }

    fn entry(&self, j: usize, l: usize) -> &Spectrum {
        let n = self.n;
        &self.entries[j * n - j * (j + 1) / 2 + l]
    }

    pub fn jet_at(&self, p: usize) -> MetricJet {
        let n = self.n;
        let zero = || CMatrix::zeros(n, n);
        let mut jet = MetricJet {
            alpha: zero(),
            d: vec![zero(); n],
            dbar: vec![zero(); n],
            dd: vec![zero(); n * n],
            ddbar: vec![zero(); n * n],
            dbardbar: vec![zero(); n * n],
        };
        for j in 0..n {
            for l in j..n {
                let s = self.entry(j, l);
                let put = |m: &mut CMatrix, z: Complex64, zc: Complex64| {
                    m[(j, l)] = z;
                    if j != l {
                        m[(l, j)] = zc.conj();
                    }
                };
                let mut v = ZERO;
                let mut da = vec![ZERO; n];
                let mut dab = vec![ZERO; n];
                let mut dd = vec![ZERO; n * n];
                let mut bb = vec![ZERO; n * n];
                let mut db = vec![ZERO; n * n];
                s.visit_at(p, |m, w| {
                    v += w;
                    for a in 0..n {
                        let (za, zab) = (m.dz(a), m.dzbar(a));
                        da[a] += w * za;
                        dab[a] += w * zab;
                        for b in 0..n {
                            dd[a * n + b] += w * za * m.dz(b);
                            bb[a * n + b] += w * zab * m.dzbar(b);
                            db[a * n + b] += w * za * m.dzbar(b);
                        }
                    }
                });
                put(&mut jet.alpha, v, v);
                for a in 0..n {
                    // d_a alpha_{l jbar} = conj(d_abar alpha_{j lbar})
                    put(&mut jet.d[a], da[a], dab[a]);
                    put(&mut jet.dbar[a], dab[a], da[a]);
                    for b in 0..n {
                        let ab = a * n + b;
                        // d_abar d_b = d_b d_abar
                        let bd = db[b * n + a];
                        put(&mut jet.dd[ab], dd[ab], bb[ab]);
                        put(&mut jet.dbardbar[ab], bb[ab], dd[ab]);
                        put(&mut jet.ddbar[ab], db[ab], bd);
                    }
                }
            }
        }
        for i in 0..n {
            jet.alpha[(i, i)].im = 0.0;
        }
        jet
    }
}
