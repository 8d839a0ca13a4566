//! The Gauduchon Monge-Ampere operator.
//!
//! For a real potential `u` the unknown form is
//!
//! ```text
//! omega^(n-1) = alpha_0^(n-1) + i ddbar u ^ alpha^(n-2) + c Re(i du ^ dbar(alpha^(n-2)))
//! ```
//!
//! and everything is expressed through `gtilde = (1/(n-1)!) * omega^(n-1)`,
//! whose components are
//!
//! ```text
//! gtilde = chi_tilde + P_alpha(u_{i jbar}) + c Z(du),   chi_tilde = (1/(n-1)!) * alpha_0^(n-1).
//! ```
//!
//! The equation `omega^n = e^(F+b) alpha^n` becomes
//! `log(det gtilde / det alpha) = (n-1)(F+b)`.
//!
//! `Z` is linear in the gradient: `Z_{i jbar} = Z^p_{i jbar} u_p + conj(Z^p_{j ibar} u_p)`
//! with coefficients built from the torsion of `alpha`. With
//! `S_{q l k} = conj(T_{q l kbar}) = d_qbar alpha_{k lbar} - d_lbar alpha_{k qbar}` and
//! `tau_q = alpha^{k lbar} S_{q l k}`,
//!
//! ```text
//! 2(n-1) Z^p_{i jbar} = alpha^{p qbar} tau_q alpha_{i jbar} - delta_{pi} tau_j - alpha^{p lbar} S_{l j i}.
//! ```

use num_complex::Complex64;

use crate::error::{Error, Result, WorstPoint};
use crate::exterior::{self, Form};
use crate::grid_field::{
    hessian_of_spectrum, GridSpec, HermitianTensorField, Metric, ScalarField, Spectrum,
};
use crate::hermitian_geometry::{
    cofactor, gauduchon_defect, star_power, star_power_inverse, torsion, MetricSpectra, TorsionField,
};
use crate::linalg::{self, CMatrix, Small};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Fixed data of one equation.
#[derive(Debug, Clone)]
pub struct EquationData {
    alpha: Metric,
    alpha0: Metric,
    f: ScalarField,
    coupling: f64,
    chi_tilde: HermitianTensorField,
    torsion: TorsionField,
    /// `Z^p_{i jbar}` at `[point][(p * n + i) * n + j]`; `None` when `Z` vanishes.
    z_coeffs: Option<Vec<Complex64>>,
    alpha_defect: f64,
    /// packed `alpha^{-1}` and `log det alpha`, one entry when `alpha` is uniform
    alpha_inv: HermitianTensorField,
    alpha_log_det: Vec<f64>,
}

impl EquationData {
    /// `coupling` is 1 for the Gauduchon equation and 2 for the
    /// astheno-Kahler variant.
    pub fn new(alpha: Metric, alpha0: Metric, f: ScalarField, coupling: f64) -> Result<Self> {
        let grid = alpha.grid();
        if alpha0.grid() != grid || f.grid() != grid {
            return Err(Error::GridMismatch);
        }
        f.ensure_real()?;
        if coupling != 1.0 && coupling != 2.0 {
            return Err(Error::InvalidArgument(format!("coupling must be 1 or 2, got {coupling}")));
        }
        let f = f.real_part();
        let chi_tilde = star_power(&alpha0, &alpha)?;
        let torsion = torsion(&alpha);
        let z_coeffs = z_coefficient_field(&alpha, &torsion);
        let alpha_defect = gauduchon_defect(&alpha, &alpha)?;
        let nn = grid.n() * grid.n();
        let points = if alpha.is_uniform() { 1 } else { grid.len() };
        let mut inv = vec![0.0; points * nn];
        let mut alpha_log_det = Vec::with_capacity(points);
        for (p, out) in inv.chunks_exact_mut(nn).enumerate() {
            let (ainv, logdet) = alpha.inverse_at(p);
            ainv.write_packed(out);
            alpha_log_det.push(logdet);
        }
        let alpha_inv = HermitianTensorField::from_packed_unchecked(grid, inv);
        Ok(EquationData {
            alpha,
            alpha0,
            f,
            coupling,
            chi_tilde,
            torsion,
            z_coeffs,
            alpha_defect,
            alpha_inv,
            alpha_log_det,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.alpha.grid()
    }

    pub fn n(&self) -> usize {
        self.alpha.n()
    }

    pub fn alpha(&self) -> &Metric {
        &self.alpha
    }

    pub fn alpha0(&self) -> &Metric {
        &self.alpha0
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn chi_tilde(&self) -> &HermitianTensorField {
        &self.chi_tilde
    }

    pub fn torsion(&self) -> &TorsionField {
        &self.torsion
    }

    /// Whether the gradient term `Z` is identically zero.
    pub fn z_vanishes(&self) -> bool {
        self.z_coeffs.is_none()
    }

    /// `sup |d|` with `i ddbar(alpha^(n-1)) = d alpha^n`.
    pub fn alpha_gauduchon_defect(&self) -> f64 {
        self.alpha_defect
    }

    pub fn alpha_is_gauduchon(&self, tol: f64) -> bool {
        self.alpha_defect <= tol
    }

    /// Same data with a different right-hand side `F`.
    pub fn with_f(&self, f: ScalarField) -> Result<Self> {
        if f.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        f.ensure_real()?;
        Ok(EquationData {
            f: f.real_part(),
            ..self.clone()
        })
    }

    fn alpha_log_det_at(&self, point: usize) -> f64 {
        if self.alpha_log_det.len() == 1 {
            self.alpha_log_det[0]
        } else {
            self.alpha_log_det[point]
        }
    }

    fn z_coeff(&self, point: usize) -> Option<&[Complex64]> {
        let n3 = self.n().pow(3);
        self.z_coeffs.as_ref().map(|z| &z[point * n3..(point + 1) * n3])
    }
}

/// `Z^p_{i jbar}` at one point from `alpha`, its inverse and `S`, written to
/// `out[(p * n + i) * n + j]`.
fn z_coefficients_at<S>(alpha: &Small, ainv: &Small, s: S, out: &mut [Complex64])
where
    S: Fn(usize, usize, usize) -> Complex64,
{
    let n = alpha.n;
    let scale = 1.0 / (2.0 * (n - 1) as f64);
    let mut tau = [ZERO; linalg::MAX_DIM];
    for (q, t) in tau.iter_mut().enumerate().take(n) {
        for k in 0..n {
            for l in 0..n {
                *t += ainv.a[l][k] * s(q, l, k);
            }
        }
    }
    for p in 0..n {
        let mut raised = ZERO;
        for q in 0..n {
            raised += ainv.a[q][p] * tau[q];
        }
        for i in 0..n {
            for j in 0..n {
                let mut z = raised * alpha.a[i][j];
                if p == i {
                    z -= tau[j];
                }
                for l in 0..n {
                    z -= ainv.a[l][p] * s(l, j, i);
                }
                out[(p * n + i) * n + j] = z * scale;
            }
        }
    }
}

/// Derivative of [`z_coefficients_at`] along a direction in which `alpha`,
/// its inverse and `S` change by `dalpha`, `dainv` and `ds`.
fn z_coefficients_derivative<S, D>(
    alpha: &Small,
    ainv: &Small,
    s: S,
    dalpha: &Small,
    dainv: &Small,
    ds: D,
    out: &mut [Complex64],
) where
    S: Fn(usize, usize, usize) -> Complex64,
    D: Fn(usize, usize, usize) -> Complex64,
{
    let n = alpha.n;
    let scale = 1.0 / (2.0 * (n - 1) as f64);
    let mut tau = [ZERO; linalg::MAX_DIM];
    let mut dtau = [ZERO; linalg::MAX_DIM];
    for q in 0..n {
        for k in 0..n {
            for l in 0..n {
                tau[q] += ainv.a[l][k] * s(q, l, k);
                dtau[q] += dainv.a[l][k] * s(q, l, k) + ainv.a[l][k] * ds(q, l, k);
            }
        }
    }
    for p in 0..n {
        let (mut raised, mut draised) = (ZERO, ZERO);
        for q in 0..n {
            raised += ainv.a[q][p] * tau[q];
            draised += dainv.a[q][p] * tau[q] + ainv.a[q][p] * dtau[q];
        }
        for i in 0..n {
            for j in 0..n {
                let mut z = draised * alpha.a[i][j] + raised * dalpha.a[i][j];
                if p == i {
                    z -= dtau[j];
                }
                for l in 0..n {
                    z -= dainv.a[l][p] * s(l, j, i) + ainv.a[l][p] * ds(l, j, i);
                }
                out[(p * n + i) * n + j] = z * scale;
            }
        }
    }
}

/// The coefficient field, or `None` when `Z` vanishes identically: for
/// `n = 2` (`alpha^0` is constant) and for torsion-free `alpha`.
fn z_coefficient_field(alpha: &Metric, torsion: &TorsionField) -> Option<Vec<Complex64>> {
    let grid = alpha.grid();
    let n = grid.n();
    if n < 3 || torsion.sup_abs() == 0.0 {
        return None;
    }
    let n3 = n * n * n;
    let mut data = vec![ZERO; grid.len() * n3];
    for (p, out) in data.chunks_exact_mut(n3).enumerate() {
        let (ainv, _) = alpha.inverse_at(p);
        let s = |q: usize, l: usize, k: usize| torsion.lowered(p, q, l, k).conj();
        z_coefficients_at(&alpha.small_at(p), &ainv, s, out);
    }
    Some(data)
}

/// Adds `scale * Z` to packed Hermitian data, from gradient values
/// `grads[p][point] = u_p`.
fn add_z_from_gradient(data: &EquationData, grads: &[Vec<Complex64>], scale: f64, packed: &mut [f64]) {
    let n = data.n();
    let nn = n * n;
    let mut buf = [0.0; linalg::MAX_DIM * linalg::MAX_DIM];
    for (point, out) in packed.chunks_exact_mut(nn).enumerate() {
        let zc = data.z_coeff(point).expect("coefficients present");
        let mut m = Small::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = ZERO;
                for (p, g) in grads.iter().enumerate() {
                    s += zc[(p * n + i) * n + j] * g[point];
                }
                m.a[i][j] = s;
            }
        }
        let mut z = Small::zeros(n);
        for i in 0..n {
            for j in 0..n {
                z.a[i][j] = (m.a[i][j] + m.a[j][i].conj()) * scale;
            }
        }
        z.write_packed(&mut buf[..nn]);
        for (o, v) in out.iter_mut().zip(&buf[..nn]) {
            *o += v;
        }
    }
}

fn gradient_values(spec: &Spectrum) -> Vec<Vec<Complex64>> {
    (0..spec.grid().n()).map(|p| spec.synthesize_values(|m| m.dz(p))).collect()
}

fn check_potential(u: &ScalarField, data: &EquationData) -> Result<()> {
    if u.grid() != data.grid() {
        return Err(Error::GridMismatch);
    }
    u.ensure_real()
}

/// The gradient tensor `Z(du)` from the torsion formula.
pub fn z_tensor(u: &ScalarField, data: &EquationData) -> Result<HermitianTensorField> {
    check_potential(u, data)?;
    if data.z_vanishes() {
        return Ok(HermitianTensorField::zeros(data.grid()));
    }
    let spec = Spectrum::of(&u.real_part());
    let grid = data.grid();
    let mut packed = vec![0.0; grid.len() * data.n() * data.n()];
    add_z_from_gradient(data, &gradient_values(&spec), 1.0, &mut packed);
    Ok(HermitianTensorField::from_packed_unchecked(grid, packed))
}

/// Brute-force evaluation of `(1/(n-1)!) * Re(i du ^ dbar(alpha^(n-2)))` by
/// exterior algebra, with the components of `alpha^(n-2)` differentiated
/// spectrally.
pub struct ZOracle {
    n: usize,
    /// Monomials of bidegree `(n-2, n-2)` and the spectra of their coefficients.
    terms: Vec<(usize, Spectrum)>,
}

impl ZOracle {
    pub fn new(alpha: &Metric) -> Self {
        let grid = alpha.grid();
        let n = grid.n();
        if n < 3 || alpha.is_uniform() {
            return ZOracle { n, terms: Vec::new() };
        }
        let masks: Vec<usize> = (0..1usize << (2 * n))
            .filter(|&m| {
                let holo = (0..n).filter(|a| m & (1 << (2 * a)) != 0).count();
                let anti = (0..n).filter(|a| m & (1 << (2 * a + 1)) != 0).count();
                holo == n - 2 && anti == n - 2
            })
            .collect();
        let mut values = vec![vec![ZERO; grid.len()]; masks.len()];
        for p in 0..grid.len() {
            let power = Form::from_hermitian(&alpha.get(p)).power(n - 2);
            for (v, &m) in values.iter_mut().zip(&masks) {
                v[p] = power.coeff(m);
            }
        }
        let terms = masks
            .into_iter()
            .zip(values)
            .map(|(m, v)| (m, Spectrum::of_values(grid, &v)))
            .collect();
        ZOracle { n, terms }
    }

    /// Oracle value at `point`, given the spectrum of `u` and `alpha` there.
    pub fn at(&self, u: &Spectrum, alpha: &CMatrix, point: usize) -> Result<CMatrix> {
        let n = self.n;
        if self.terms.is_empty() {
            return Ok(CMatrix::zeros(n, n));
        }
        let zeros = vec![ZERO; n];
        let du: Vec<Complex64> = (0..n).map(|p| u.eval_at(point, |m| m.dz(p))).collect();
        let du = Form::one_form(&du, &zeros);
        // d_abar of every coefficient of alpha^(n-2), one pass per spectrum
        let mut derivs = vec![vec![ZERO; n]; self.terms.len()];
        for ((_, spec), d) in self.terms.iter().zip(derivs.iter_mut()) {
            spec.visit_at(point, |m, w| {
                for (a, da) in d.iter_mut().enumerate() {
                    *da += w * m.dzbar(a);
                }
            });
        }
        let mut dbar_power = Form::zero(n);
        for a in 0..n {
            let mut unit = zeros.clone();
            unit[a] = Complex64::new(1.0, 0.0);
            let mut coeffs = Form::zero(n);
            for ((mask, _), d) in self.terms.iter().zip(&derivs) {
                coeffs.set_coeff(*mask, d[a]);
            }
            dbar_power = dbar_power.add(&Form::one_form(&zeros, &unit).wedge(&coeffs));
        }
        let form = du.wedge(&dbar_power).scale(Complex64::new(0.0, 1.0)).real_part();
        let star = exterior::star_codim_one(&form, alpha)?;
        Ok(star / Complex64::new(exterior::factorial(n - 1), 0.0))
    }
}

/// One-off oracle evaluation; build a [`ZOracle`] to evaluate many points.
pub fn z_tensor_oracle(u: &ScalarField, data: &EquationData, point: usize) -> Result<CMatrix> {
    check_potential(u, data)?;
    let oracle = ZOracle::new(&data.alpha);
    oracle.at(&Spectrum::of(&u.real_part()), &data.alpha.get(point), point)
}

/// Which torsion enters the coefficient tensor in [`WAssumptionChecker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TorsionInput {
    Chern,
    /// `d_qbar alpha_{k lbar} + d_lbar alpha_{k qbar}` in place of the
    /// antisymmetric combination; a negative control.
    Symmetrized,
}

/// Outcome of the two structural identities at one point, in an
/// `alpha`-orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WCheckReport {
    pub point: usize,
    /// `max_{i,j} |Z^j_{i jbar}|`
    pub coefficient_defect: f64,
    /// `max_i |nabla_ibar Z^i_{i ibar}|`
    pub covariant_defect: f64,
    /// `max |Z^p_{i jbar}|`, for scale.
    pub coefficient_scale: f64,
}

impl WCheckReport {
    /// Names and magnitudes of the identities exceeding `tol`.
    pub fn violations(&self, tol: f64) -> Vec<(&'static str, f64)> {
        let mut v = Vec::new();
        if !(self.coefficient_defect <= tol) {
            v.push(("Z^j_{i jbar} = 0", self.coefficient_defect));
        }
        if !(self.covariant_defect <= tol) {
            v.push(("nabla_ibar Z^i_{i ibar} = 0", self.covariant_defect));
        }
        v
    }
}

/// Evaluates the coefficient tensor and its Chern covariant derivative at
/// single points from the Fourier series of `alpha`.
pub struct WAssumptionChecker {
    n: usize,
    spectra: MetricSpectra,
}

impl WAssumptionChecker {
    pub fn new(data: &EquationData) -> Self {
        WAssumptionChecker {
            n: data.n(),
            spectra: MetricSpectra::of(&data.alpha),
        }
    }

    pub fn check(&self, point: usize, input: TorsionInput) -> Result<WCheckReport> {
        let n = self.n;
        let jet = self.spectra.jet_at(point);
        let alpha = Small::from_matrix(&jet.alpha);
        let ainv_m = linalg::inverse(&jet.alpha)?;
        let ainv = Small::from_matrix(&ainv_m);
        let sign = match input {
            TorsionInput::Chern => -1.0,
            TorsionInput::Symmetrized => 1.0,
        };
        let s = |q: usize, l: usize, k: usize| jet.dbar[q][(k, l)] + jet.dbar[l][(k, q)] * sign;

        let n3 = n * n * n;
        let mut z = vec![ZERO; n3];
        z_coefficients_at(&alpha, &ainv, &s, &mut z);

        // nabla_bbar Z^p_{i jbar} = d_bbar Z^p_{i jbar} - conj(Gamma^k_{b j}) Z^p_{i kbar}
        let mut nabla = vec![ZERO; n3 * n];
        let mut dz = vec![ZERO; n3];
        for b in 0..n {
            let dalpha = Small::from_matrix(&jet.dbar[b]);
            let dainv = Small::from_matrix(&(-&ainv_m * &jet.dbar[b] * &ainv_m));
            let ds = |q: usize, l: usize, k: usize| {
                jet.dbardbar[b * n + q][(k, l)] + jet.dbardbar[b * n + l][(k, q)] * sign
            };
            z_coefficients_derivative(&alpha, &ainv, &s, &dalpha, &dainv, ds, &mut dz);
            let gamma = |k: usize, j: usize| -> Complex64 {
                (0..n).map(|l| ainv.a[l][k] * jet.d[b][(j, l)]).sum()
            };
            for p in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = dz[(p * n + i) * n + j];
                        for k in 0..n {
                            v -= gamma(k, j).conj() * z[(p * n + i) * n + k];
                        }
                        nabla[((p * n + i) * n + j) * n + b] = v;
                    }
                }
            }
        }

        // frame e^k = sum_i L_{ik} dz^i; dz = Q e with Q = (L^T)^{-1}
        let (l, _) = linalg::orthonormal_frame(&jet.alpha)?;
        let q = linalg::inverse(&l.transpose())?;
        let upper = |r: usize, p: usize| l[(r, p)];
        let lower = |i: usize, k: usize| q[(i, k)];
        let anti = |j: usize, m: usize| q[(j, m)].conj();

        let mut coefficient_defect: f64 = 0.0;
        let mut coefficient_scale: f64 = 0.0;
        let mut covariant_defect: f64 = 0.0;
        for pp in 0..n {
            for kk in 0..n {
                for ll in 0..n {
                    let mut v = ZERO;
                    for r in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                v += upper(r, pp) * lower(i, kk) * anti(j, ll) * z[(r * n + i) * n + j];
                            }
                        }
                    }
                    coefficient_scale = coefficient_scale.max(v.norm());
                    if pp == ll {
                        coefficient_defect = coefficient_defect.max(v.norm());
                    }
                }
            }
        }
        for ii in 0..n {
            let mut v = ZERO;
            for r in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        for b in 0..n {
                            v += upper(r, ii)
                                * lower(i, ii)
                                * anti(j, ii)
                                * anti(b, ii)
                                * nabla[((r * n + i) * n + j) * n + b];
                        }
                    }
                }
            }
            covariant_defect = covariant_defect.max(v.norm());
        }
        Ok(WCheckReport {
            point,
            coefficient_defect,
            covariant_defect,
            coefficient_scale,
        })
    }
}

/// Both structural identities at one point with the Chern torsion.
pub fn w_assumption_check(data: &EquationData, point: usize) -> Result<WCheckReport> {
    WAssumptionChecker::new(data).check(point, TorsionInput::Chern)
}

/// `gtilde = chi_tilde + P_alpha(u_{i jbar}) + c Z`.
pub fn assemble_gtilde(u: &ScalarField, data: &EquationData) -> Result<HermitianTensorField> {
    check_potential(u, data)?;
    let spec = Spectrum::of(&u.real_part());
    let hess = hessian_of_spectrum(&spec);
    let n = data.n();
    let nn = n * n;
    let m = (n - 1) as f64;
    // P_alpha is real-linear on the packed representation
    let mut packed = hess.into_packed_varying();
    for (p, h) in packed.chunks_exact_mut(nn).enumerate() {
        let tr = linalg::packed_trace_product(data.alpha_inv.packed_at(p), h, n);
        let a = data.alpha.packed_at(p);
        let chi = data.chi_tilde.packed_at(p);
        for k in 0..nn {
            h[k] = chi[k] + (tr * a[k] - h[k]) / m;
        }
    }
    if !data.z_vanishes() {
        add_z_from_gradient(data, &gradient_values(&spec), data.coupling, &mut packed);
    }
    Ok(HermitianTensorField::from_packed_unchecked(data.grid(), packed))
}

/// Pointwise defect of the equation together with the constant `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub value: ScalarField,
    pub b: f64,
}

impl Residual {
    pub fn sup(&self) -> f64 {
        self.value.sup_abs()
    }
}

/// Smallest eigenvalue of `g` relative to `alpha` over the grid.
fn worst_point(g: &HermitianTensorField, alpha: &Metric) -> WorstPoint {
    let n = g.n();
    let mut worst = WorstPoint {
        index: 0,
        value: f64::INFINITY,
    };
    for p in 0..g.grid().len() {
        let v = linalg::generalized_eigenvalues(&linalg::unpack(g.packed_at(p), n), &alpha.get(p))
            .map(|e| e.last().copied().unwrap_or(f64::NAN))
            .unwrap_or(f64::NAN);
        if !(v >= worst.value) {
            worst = WorstPoint { index: p, value: v };
            if v.is_nan() {
                break;
            }
        }
    }
    worst
}

/// `log det gtilde` per point, or a cone violation at the worst point.
pub(crate) fn log_det_in_cone(g: &HermitianTensorField, alpha: &Metric) -> Result<Vec<f64>> {
    let n = g.n();
    let points = g.grid().len();
    let mut out = Vec::with_capacity(points);
    for p in 0..points {
        let mut s = Small::from_packed(g.packed_at(p), n);
        match s.cholesky_logdet() {
            Some(l) => out.push(l),
            None => return Err(Error::ConeViolation(worst_point(g, alpha))),
        }
    }
    Ok(out)
}

/// Residual for an explicit right-hand side `f`, also returning `gtilde`.
pub(crate) fn residual_with(
    u: &ScalarField,
    b: f64,
    f: &ScalarField,
    data: &EquationData,
) -> Result<(Residual, HermitianTensorField)> {
    let g = assemble_gtilde(u, data)?;
    let log_g = log_det_in_cone(&g, &data.alpha)?;
    let m = (data.n() - 1) as f64;
    let values = log_g
        .iter()
        .zip(f.values())
        .enumerate()
        .map(|(p, (lg, fv))| lg - data.alpha_log_det_at(p) - m * (fv.re + b))
        .collect();
    let value = ScalarField::from_real_values(data.grid(), values)?;
    Ok((Residual { value, b }, g))
}

/// `log(det gtilde / det alpha) - (n-1)(F + b)` at every point.
pub fn residual(u: &ScalarField, b: f64, data: &EquationData) -> Result<Residual> {
    residual_with(u, b, &data.f, data).map(|(r, _)| r)
}

/// Derivative of the residual at a fixed `u`, as a reusable operator.
///
/// `d/dt log det gtilde = tr(gtilde^{-1} dgtilde)` with
/// `dgtilde = P_alpha(w_{i jbar}) + c Z(dw)`; the Hessian part is folded into
/// `K = (tr(G^{-1} alpha) alpha^{-1} - G^{-1}) / (n-1)` and the gradient part
/// into `a^p = sum_{ij} (G^{-1})_{ji} Z^p_{i jbar}`, giving
/// `sum K_{ji} w_{i jbar} + 2 c Re(a^p w_p) - (n-1) db`.
pub struct Linearization {
    grid: GridSpec,
    /// packed Hermitian `K` per point
    k: Vec<f64>,
    /// `c a^p` per point
    a: Option<Vec<Complex64>>,
}

impl Linearization {
    pub fn at(u: &ScalarField, data: &EquationData) -> Result<Self> {
        let g = assemble_gtilde(u, data)?;
        Self::from_gtilde(&g, data)
    }

    pub(crate) fn from_gtilde(g: &HermitianTensorField, data: &EquationData) -> Result<Self> {
        let grid = data.grid();
        let n = grid.n();
        let nn = n * n;
        let mut k = vec![0.0; grid.len() * nn];
        let mut a = (!data.z_vanishes()).then(|| vec![ZERO; grid.len() * n]);
        let mut gbuf = [0.0; linalg::MAX_DIM * linalg::MAX_DIM];
        for p in 0..grid.len() {
            let Some((ginv, _)) = g.small_at(p).hpd_inverse() else {
                return Err(Error::ConeViolation(worst_point(g, &data.alpha)));
            };
            let gi = &mut gbuf[..nn];
            ginv.write_packed(gi);
            let tr = linalg::packed_trace_product(gi, data.alpha.packed_at(p), n);
            let ainv = data.alpha_inv.packed_at(p);
            for (slot, kv) in k[p * nn..(p + 1) * nn].iter_mut().enumerate() {
                *kv = (tr * ainv[slot] - gi[slot]) / (n - 1) as f64;
            }
            if let Some(a) = a.as_mut() {
                let zc = data.z_coeff(p).expect("coefficients present");
                for q in 0..n {
                    let mut s = ZERO;
                    for i in 0..n {
                        for j in 0..n {
                            s += ginv.a[j][i] * zc[(q * n + i) * n + j];
                        }
                    }
                    a[p * n + q] = s * data.coupling;
                }
            }
        }
        Ok(Linearization { grid, k, a })
    }

    /// Average over the grid of `tr K`, the scale of the principal part.
    pub fn mean_trace(&self) -> f64 {
        let n = self.grid.n();
        let nn = n * n;
        let total: f64 = self
            .k
            .chunks_exact(nn)
            .map(|k| (0..n).map(|i| k[i * n + i]).sum::<f64>())
            .sum();
        total / (self.k.len() / nn) as f64
    }

    /// Applies the derivative to a real direction `(du, db)`.
    pub fn apply(&self, du: &[f64], db: f64) -> Vec<f64> {
        let grid = self.grid;
        let n = grid.n();
        let nn = n * n;
        let spec = Spectrum::of_real(grid, du);
        let m = (n - 1) as f64;
        let mut out = vec![-m * db; grid.len()];
        let mut i = 0;
        while i < n {
            if i + 1 < n {
                let (h0, h1) = spec.synthesize_real_pair(|md| md.hess(i, i), |md| md.hess(i + 1, i + 1));
                for (p, o) in out.iter_mut().enumerate() {
                    let kp = &self.k[p * nn..];
                    *o += kp[i * n + i] * h0[p] + kp[(i + 1) * n + i + 1] * h1[p];
                }
                i += 2;
            } else {
                let h = spec.synthesize_values(|md| md.hess(i, i));
                for (p, o) in out.iter_mut().enumerate() {
                    *o += self.k[p * nn + i * n + i] * h[p].re;
                }
                i += 1;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let h = spec.synthesize_values(|md| md.hess(i, j));
                for (p, o) in out.iter_mut().enumerate() {
                    // K_{ji} H_{ij} + K_{ij} H_{ji} = 2 Re(conj(K_{ij}) H_{ij})
                    let kij = linalg::packed_get(&self.k[p * nn..(p + 1) * nn], n, i, j);
                    *o += 2.0 * (kij.conj() * h[p]).re;
                }
            }
        }
        if let Some(a) = &self.a {
            for q in 0..n {
                let w = spec.synthesize_values(|md| md.dz(q));
                for (p, o) in out.iter_mut().enumerate() {
                    *o += 2.0 * (a[p * n + q] * w[p]).re;
                }
            }
        }
        out
    }
}

/// Directional derivative of [`residual`] at `u` along `(du, db)`.
pub fn linearized_residual(u: &ScalarField, data: &EquationData, du: &ScalarField, db: f64) -> Result<ScalarField> {
    check_potential(u, data)?;
    check_potential(du, data)?;
    let lin = Linearization::at(u, data)?;
    ScalarField::from_real_values(data.grid(), lin.apply(&du.real_parts(), db))
}

/// The metric `omega` whose `(n-1)`-th power is given by the ansatz.
pub fn omega_from_u(u: &ScalarField, data: &EquationData) -> Result<Metric> {
    let g = assemble_gtilde(u, data)?;
    Metric::new(star_power_inverse(&g, &data.alpha)?)
}

/// `integral (omega^(n-1) - alpha_0^(n-1)) ^ psi` for a constant `(1,1)` form
/// `psi = i psi_{i jbar} dz^i ^ dzbar^j`, on the torus of unit coordinate volume.
pub fn aeppli_pairing_check(u: &ScalarField, data: &EquationData, psi: &CMatrix) -> Result<f64> {
    Ok(aeppli_pairings(u, data, std::slice::from_ref(psi))?[0])
}

/// [`aeppli_pairing_check`] for several forms, recovering `omega` once.
pub fn aeppli_pairings(u: &ScalarField, data: &EquationData, psis: &[CMatrix]) -> Result<Vec<f64>> {
    let n = data.n();
    if psis.iter().any(|psi| psi.nrows() != n || psi.ncols() != n) {
        return Err(Error::InvalidArgument("psi has the wrong dimension".into()));
    }
    let omega = omega_from_u(u, data)?;
    let co = cofactor(&omega);
    let ca = cofactor(&data.alpha0);
    let points = data.grid().len() as f64;
    Ok(psis
        .iter()
        .map(|psi| pairing_density(&co, &ca, psi).iter().sum::<f64>() / points)
        .collect())
}

/// Pointwise density of the pairing. The components of `omega^(n-1)` are
/// `(n-1)!` times the cofactor matrix, and `Theta ^ psi` has top coefficient
/// `i^n sum Theta_{i jbar} psi_{i jbar}`; with `dz ^ dzbar = -2i dx ^ dy` the
/// density is `2^n (n-1)! sum_{ij} (cof omega - cof alpha_0)_{ij} psi_{ij}`.
fn pairing_density(co: &HermitianTensorField, ca: &HermitianTensorField, psi: &CMatrix) -> Vec<f64> {
    let n = co.n();
    let scale = 2f64.powi(n as i32) * exterior::factorial(n - 1);
    (0..co.grid().len())
        .map(|p| {
            let mut s = ZERO;
            for i in 0..n {
                for j in 0..n {
                    s += (co.entry(p, i, j) - ca.entry(p, i, j)) * psi[(i, j)];
                }
            }
            s.re * scale
        })
        .collect()
}

/// Basis of the real constant `(1,1)` forms: `E_ii`, `E_ij + E_ji`, `i(E_ij - E_ji)`.
pub fn constant_form_basis(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut m = CMatrix::zeros(n, n);
            if i == j {
                m[(i, i)] = Complex64::new(1.0, 0.0);
                out.push(m);
            } else {
                m[(i, j)] = Complex64::new(1.0, 0.0);
                m[(j, i)] = Complex64::new(1.0, 0.0);
                out.push(m.clone());
                m[(i, j)] = Complex64::new(0.0, 1.0);
                m[(j, i)] = Complex64::new(0.0, -1.0);
                out.push(m);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_field::hessian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize, len: usize) -> GridSpec {
        GridSpec::new(n, len).unwrap()
    }

    /// `alpha = e^phi (I + eps H(x))` with a low-mode Hermitian `H`.
    fn random_metric(g: GridSpec, rng: &mut ChaCha8Rng) -> Metric {
        let n = g.n();
        let phase: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let amp: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-0.2..0.2)).collect();
        let offd: Vec<Complex64> = (0..n * n)
            .map(|_| Complex64::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)))
            .collect();
        Metric::new(HermitianTensorField::from_fn(g, move |x| {
            let phi: f64 = (0..2 * n).map(|a| amp[a] * (2.0 * PI * x[a] + phase[a]).sin()).sum();
            let mut m = linalg::identity(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = offd[i * n + j] * (2.0 * PI * (x[2 * i] + x[2 * j + 1]) + phase[0]).cos();
                    m[(i, j)] = w;
                    m[(j, i)] = w.conj();
                }
            }
            m * Complex64::new(phi.exp(), 0.0)
        }))
        .unwrap()
    }

    fn random_potential(g: GridSpec, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
        let n = g.n();
        let c: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-amp..amp)).collect();
        let ph: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        ScalarField::from_real_fn(g, move |x| {
            (0..2 * n)
                .map(|a| c[a] * (2.0 * PI * (x[a] + x[(a + 1) % (2 * n)]) + ph[a]).cos())
                .sum()
        })
    }

    fn data(alpha: Metric) -> EquationData {
        let g = alpha.grid();
        EquationData::new(alpha.clone(), alpha, ScalarField::zeros(g), 1.0).unwrap()
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        linalg::max_abs(&(a - b))
    }

    #[test]
    fn z_matches_exterior_oracle() {
        let g = grid(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = data(random_metric(g, &mut rng));
        assert!(!d.z_vanishes());
        let u = random_potential(g, &mut rng, 0.3);
        let z = z_tensor(&u, &d).unwrap();
        let oracle = ZOracle::new(d.alpha());
        let spec = Spectrum::of(&u);
        for _ in 0..10 {
            let p = rng.random_range(0..g.len());
            let want = oracle.at(&spec, &d.alpha().get(p), p).unwrap();
            let got = z.get(p);
            let scale = linalg::max_abs(&want).max(1e-300);
            assert!(max_diff(&got, &want) <= 1e-10 * scale, "{got} vs {want}");
        }
    }

    #[test]
    fn z_vanishes_for_flat_and_constant() {
        let g = grid(3, 8);
        let flat = data(Metric::flat(g));
        assert!(flat.z_vanishes());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = data(random_metric(g, &mut rng));
        let c = ScalarField::constant(g, Complex64::new(2.5, 0.0));
        assert!(z_tensor(&c, &d).unwrap().sup_abs() < 1e-13);
    }

    #[test]
    fn n2_coefficients_vanish_pointwise() {
        // the torsion formula itself degenerates for n = 2
        let g = grid(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alpha = random_metric(g, &mut rng);
        let t = torsion(&alpha);
        assert!(t.sup_abs() > 1e-3);
        let mut out = vec![ZERO; 8];
        let mut worst: f64 = 0.0;
        for p in (0..g.len()).step_by(97) {
            let (ainv, _) = alpha.inverse_at(p);
            z_coefficients_at(&alpha.small_at(p), &ainv, |q, l, k| t.lowered(p, q, l, k).conj(), &mut out);
            // only the Hermitian combination must vanish; check it on a random gradient
            let du = [Complex64::new(0.3, -0.2), Complex64::new(-0.7, 0.4)];
            for i in 0..2 {
                for j in 0..2 {
                    let m = |i: usize, j: usize| -> Complex64 { (0..2).map(|q| out[(q * 2 + i) * 2 + j] * du[q]).sum() };
                    worst = worst.max((m(i, j) + m(j, i).conj()).norm());
                }
            }
        }
        assert!(worst < 1e-13, "{worst}");
    }

    #[test]
    fn w_identities_hold_and_negative_control_fails() {
        let g = grid(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = data(random_metric(g, &mut rng));
        let checker = WAssumptionChecker::new(&d);
        for _ in 0..3 {
            let p = rng.random_range(0..g.len());
            let r = checker.check(p, TorsionInput::Chern).unwrap();
            assert!(r.coefficient_scale > 1e-3);
            assert!(r.violations(1e-9).is_empty(), "{r:?}");
            let bad = checker.check(p, TorsionInput::Symmetrized).unwrap();
            assert!(bad.coefficient_defect > 1e-3, "{bad:?}");
        }
    }

    #[test]
    fn gtilde_single_mode_flat() {
        let n = 3;
        let g = grid(n, 8);
        let eps = 0.05;
        let u = ScalarField::from_real_fn(g, |x| eps * (2.0 * PI * x[0]).cos());
        let d = data(Metric::flat(g));
        let gt = assemble_gtilde(&u, &d).unwrap();
        for p in (0..g.len()).step_by(331) {
            let x = g.coordinates(p);
            // u_{1 1bar} = (1/4) u_xx = -pi^2 eps cos
            let h = -PI * PI * eps * (2.0 * PI * x[0]).cos();
            for i in 0..n {
                let want = 1.0 + if i == 0 { 0.0 } else { h / (n - 1) as f64 };
                assert!((gt.entry(p, i, i).re - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gtilde_is_star_of_omega() {
        let g = grid(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = data(random_metric(g, &mut rng));
        let u = random_potential(g, &mut rng, 0.02);
        let gt = assemble_gtilde(&u, &d).unwrap();
        let omega = omega_from_u(&u, &d).unwrap();
        let back = star_power(&omega, d.alpha()).unwrap();
        assert!(back.sub(&gt).unwrap().sup_abs() < 1e-9);
        let u0 = ScalarField::zeros(g);
        assert!(assemble_gtilde(&u0, &d).unwrap().sub(d.chi_tilde()).unwrap().sup_abs() < 1e-14);
    }

    #[test]
    fn residual_examples() {
        let g = grid(2, 8);
        let f = ScalarField::from_real_fn(g, |x| 0.3 * (2.0 * PI * x[1]).sin());
        let flat = Metric::flat(g);
        let d = EquationData::new(flat.clone(), flat, f.clone(), 1.0).unwrap();
        let r = residual(&ScalarField::zeros(g), 0.0, &d).unwrap();
        assert!((&r.value + &f).sup_abs() < 1e-14);

        // manufactured right-hand side
        let u = ScalarField::from_real_fn(g, |x| 0.02 * (2.0 * PI * (x[0] + x[3])).cos());
        let gt = assemble_gtilde(&u, &d).unwrap();
        let fstar = ScalarField::from_real_values(g, log_det_in_cone(&gt, d.alpha()).unwrap()).unwrap();
        let d2 = d.with_f(fstar).unwrap();
        assert!(residual(&u, 0.0, &d2).unwrap().sup() < 1e-13);
    }

    #[test]
    fn residual_reports_cone_violation() {
        let g = grid(2, 8);
        let d = data(Metric::flat(g));
        let u = ScalarField::from_real_fn(g, |x| 0.5 * (2.0 * PI * x[0]).cos());
        match residual(&u, 0.0, &d) {
            Err(Error::ConeViolation(w)) => assert!(w.value < 0.0),
            other => panic!("expected a cone violation, got {other:?}"),
        }
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let g = grid(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = data(random_metric(g, &mut rng));
        let u = random_potential(g, &mut rng, 0.01);
        let du = random_potential(g, &mut rng, 0.01);
        let db = 0.3;
        let lin = linearized_residual(&u, &d, &du, db).unwrap();
        let t = 1e-5;
        let r0 = residual(&u, 0.1, &d).unwrap();
        let r1 = residual(&(&u + &du.scale(t)), 0.1 + t * db, &d).unwrap();
        for p in 0..g.len() {
            let fd = (r1.value.values()[p].re - r0.value.values()[p].re) / t;
            let l = lin.values()[p].re;
            assert!((fd - l).abs() <= 1e-6 * (1.0 + fd.abs()), "{fd} vs {l}");
        }
        // constant direction in b only
        let z = linearized_residual(&u, &d, &ScalarField::zeros(g), 1.0).unwrap();
        assert!((&z.shift(2.0)).sup_abs() < 1e-14);
    }

    #[test]
    fn flat_linearization_is_laplacian() {
        let g = grid(2, 8);
        let d = data(Metric::flat(g));
        let du = ScalarField::from_real_fn(g, |x| (2.0 * PI * (x[0] - 2.0 * x[2])).sin());
        let lin = linearized_residual(&ScalarField::zeros(g), &d, &du, 0.0).unwrap();
        let h = hessian(&du).unwrap();
        for p in 0..g.len() {
            let lap = h.entry(p, 0, 0).re + h.entry(p, 1, 1).re;
            assert!((lin.values()[p].re - lap).abs() < 1e-10);
        }
    }

    #[test]
    fn n2_omega_is_monge_ampere() {
        let g = grid(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alpha = random_metric(g, &mut rng);
        let alpha0 = random_metric(g, &mut rng);
        let d = EquationData::new(alpha, alpha0.clone(), ScalarField::zeros(g), 1.0).unwrap();
        let u = random_potential(g, &mut rng, 0.01);
        let omega = omega_from_u(&u, &d).unwrap();
        let direct = alpha0.add(&hessian(&u).unwrap()).unwrap();
        assert!(omega.sub(&direct).unwrap().sup_abs() < 1e-9);
    }

    #[test]
    fn pairing_density_matches_exterior_wedge() {
        let n = 3;
        let g = grid(n, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let omega = random_metric(g, &mut rng);
        let alpha0 = random_metric(g, &mut rng);
        let psi = linalg::hermitian_part(&CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        }));
        let dens = pairing_density(&cofactor(&omega), &cofactor(&alpha0), &psi);
        let p = 17;
        let diff = Form::from_hermitian(&omega.get(p))
            .power(n - 1)
            .sub(&Form::from_hermitian(&alpha0.get(p)).power(n - 1));
        let top = diff.wedge(&Form::from_hermitian(&psi)).top_coefficient();
        // dz ^ dzbar = -2i dx ^ dy
        let want = top * Complex64::new(0.0, -2.0).powu(n as u32);
        assert!((want.re - dens[p]).abs() < 1e-12 * (1.0 + want.re.abs()));
        assert!(want.im.abs() < 1e-12);
    }

    #[test]
    fn aeppli_pairing_vanishes() {
        let g = grid(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let alpha = random_metric(g, &mut rng);
        let d = data(alpha);
        let u = random_potential(g, &mut rng, 0.02);
        let basis = constant_form_basis(3);
        for v in aeppli_pairings(&u, &d, &basis).unwrap() {
            assert!(v.abs() < 1e-8, "{v}");
        }
        for v in aeppli_pairings(&ScalarField::zeros(g), &d, &basis).unwrap() {
            assert!(v.abs() < 1e-14, "{v}");
        }
    }
}
