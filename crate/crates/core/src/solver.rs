//! Damped Newton iteration for `(u, b)` and a continuation ramp `F_t = t F`.
//!
//! Each Newton step solves the bordered system
//!
//! ```text
//! [ J   -(n-1) ] [ du ]   [ -r ]
//! [ mean    0  ] [ db ] = [  0 ]
//! ```
//!
//! by GMRES, right-preconditioned with the inverse of the same system for the
//! flat Laplacian. Steps are halved until `gtilde` stays positive definite and
//! the sup norm of the residual strictly decreases.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::eigen_calculus::{p_map, subsolution_dichotomy_probe, DichotomyCase};
use crate::error::{Error, Result};
use crate::gauduchon_ma::{assemble_gtilde, residual_with, EquationData, Linearization};
use crate::grid_field::{sup_norms, ScalarField, Spectrum};
use crate::hermitian_geometry::p_alpha_inverse;
use crate::krylov::{gmres, GmresOptions};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Target for the sup norm of the residual.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Step reduction factor during backtracking.
    pub damping: f64,
    pub max_halvings: usize,
    pub continuation_steps: usize,
    /// Smallest continuation step before giving up.
    pub min_step: f64,
    pub krylov_tol: f64,
    pub krylov_max_iters: usize,
    pub krylov_restart: usize,
    /// `kappa` handed to the dichotomy probe in the diagnostics.
    pub probe_kappa: f64,
    /// Compute diagnostics at every accepted continuation step rather than
    /// only at the end.
    pub diagnostics_every_step: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-9,
            max_newton: 50,
            damping: 0.5,
            max_halvings: 20,
            continuation_steps: 10,
            min_step: 1e-4,
            krylov_tol: 1e-10,
            krylov_max_iters: 400,
            krylov_restart: 30,
            probe_kappa: 0.1,
            diagnostics_every_step: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("krylov_tol", self.krylov_tol),
            ("min_step", self.min_step),
            ("probe_kappa", self.probe_kappa),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1), got {}", self.damping)));
        }
        if self.continuation_steps == 0 || self.krylov_max_iters == 0 || self.krylov_restart == 0 {
            return Err(Error::InvalidArgument(
                "continuation_steps, krylov_max_iters and krylov_restart must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn krylov(&self) -> GmresOptions {
        GmresOptions {
            tol: self.krylov_tol,
            max_iters: self.krylov_max_iters,
            restart: self.krylov_restart,
        }
    }
}

/// Counts of the dichotomy probe over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DichotomyTally {
    pub case_a: usize,
    pub case_b: usize,
    pub below_r: usize,
    /// Points where `sum f_k >= n exp(-h/n)` failed.
    pub sum_f_bound_failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsReport {
    /// `1 + sup |du|^2_alpha`
    pub k: f64,
    /// `sup |i ddbar u|_alpha`
    pub lambda1: f64,
    /// `lambda1 / k`
    pub ratio: f64,
    pub osc_u: f64,
    /// Smallest eigenvalue of `gtilde` relative to `alpha`.
    pub min_nu: f64,
    /// `min tr_alpha omega` over the grid.
    pub sum_lambda_min: f64,
    pub dichotomy: DichotomyTally,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    /// Potential with mean zero.
    pub u: ScalarField,
    pub b: f64,
    pub t: f64,
    pub diagnostics: Option<DiagnosticsReport>,
    /// Sup norm of the residual at this state.
    pub sup_residual: f64,
    pub newton_iterations: usize,
}

impl SolverState {
    /// `u = 0` with `b` chosen so that the residual has mean zero.
    pub fn initial(data: &EquationData, f: &ScalarField) -> Result<Self> {
        let grid = data.grid();
        let u = ScalarField::zeros(grid);
        let b = mean_balancing_b(&u, f, data)?;
        Ok(SolverState {
            u,
            b,
            t: 0.0,
            diagnostics: None,
            sup_residual: f64::INFINITY,
            newton_iterations: 0,
        })
    }

    /// `u - sup u`, the normalization `sup u = 0`.
    pub fn sup_normalized_u(&self) -> ScalarField {
        let (_, hi) = self.u.real_range();
        self.u.shift(-hi)
    }
}

/// `b` with `mean(log(det gtilde / det alpha)) = (n-1) mean(F + b)`.
fn mean_balancing_b(u: &ScalarField, f: &ScalarField, data: &EquationData) -> Result<f64> {
    let (r, _) = residual_with(u, 0.0, f, data)?;
    Ok(r.value.mean().re / (data.n() - 1) as f64)
}

/// One line of solver telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub iteration: usize,
    pub sup_residual: f64,
    pub b: f64,
    /// Accepted step length, 0 for the record before the first step.
    pub step: f64,
    pub krylov_iterations: usize,
    pub diagnostics: Option<DiagnosticsReport>,
}

impl TelemetryRecord {
    /// `key=value` pairs separated by spaces, numbers in full precision.
    pub fn line(&self) -> String {
        let mut s = format!(
            "t={:.16e} iteration={} sup_residual={:.16e} b={:.16e} step={:.16e} krylov_iterations={}",
            self.t, self.iteration, self.sup_residual, self.b, self.step, self.krylov_iterations
        );
        if let Some(d) = &self.diagnostics {
            let _ = write!(
                s,
                " K={:.16e} lambda1={:.16e} ratio={:.16e} min_nu={:.16e} osc_u={:.16e} sum_lambda_min={:.16e} \
                 case_a={} case_b={} below_r={} sum_f_bound_failures={}",
                d.k,
                d.lambda1,
                d.ratio,
                d.min_nu,
                d.osc_u,
                d.sum_lambda_min,
                d.dichotomy.case_a,
                d.dichotomy.case_b,
                d.dichotomy.below_r,
                d.dichotomy.sum_f_bound_failures
            );
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Newton's method for the right-hand side `f`, starting from `init`.
pub fn newton_solve(data: &EquationData, f: &ScalarField, init: &SolverState, cfg: &SolverConfig) -> Result<SolverState> {
    newton_solve_logged(data, f, init, cfg, &mut Vec::new())
}

/// [`newton_solve`], appending one telemetry record per iteration.
pub fn newton_solve_logged(
    data: &EquationData,
    f: &ScalarField,
    init: &SolverState,
    cfg: &SolverConfig,
    log: &mut Vec<TelemetryRecord>,
) -> Result<SolverState> {
    cfg.validate()?;
    let grid = data.grid();
    if f.grid() != grid || init.u.grid() != grid {
        return Err(Error::GridMismatch);
    }
    init.u.ensure_real()?;
    let n = grid.n();
    let m = (n - 1) as f64;
    let points = grid.len();

    let u0 = init.u.real_part();
    let mut u = u0.shift(-u0.mean().re);
    let mut b = init.b;
    let (mut res, mut g) = residual_with(&u, b, f, data)?;
    let mut current = sup(&res.value.real_parts());
    let mut step = 0.0;
    let mut krylov_iterations = 0;

    for iteration in 0..=cfg.max_newton {
        log.push(TelemetryRecord {
            t: init.t,
            iteration,
            sup_residual: current,
            b,
            step,
            krylov_iterations,
            diagnostics: None,
        });
        if current <= cfg.newton_tol {
            return Ok(SolverState {
                u,
                b,
                t: init.t,
                diagnostics: None,
                sup_residual: current,
                newton_iterations: iteration,
            });
        }
        if iteration == cfg.max_newton {
            break;
        }

        let lin = Linearization::from_gtilde(&g, data)?;
        let scale = lin.mean_trace() / n as f64;
        let apply = |x: &[f64]| -> Vec<f64> {
            let (w, db) = x.split_at(points);
            let mut out = lin.apply(w, db[0]);
            out.push(mean(w));
            out
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            let (r, s) = r.split_at(points);
            let mr = mean(r);
            let spec = Spectrum::of_real(grid, r);
            let mut out: Vec<f64> = spec
                .synthesize_values(|md| {
                    let l = md.laplacian();
                    Complex64::new(if l == 0.0 { 0.0 } else { 1.0 / (scale * l) }, 0.0)
                })
                .iter()
                .map(|z| z.re + s[0])
                .collect();
            out.push(-mr / m);
            out
        };
        let mut rhs: Vec<f64> = res.value.values().iter().map(|z| -z.re).collect();
        rhs.push(0.0);
        let mut x = vec![0.0; points + 1];
        let outcome = gmres(apply, precond, &rhs, &mut x, cfg.krylov());
        krylov_iterations = outcome.iterations;
        drop(rhs);

        let db = x[points];
        x.truncate(points);
        let shift = mean(&x);
        let du = ScalarField::from_real_values(grid, x.iter().map(|v| v - shift).collect())?;

        let mut s = 1.0;
        let mut accepted = None;
        let mut last_error = None;
        for _ in 0..=cfg.max_halvings {
            let trial = &u + &du.scale(s);
            match residual_with(&trial, b + s * db, f, data) {
                Ok((r, gt)) => {
                    let value = sup(&r.value.real_parts());
                    if value < current {
                        accepted = Some((trial, r, gt, value));
                        break;
                    }
                }
                Err(e @ Error::ConeViolation(_)) => last_error = Some(e),
                Err(e) => return Err(e),
            }
            s *= cfg.damping;
        }
        match accepted {
            Some((trial, r, gt, value)) => {
                u = trial;
                b += s * db;
                res = r;
                g = gt;
                current = value;
                step = s;
            }
            None => {
                return Err(last_error.unwrap_or(Error::NoConvergence {
                    iterations: iteration,
                    residual: current,
                }))
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_newton,
        residual: current,
    })
}

/// Continuation from `t = 0` to `t = 1` along `F_t = t F`.
pub fn continuation_solve(data: &EquationData, cfg: &SolverConfig) -> Result<SolverState> {
    continuation_solve_logged(data, cfg, &mut Vec::new())
}

pub fn continuation_solve_logged(
    data: &EquationData,
    cfg: &SolverConfig,
    log: &mut Vec<TelemetryRecord>,
) -> Result<SolverState> {
    let init = SolverState::initial(data, &data.f().scale(0.0))?;
    continuation_solve_from(data, init, cfg, log)
}

/// Continuation starting from a given potential and constant at `t = 0`.
pub fn continuation_solve_from(
    data: &EquationData,
    init: SolverState,
    cfg: &SolverConfig,
    log: &mut Vec<TelemetryRecord>,
) -> Result<SolverState> {
    cfg.validate()?;
    let f_at = |t: f64| data.f().scale(t);
    let start = SolverState { t: 0.0, ..init };
    let mut state = newton_solve_logged(data, &f_at(0.0), &start, cfg, log)?;
    accept(&mut state, data, cfg, log, false)?;

    let base = 1.0 / cfg.continuation_steps as f64;
    let mut dt = base;
    while state.t < 1.0 {
        let t_next = if 1.0 - state.t <= dt * (1.0 + 1e-12) { 1.0 } else { state.t + dt };
        let f_next = f_at(t_next);
        let trial = SolverState {
            t: t_next,
            b: mean_balancing_b(&state.u, &f_next, data).unwrap_or(state.b),
            ..state.clone()
        };
        match newton_solve_logged(data, &f_next, &trial, cfg, log) {
            Ok(mut next) => {
                accept(&mut next, data, cfg, log, t_next < 1.0)?;
                state = next;
                dt = (dt * 2.0).min(base);
            }
            Err(Error::ConeViolation(_)) | Err(Error::NoConvergence { .. }) => {
                dt *= 0.5;
                if dt < cfg.min_step {
                    return Err(Error::StepFailure {
                        t: state.t,
                        min_step: cfg.min_step,
                        last_good: Box::new(state),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(state)
}

fn accept(
    state: &mut SolverState,
    data: &EquationData,
    cfg: &SolverConfig,
    log: &mut Vec<TelemetryRecord>,
    intermediate: bool,
) -> Result<()> {
    if intermediate && !cfg.diagnostics_every_step {
        return Ok(());
    }
    let d = diagnostics_with(state, data, cfg.probe_kappa)?;
    state.diagnostics = Some(d);
    if let Some(last) = log.last_mut() {
        last.diagnostics = Some(d);
    }
    Ok(())
}

/// Diagnostics of an accepted state, with `kappa = 0.1` for the probe.
pub fn diagnostics(state: &SolverState, data: &EquationData) -> Result<DiagnosticsReport> {
    diagnostics_with(state, data, SolverConfig::default().probe_kappa)
}

pub fn diagnostics_with(state: &SolverState, data: &EquationData, kappa: f64) -> Result<DiagnosticsReport> {
    let grid = data.grid();
    let n = grid.n();
    let alpha = data.alpha();
    let norms = sup_norms(&state.u, alpha)?;
    let (lo, hi) = state.u.real_range();
    let g = assemble_gtilde(&state.u, data)?;
    let big_g = p_alpha_inverse(&g, alpha)?;
    let chi = p_alpha_inverse(data.chi_tilde(), alpha)?;
    let m = (n - 1) as f64;

    // gtilde = P_alpha(G) and omega = (det gtilde / det alpha)^(1/(n-1)) alpha gtilde^{-1} alpha
    // share the alpha-eigenvectors of G, so one eigen-decomposition per point suffices
    let mut min_nu = f64::INFINITY;
    let mut sum_lambda_min = f64::INFINITY;
    let mut tally = DichotomyTally::default();
    for p in 0..grid.len() {
        let a = alpha.small_at(p);
        let (values, v) = linalg::small_generalized_eigen(&big_g.small_at(p), &a).ok_or(Error::Singular)?;
        let lambda = &values[..n];
        let nu = p_map(lambda);
        if let Some(bad) = nu.iter().position(|x| !(*x > 0.0)) {
            return Err(Error::ConeViolation(crate::error::WorstPoint { index: p, value: nu[bad] }));
        }
        min_nu = nu.iter().fold(min_nu, |acc, x| acc.min(*x));
        let vol = (nu.iter().map(|x| x.ln()).sum::<f64>() / m).exp();
        sum_lambda_min = sum_lambda_min.min(nu.iter().map(|x| vol / x).sum());

        // chi in the eigenframe: (V^dagger chi V)_kk
        let c = chi.small_at(p);
        let chi_diag: Vec<f64> = (0..n)
            .map(|k| {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        s += v.a[i][k].conj() * c.a[i][j] * v.a[j][k];
                    }
                }
                s.re
            })
            .collect();
        let h = m * (data.f().values()[p].re * state.t + state.b);
        let probe = subsolution_dichotomy_probe(lambda, &chi_diag, h, kappa)?;
        match probe.case {
            DichotomyCase::CaseA => tally.case_a += 1,
            DichotomyCase::CaseB => tally.case_b += 1,
            DichotomyCase::BelowR => tally.below_r += 1,
        }
        if !probe.sum_f_bound_holds {
            tally.sum_f_bound_failures += 1;
        }
    }
    let k = 1.0 + norms.gradient_sq;
    Ok(DiagnosticsReport {
        k,
        lambda1: norms.hessian,
        ratio: norms.hessian / k,
        osc_u: hi - lo,
        min_nu,
        sum_lambda_min,
        dichotomy: tally,
    })
}
