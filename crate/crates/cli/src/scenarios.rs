//! The scenarios behind `run` and `verify`.

use gauduchon_core::eigen_calculus::c_subsolution_check;
use gauduchon_core::gauduchon_ma::{aeppli_pairings, assemble_gtilde, constant_form_basis, omega_from_u, EquationData};
use gauduchon_core::grid_field::{FieldDump, Metric, ScalarField};
use gauduchon_core::hermitian_geometry::{
    chern_ricci, conformal_rescale, gauduchon_conformal_factor, gauduchon_defect,
};
use gauduchon_core::solver::{continuation_solve_logged, SolverState, TelemetryRecord};
use gauduchon_core::Error;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checks::{identity_suite, manufactured_f, ricci_prescription_defect, Assertion, SuiteOptions};
use crate::config::{ConfigError, MetricSpec, Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Verify => "verify",
        }
    }
}

/// Everything a scenario produces; written out by [`crate::report`].
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Vec<(String, String)>,
    pub assertions: Vec<Assertion>,
    pub telemetry: Vec<String>,
    pub dumps: Vec<(String, FieldDump)>,
    /// Set when a solve or construction failed after the config was accepted.
    pub failure: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.assertions.iter().all(|a| a.passed() != Some(false))
    }

    fn summarize(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

/// Either a configuration problem or a failure to be reported with exit 1.
pub enum ScenarioError {
    Config(ConfigError),
    Failed(Outcome),
}

impl From<ConfigError> for ScenarioError {
    fn from(e: ConfigError) -> Self {
        ScenarioError::Config(e)
    }
}

fn fail(mut outcome: Outcome, what: &str, e: Error) -> ScenarioError {
    outcome.failure = Some(format!("{what}: {e}"));
    ScenarioError::Failed(outcome)
}

/// Equation data of a config; construction failures of accepted metrics are
/// configuration errors.
pub fn equation_data(cfg: &ScenarioConfig, f: ScalarField) -> Result<EquationData, ConfigError> {
    let alpha = cfg.metric(&cfg.alpha)?;
    let alpha0 = match &cfg.alpha0 {
        Some(spec) => cfg.metric(spec)?,
        None => alpha.clone(),
    };
    EquationData::new(alpha, alpha0, f, cfg.coupling).map_err(|e| ConfigError(e.to_string()))
}

pub fn execute(cfg: &ScenarioConfig, mode: Mode) -> Result<Outcome, ScenarioError> {
    let scenario = if mode == Mode::Verify {
        Scenario::IdentitySuite
    } else {
        cfg.scenario
    };
    match scenario {
        Scenario::IdentitySuite => verify(cfg),
        Scenario::ConformalFactor => conformal_factor(cfg),
        Scenario::Manufactured => manufactured(cfg),
        Scenario::FlatKahler => {
            if cfg.alpha != MetricSpec::Flat || cfg.alpha0_spec() != &MetricSpec::Flat {
                return Err(ConfigError("flat_kahler needs flat alpha and alpha0".into()).into());
            }
            let data = equation_data(cfg, cfg.field(&cfg.f))?;
            solve_scenario(cfg, data, |o, s, data| {
                let omega = omega_from_u(&s.u, data)?;
                o.assertions.push(Assertion::at_most(
                    "Gauduchon defect of omega (Kaehler background)",
                    gauduchon_defect(&omega, data.alpha())?,
                    1e-8,
                ));
                if cfg.f.is_empty() {
                    o.assertions.push(Assertion::at_most("sup |u| for F = 0", s.u.sup_abs(), 1e-12));
                    o.assertions.push(Assertion::at_most("|b| for F = 0", s.b.abs(), 1e-12));
                }
                Ok(())
            })
        }
        Scenario::GauduchonTorsion => {
            let data = equation_data(cfg, cfg.field(&cfg.f))?;
            solve_scenario(cfg, data, |o, s, data| {
                o.summarize("torsion_active", !data.z_vanishes());
                let pairings = aeppli_pairings(&s.u, data, &constant_form_basis(data.n()))?;
                o.assertions.push(Assertion::at_most(
                    "Aeppli pairing of omega^(n-1) - alpha0^(n-1) with constant (1,1) forms",
                    pairings.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
                    1e-8,
                ));
                let omega = omega_from_u(&s.u, data)?;
                o.assertions.push(
                    Assertion::reported("Gauduchon defect of omega", gauduchon_defect(&omega, data.alpha())?)
                        .with_note(format!(
                            "alpha0 carries {:.3e}; on coarse grids the spectral ddbar of non-band-limited products \
                             is dominated by aliasing",
                            gauduchon_defect(data.alpha0(), data.alpha())?
                        )),
                );
                Ok(())
            })
        }
    }
}

fn verify(cfg: &ScenarioConfig) -> Result<Outcome, ScenarioError> {
    let data = equation_data(cfg, cfg.field(&cfg.f))?;
    let mut o = Outcome::default();
    o.summarize("alpha_gauduchon_defect", format!("{:.6e}", data.alpha_gauduchon_defect()));
    o.summarize("torsion_active", !data.z_vanishes());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opts = SuiteOptions {
        samples: cfg.samples,
        corrupt_torsion: cfg.corrupt_torsion,
    };
    match identity_suite(&data, &mut rng, &opts) {
        Ok(a) => {
            o.assertions = a;
            Ok(o)
        }
        Err(e) => Err(fail(o, "identity suite", e)),
    }
}

fn conformal_factor(cfg: &ScenarioConfig) -> Result<Outcome, ScenarioError> {
    let raw = cfg.metric(&cfg.alpha)?;
    let g = raw.grid();
    let mut o = Outcome::default();
    let v = match gauduchon_conformal_factor(&raw) {
        Ok(v) => v,
        Err(e) => return Err(fail(o, "conformal factor", e)),
    };
    let step = |o: &mut Outcome| -> gauduchon_core::Result<Metric> {
        let (lo, hi) = v.real_range();
        o.summarize("v_min", format!("{lo:.16e}"));
        o.summarize("v_max", format!("{hi:.16e}"));
        o.assertions.push(Assertion::above("smallest value of v", lo, 0.0));
        o.assertions.push(Assertion::at_most("|mean v - 1|", (v.mean().re - 1.0).abs(), 1e-8));
        let alpha = conformal_rescale(&raw, &v)?;
        o.assertions.push(Assertion::reported("Gauduchon defect of alpha", gauduchon_defect(&raw, &raw)?));
        o.assertions.push(Assertion::at_most(
            "Gauduchon defect of v^(1/(n-1)) alpha",
            gauduchon_defect(&alpha, &alpha)?,
            1e-8,
        ));
        let again = gauduchon_conformal_factor(&alpha)?;
        let one = Complex64::new(1.0, 0.0);
        let drift = again.values().iter().fold(0.0_f64, |m, z| m.max((z - one).norm()));
        o.assertions.push(Assertion::at_most("sup |v - 1| for the corrected metric", drift, 1e-8));
        Ok(alpha)
    };
    match step(&mut o) {
        Ok(alpha) => {
            o.telemetry.push(format!(
                "n={} N={} v_min={} mean_v={:.16e}",
                g.n(),
                g.points_per_axis(),
                o.summary[0].1,
                v.mean().re
            ));
            o.dumps.push(("v".into(), FieldDump::Scalar(v)));
            o.dumps.push(("alpha_gauduchon".into(), FieldDump::Tensor(alpha.into_field())));
            Ok(o)
        }
        Err(e) => Err(fail(o, "conformal factor checks", e)),
    }
}

fn manufactured(cfg: &ScenarioConfig) -> Result<Outcome, ScenarioError> {
    let g = cfg.grid();
    let u_star = cfg.field(&cfg.u_star);
    let base = equation_data(cfg, ScalarField::zeros(g))?;
    let f = manufactured_f(&u_star, &base).map_err(|e| ConfigError(format!("u_star: {e}")))?;
    let data = base.with_f(f).map_err(|e| ConfigError(e.to_string()))?;
    solve_scenario(cfg, data, move |o, s, _| {
        let centered = |u: &ScalarField| u.shift(-u.mean().re);
        let (a, b) = (centered(&s.u), centered(&u_star));
        let du = a.values().iter().zip(b.values()).fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()));
        o.assertions.push(Assertion::at_most("sup |u - u*| after mean alignment", du, 1e-8));
        o.assertions.push(Assertion::at_most("|b| (manufactured solution has b = 0)", s.b.abs(), 1e-8));
        Ok(())
    })
}

/// Solves, runs the checks shared by every solving scenario, then `extra`.
fn solve_scenario<E>(cfg: &ScenarioConfig, data: EquationData, extra: E) -> Result<Outcome, ScenarioError>
where
    E: FnOnce(&mut Outcome, &SolverState, &EquationData) -> gauduchon_core::Result<()>,
{
    let mut o = Outcome::default();
    let mut log: Vec<TelemetryRecord> = Vec::new();
    let result = continuation_solve_logged(&data, &cfg.solver_config(), &mut log);
    o.telemetry = log.iter().map(TelemetryRecord::line).collect();
    let s = match result {
        Ok(s) => s,
        Err(e) => {
            if let Error::StepFailure { last_good, .. } = &e {
                o.summarize("last_good_t", format!("{:.16e}", last_good.t));
                o.dumps.push(("u_last_good".into(), FieldDump::Scalar(last_good.u.clone())));
            }
            return Err(fail(o, "solver", e));
        }
    };
    o.summarize("b", format!("{:.16e}", s.b));
    o.summarize("sup_residual", format!("{:.6e}", s.sup_residual));
    o.summarize("newton_iterations", s.newton_iterations);
    let (lo, hi) = s.u.real_range();
    o.summarize("osc_u", format!("{:.6e}", hi - lo));
    if let Some(d) = s.diagnostics {
        o.summarize("K", format!("{:.6e}", d.k));
        o.summarize("lambda1", format!("{:.6e}", d.lambda1));
        o.summarize("ratio", format!("{:.6e}", d.ratio));
        o.summarize("min_nu", format!("{:.6e}", d.min_nu));
    }

    let checks = |o: &mut Outcome| -> gauduchon_core::Result<()> {
        let gtilde = assemble_gtilde(&s.u, &data)?;
        let min_nu = c_subsolution_check(&gtilde, data.alpha())?.min_eigenvalue;
        o.assertions.push(Assertion::above("smallest eigenvalue of gtilde relative to alpha", min_nu, 0.0));
        let omega = omega_from_u(&s.u, &data)?;
        let lo = omega.log_det();
        let la = data.alpha().log_det();
        let f = data.f();
        let volume = (0..lo.len())
            .map(|p| ((lo[p] - la[p]).exp() - (f.values()[p].re + s.b).exp()).abs())
            .fold(0.0, f64::max);
        o.assertions.push(Assertion::at_most("sup |omega^n / alpha^n - e^(F+b)|", volume, 1e-7));
        o.assertions.push(Assertion::at_most(
            "sup |Ric(omega) - Ric(alpha) + i ddbar F|",
            ricci_prescription_defect(&s.u, f, &data)?,
            1e-6,
        ));
        extra(o, &s, &data)?;
        let ricci = chern_ricci(&omega);
        o.dumps.push(("u".into(), FieldDump::Scalar(s.sup_normalized_u())));
        o.dumps.push(("omega".into(), FieldDump::Tensor(omega.into_field())));
        o.dumps.push(("gtilde".into(), FieldDump::Tensor(gtilde)));
        o.dumps.push(("ricci_omega".into(), FieldDump::Tensor(ricci)));
        Ok(())
    };
    match checks(&mut o) {
        Ok(()) => Ok(o),
        Err(e) => Err(fail(o, "post-solve checks", e)),
    }
}
