//! Scenario configuration files (TOML).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use gauduchon_core::grid_field::{GridSpec, HermitianTensorField, Metric, ScalarField};
use gauduchon_core::hermitian_geometry::{conformal_rescale, gauduchon_conformal_factor};
use gauduchon_core::linalg::{self, CMatrix};
use gauduchon_core::solver::SolverConfig;
use num_complex::Complex64;
use serde::Deserialize;

/// A configuration problem; reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Manufactured,
    FlatKahler,
    GauduchonTorsion,
    ConformalFactor,
    IdentitySuite,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Manufactured => "manufactured",
            Scenario::FlatKahler => "flat_kahler",
            Scenario::GauduchonTorsion => "gauduchon_torsion",
            Scenario::ConformalFactor => "conformal_factor",
            Scenario::IdentitySuite => "identity_suite",
        }
    }
}

/// `amplitude * cos(2 pi k.x + phase)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amplitude: f64,
    pub frequencies: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

/// A mode added to entry `(i, j)` of a metric and mirrored to `(j, i)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryMode {
    pub i: usize,
    pub j: usize,
    pub amplitude: f64,
    /// Imaginary part of the amplitude; must be zero on the diagonal.
    #[serde(default)]
    pub amplitude_im: f64,
    pub frequencies: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    Flat,
    /// `e^phi I`.
    Conformal { phi: Vec<Mode> },
    /// `I + sum of entry modes`.
    Perturbed { entries: Vec<EntryMode> },
    /// The Gauduchon metric conformal to `base`.
    GauduchonCorrected { base: Box<MetricSpec> },
}

/// Optional overrides of [`SolverConfig`].
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub newton_tol: Option<f64>,
    pub max_newton: Option<usize>,
    pub max_halvings: Option<usize>,
    pub continuation_steps: Option<usize>,
    pub min_step: Option<f64>,
    pub krylov_tol: Option<f64>,
    pub krylov_max_iters: Option<usize>,
    pub krylov_restart: Option<usize>,
    pub probe_kappa: Option<f64>,
    pub diagnostics_every_step: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub points_per_axis: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub coupling: f64,
    /// Right-hand side `F` as a sum of cosine modes.
    #[serde(default)]
    pub f: Vec<Mode>,
    /// Exact solution for the manufactured scenario.
    #[serde(default)]
    pub u_star: Vec<Mode>,
    #[serde(default)]
    pub alpha: MetricSpec,
    /// Defaults to `alpha`.
    pub alpha0: Option<MetricSpec>,
    #[serde(default)]
    pub solver: SolverOverrides,
    pub output_dir: Option<PathBuf>,
    /// Identity checks per suite that sample random points.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Replace the Chern torsion by its symmetrization in the unitary-frame
    /// checks; a negative control that must be reported as a violation.
    #[serde(default)]
    pub corrupt_torsion: bool,
    /// Refuse grids whose estimated working set exceeds this many GiB.
    #[serde(default = "default_memory")]
    pub memory_limit_gib: f64,
}

fn one() -> f64 {
    1.0
}

fn default_samples() -> usize {
    20
}

fn default_memory() -> f64 {
    4.0
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.n, self.points_per_axis).expect("validated")
    }

    /// Rough peak memory of a solve: the torsion tensor plus about a dozen
    /// packed tensor fields.
    pub fn estimated_bytes(&self) -> f64 {
        let points = (self.points_per_axis as f64).powi(2 * self.n as i32);
        let n = self.n as f64;
        points * (16.0 * n * n * n + 12.0 * 8.0 * n * n + 10.0 * 16.0)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        GridSpec::new(self.n, self.points_per_axis).map_err(|e| ConfigError(e.to_string()))?;
        if self.coupling != 1.0 && self.coupling != 2.0 {
            return bad(format!("coupling must be 1 or 2, got {}", self.coupling));
        }
        let gib = self.estimated_bytes() / (1u64 << 30) as f64;
        if gib > self.memory_limit_gib {
            return bad(format!(
                "n = {} with N = {} needs about {gib:.1} GiB, above memory_limit_gib = {}",
                self.n, self.points_per_axis, self.memory_limit_gib
            ));
        }
        self.check_modes("f", &self.f)?;
        self.check_modes("u_star", &self.u_star)?;
        self.check_metric("alpha", &self.alpha)?;
        if let Some(a0) = &self.alpha0 {
            self.check_metric("alpha0", a0)?;
        }
        if self.scenario == Scenario::Manufactured && self.u_star.is_empty() {
            return bad("manufactured scenario needs at least one u_star mode");
        }
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        self.solver_config().validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    fn check_frequencies(&self, what: &str, k: &[i32]) -> Result<(), ConfigError> {
        if k.len() != 2 * self.n {
            return bad(format!("{what}: expected {} frequencies, got {}", 2 * self.n, k.len()));
        }
        // keep referenced modes below half the Nyquist wavenumber
        let limit = (self.points_per_axis / 4) as i32;
        if let Some(bad_k) = k.iter().find(|k| k.abs() >= limit) {
            return bad(format!("{what}: frequency {bad_k} not below N/4 = {limit}"));
        }
        Ok(())
    }

    fn check_modes(&self, what: &str, modes: &[Mode]) -> Result<(), ConfigError> {
        for m in modes {
            self.check_frequencies(what, &m.frequencies)?;
            if !m.amplitude.is_finite() || !m.phase.is_finite() {
                return bad(format!("{what}: non-finite amplitude or phase"));
            }
        }
        Ok(())
    }

    fn check_metric(&self, what: &str, spec: &MetricSpec) -> Result<(), ConfigError> {
        match spec {
            MetricSpec::Flat => Ok(()),
            MetricSpec::Conformal { phi } => self.check_modes(what, phi),
            MetricSpec::Perturbed { entries } => {
                for e in entries {
                    self.check_frequencies(what, &e.frequencies)?;
                    if e.i >= self.n || e.j >= self.n {
                        return bad(format!("{what}: entry ({}, {}) out of range", e.i, e.j));
                    }
                    if e.i == e.j && e.amplitude_im != 0.0 {
                        return bad(format!("{what}: diagonal entry ({}, {}) must be real", e.i, e.j));
                    }
                }
                Ok(())
            }
            MetricSpec::GauduchonCorrected { base } => self.check_metric(what, base),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let o = &self.solver;
        let d = SolverConfig::default();
        SolverConfig {
            newton_tol: o.newton_tol.unwrap_or(d.newton_tol),
            max_newton: o.max_newton.unwrap_or(d.max_newton),
            max_halvings: o.max_halvings.unwrap_or(d.max_halvings),
            continuation_steps: o.continuation_steps.unwrap_or(d.continuation_steps),
            min_step: o.min_step.unwrap_or(d.min_step),
            krylov_tol: o.krylov_tol.unwrap_or(d.krylov_tol),
            krylov_max_iters: o.krylov_max_iters.unwrap_or(d.krylov_max_iters),
            krylov_restart: o.krylov_restart.unwrap_or(d.krylov_restart),
            probe_kappa: o.probe_kappa.unwrap_or(d.probe_kappa),
            diagnostics_every_step: o.diagnostics_every_step.unwrap_or(d.diagnostics_every_step),
            ..d
        }
    }

    pub fn field(&self, modes: &[Mode]) -> ScalarField {
        let modes = modes.to_vec();
        ScalarField::from_real_fn(self.grid(), move |x| modes.iter().map(|m| mode_value(m, x)).sum())
    }

    /// Builds a metric; positivity failures are configuration errors.
    pub fn metric(&self, spec: &MetricSpec) -> Result<Metric, ConfigError> {
        let g = self.grid();
        let n = self.n;
        let field = match spec {
            MetricSpec::Flat => return Ok(Metric::flat(g)),
            MetricSpec::Conformal { phi } => {
                let phi = self.field(phi);
                HermitianTensorField::from_point_fn(g, move |p| {
                    linalg::identity(n) * Complex64::new(phi.values()[p].re.exp(), 0.0)
                })
            }
            MetricSpec::Perturbed { entries } => {
                let entries = entries.clone();
                HermitianTensorField::from_fn(g, move |x| {
                    let mut m: CMatrix = linalg::identity(n);
                    for e in &entries {
                        let c = Complex64::new(e.amplitude, e.amplitude_im) * wave(&e.frequencies, 0.0, x);
                        m[(e.i, e.j)] += c;
                        if e.i != e.j {
                            m[(e.j, e.i)] += c.conj();
                        }
                    }
                    m
                })
            }
            MetricSpec::GauduchonCorrected { base } => {
                let base = self.metric(base)?;
                let v = gauduchon_conformal_factor(&base).map_err(|e| ConfigError(format!("Gauduchon correction: {e}")))?;
                return conformal_rescale(&base, &v).map_err(|e| ConfigError(e.to_string()));
            }
        };
        Metric::new(field).map_err(|e| ConfigError(format!("metric is not positive: {e}")))
    }

    pub fn alpha0_spec(&self) -> &MetricSpec {
        self.alpha0.as_ref().unwrap_or(&self.alpha)
    }
}

fn wave(k: &[i32], phase: f64, x: &[f64]) -> f64 {
    let arg: f64 = k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum();
    (2.0 * PI * arg + phase).cos()
}

fn mode_value(m: &Mode, x: &[f64]) -> f64 {
    m.amplitude * wave(&m.frequencies, m.phase, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "scenario = \"flat_kahler\"\nn = 2\npoints_per_axis = 16\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ScenarioConfig::parse(BASE).unwrap();
        assert_eq!(c.scenario, Scenario::FlatKahler);
        assert_eq!(c.coupling, 1.0);
        assert_eq!(c.alpha, MetricSpec::Flat);
        assert_eq!(c.solver_config(), SolverConfig::default());
    }

    #[test]
    fn rejects_high_modes_and_bad_entries() {
        let high = format!("{BASE}[[f]]\namplitude = 0.1\nfrequencies = [4, 0, 0, 0]\n");
        assert!(ScenarioConfig::parse(&high).is_err());
        let short = format!("{BASE}[[f]]\namplitude = 0.1\nfrequencies = [1, 0]\n");
        assert!(ScenarioConfig::parse(&short).is_err());
        let entry = format!(
            "{BASE}[alpha]\nkind = \"perturbed\"\n[[alpha.entries]]\ni = 0\nj = 0\namplitude = 0.1\namplitude_im = 0.2\nfrequencies = [1, 0, 0, 0]\n"
        );
        assert!(ScenarioConfig::parse(&entry).is_err());
        assert!(ScenarioConfig::parse(&format!("{BASE}coupling = 3.0\n")).is_err());
        assert!(ScenarioConfig::parse("scenario = \"nope\"\nn = 2\npoints_per_axis = 16\n").is_err());
    }

    #[test]
    fn rejects_oversized_grids() {
        let big = "scenario = \"identity_suite\"\nn = 3\npoints_per_axis = 16\n";
        let err = ScenarioConfig::parse(big).unwrap_err();
        assert!(err.0.contains("GiB"), "{err}");
    }

    #[test]
    fn shipped_configs_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut count = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                count += 1;
            }
        }
        assert!(count >= 8);
    }

    #[test]
    fn indefinite_metric_is_a_config_error() {
        let text = format!(
            "{BASE}[alpha]\nkind = \"perturbed\"\n[[alpha.entries]]\ni = 0\nj = 0\namplitude = 1.5\nfrequencies = [1, 0, 0, 0]\n"
        );
        let c = ScenarioConfig::parse(&text).unwrap();
        assert!(c.metric(&c.alpha).is_err());
    }
}
