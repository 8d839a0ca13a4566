//! Writes report.txt, telemetry.txt and the GFLD1 dumps of an outcome.
//!
//! Nothing here depends on the clock or on the config path, so identical
//! configs and seeds give byte-identical files.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use gauduchon_core::grid_field::write_gfld;

use crate::checks::{Assertion, Bound};
use crate::config::ScenarioConfig;
use crate::scenarios::{Mode, Outcome};

fn verdict_label(a: &Assertion) -> &'static str {
    match a.passed() {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "INFO",
    }
}

fn bound_text(b: Bound) -> String {
    match b {
        Bound::AtMost(t) => format!("bound <= {t:.0e}"),
        Bound::Above(t) => format!("must exceed {t:.0e}"),
        Bound::Reported => "reported only".into(),
    }
}

pub fn render_report(cfg: &ScenarioConfig, mode: Mode, outcome: &Outcome) -> String {
    let mut s = String::new();
    let g = cfg.grid();
    let _ = writeln!(s, "gauduchon {} report", mode.name());
    let _ = writeln!(s, "scenario: {}", cfg.scenario.name());
    let _ = writeln!(s, "grid: n = {}, N = {} ({} points)", g.n(), g.points_per_axis(), g.len());
    let _ = writeln!(s, "coupling: {}", cfg.coupling);
    let _ = writeln!(s, "seed: {}", cfg.seed);
    if !outcome.summary.is_empty() {
        let _ = writeln!(s, "\nsummary:");
        for (k, v) in &outcome.summary {
            let _ = writeln!(s, "  {k} = {v}");
        }
    }
    if !outcome.assertions.is_empty() {
        let _ = writeln!(s, "\nassertions:");
        for a in &outcome.assertions {
            let _ = writeln!(s, "  {} {}: {:.3e} ({})", verdict_label(a), a.name, a.value, bound_text(a.bound));
            if let Some(note) = &a.note {
                let _ = writeln!(s, "       {note}");
            }
        }
    }
    if let Some(f) = &outcome.failure {
        let _ = writeln!(s, "\nfailure: {f}");
    }
    let checked: Vec<_> = outcome.assertions.iter().filter_map(Assertion::passed).collect();
    let held = checked.iter().filter(|p| **p).count();
    let _ = writeln!(
        s,
        "\nresult: {} ({held} of {} assertions hold)",
        if outcome.passed() { "PASS" } else { "FAIL" },
        checked.len()
    );
    s
}

fn assertion_line(a: &Assertion) -> String {
    let bound = match a.bound {
        Bound::AtMost(t) => format!("at_most={t:e}"),
        Bound::Above(t) => format!("above={t:e}"),
        Bound::Reported => "reported=true".into(),
    };
    format!(
        "assertion name=\"{}\" value={:.16e} {bound} status={}",
        a.name,
        a.value,
        verdict_label(a).to_lowercase()
    )
}

/// Telemetry lines of the solve, one `assertion` line per assertion and a
/// closing `result` line.
pub fn render_telemetry(cfg: &ScenarioConfig, outcome: &Outcome) -> String {
    let mut s = format!(
        "config scenario={} n={} N={} coupling={} seed={}\n",
        cfg.scenario.name(),
        cfg.n,
        cfg.points_per_axis,
        cfg.coupling,
        cfg.seed
    );
    for line in &outcome.telemetry {
        s.push_str(line);
        s.push('\n');
    }
    for a in &outcome.assertions {
        s.push_str(&assertion_line(a));
        s.push('\n');
    }
    let _ = writeln!(s, "result passed={}", outcome.passed());
    s
}

pub fn write_outputs(dir: &Path, cfg: &ScenarioConfig, mode: Mode, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("report.txt"), render_report(cfg, mode, outcome))?;
    fs::write(dir.join("telemetry.txt"), render_telemetry(cfg, outcome))?;
    for (name, field) in &outcome.dumps {
        let path = dir.join(format!("{name}.gfld"));
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        write_gfld(&mut out, field)?;
        out.flush()?;
    }
    Ok(())
}
